#include "dive/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

Autoencoder::Autoencoder(AutoencoderConfig cfg) : cfg_(cfg) {
    const int p = cfg_.patch, d = cfg_.latent_channels;
    const int dim = p * p * 3;
    if (p < 1 || d < 1 || d > dim)
        throw std::invalid_argument("Autoencoder: invalid patch/channel config");
    basis_ = Tensor({d, dim});

    // Rows 0..2: per-channel patch means.
    const float inv = 1.0f / static_cast<float>(p);
    for (int c = 0; c < std::min(3, d); ++c)
        for (int k = 0; k < p * p; ++k) basis_.data[c * dim + k * 3 + c] = inv;

    // Remaining rows: Gram-Schmidt over a frozen gaussian draw.
    auto rng = make_rng(0, "autoencoder_basis");
    for (int r = std::min(3, d); r < d; ++r) {
        float* row = &basis_.data[r * dim];
        while (true) {
            for (int k = 0; k < dim; ++k)
                row[k] = std::normal_distribution<float>(0.0f, 1.0f)(rng);
            for (int q = 0; q < r; ++q) {
                const float* prev = &basis_.data[q * dim];
                float dot = 0.0f;
                for (int k = 0; k < dim; ++k) dot += row[k] * prev[k];
                for (int k = 0; k < dim; ++k) row[k] -= dot * prev[k];
            }
            float norm = 0.0f;
            for (int k = 0; k < dim; ++k) norm += row[k] * row[k];
            if (norm > 1e-6f) {
                norm = 1.0f / std::sqrt(norm);
                for (int k = 0; k < dim; ++k) row[k] *= norm;
                break;
            }
        }
    }
}

LatentVideo Autoencoder::encode_video(const FrameVideo& v) const {
    const int p = cfg_.patch, d = cfg_.latent_channels;
    const int64_t n = v.frame_count(), hp = v.height(), wp = v.width();
    if (hp % p != 0 || wp % p != 0)
        throw std::invalid_argument("encode_video: frame dims not divisible by patch " +
                                    std::to_string(p));
    const int64_t h = hp / p, w = wp / p;
    const int dim = p * p * 3;
    Tensor out({n, h, w, d});
    std::vector<float> patch(static_cast<size_t>(dim));
    for (int64_t f = 0; f < n; ++f) {
        const float* src = v.frame_ptr(f);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        for (int c = 0; c < 3; ++c)
                            patch[(py * p + px) * 3 + c] =
                                src[((y * p + py) * wp + x * p + px) * 3 + c];
                float* z = &out.data[((f * h + y) * w + x) * d];
                for (int r = 0; r < d; ++r) {
                    const float* row = &basis_.data[r * dim];
                    float acc = 0.0f;
                    for (int k = 0; k < dim; ++k) acc += row[k] * patch[k];
                    z[r] = acc;
                }
            }
    }
    return LatentVideo(std::move(out));
}

FrameVideo Autoencoder::decode_video(const LatentVideo& z) const {
    const int p = cfg_.patch, d = cfg_.latent_channels;
    if (z.channels() != d)
        throw std::invalid_argument("decode_video: latent channel mismatch");
    const int64_t n = z.frame_count(), h = z.height(), w = z.width();
    const int64_t hp = h * p, wp = w * p;
    const int dim = p * p * 3;
    Tensor out({n, hp, wp, 3});
    std::vector<float> patch(static_cast<size_t>(dim));
    for (int64_t f = 0; f < n; ++f) {
        float* dst = out.data.data() + f * hp * wp * 3;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const float* zz = &z.latents.data[((f * h + y) * w + x) * d];
                std::fill(patch.begin(), patch.end(), 0.0f);
                for (int r = 0; r < d; ++r) {
                    const float* row = &basis_.data[r * dim];
                    for (int k = 0; k < dim; ++k) patch[k] += zz[r] * row[k];
                }
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        for (int c = 0; c < 3; ++c) {
                            float v = patch[(py * p + px) * 3 + c];
                            v = std::min(1.0f, std::max(0.0f, v));
                            dst[((y * p + py) * wp + x * p + px) * 3 + c] = v;
                        }
            }
    }
    return FrameVideo(std::move(out));
}

}  // namespace dive
