#include "dive/semantic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ToySemanticBackend::ToySemanticBackend(int patch, int channels, uint64_t seed)
    : patch_(patch), channels_(channels) {
    if (patch < 1 || channels < 1)
        throw std::invalid_argument("ToySemanticBackend: bad config");
    auto rng = make_rng(seed, "semantic_backend");
    const int dim = patch * patch * 3;
    proj_ = gaussian_tensor({dim, channels}, rng, 1.0f / std::sqrt(static_cast<float>(dim)));
    const float s = 1.0f / std::sqrt(static_cast<float>(channels));
    wq_ = gaussian_tensor({channels, channels}, rng, s);
    wk_ = gaussian_tensor({channels, channels}, rng, s);
    wv_ = gaussian_tensor({channels, channels}, rng, s);
}

SemanticFeatureMap ToySemanticBackend::extract(const FrameVideo& v) const {
    const int p = patch_, c = channels_;
    const int64_t n = v.frame_count(), hp = v.height(), wp = v.width();
    if (hp % p != 0 || wp % p != 0)
        throw std::invalid_argument(
            "semantic extract: frame dims not divisible by patch " + std::to_string(p));
    const int64_t h = hp / p, w = wp / p, tokens = h * w;
    const int dim = p * p * 3;

    Tensor out({n, h, w, c});
    MatRM patch_mat(tokens, dim);
    Eigen::Map<const MatRM> P(proj_.data.data(), dim, c);
    Eigen::Map<const MatRM> Wq(wq_.data.data(), c, c);
    Eigen::Map<const MatRM> Wk(wk_.data.data(), c, c);
    Eigen::Map<const MatRM> Wv(wv_.data.data(), c, c);
    const float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(c));

    for (int64_t f = 0; f < n; ++f) {
        const float* src = v.frame_ptr(f);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                float* row = patch_mat.data() + (y * w + x) * dim;
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        for (int ch = 0; ch < 3; ++ch)
                            row[(py * p + px) * 3 + ch] =
                                src[((y * p + py) * wp + x * p + px) * 3 + ch];
            }
        MatRM feat = patch_mat * P;  // [tokens, c]
        // One attention mixing pass over the whole token grid.
        MatRM q = feat * Wq, k = feat * Wk, vv = feat * Wv;
        MatRM scores = q * k.transpose() * inv_sqrt_c;
        for (int64_t i = 0; i < tokens; ++i) {
            const float mx = scores.row(i).maxCoeff();
            scores.row(i) = (scores.row(i).array() - mx).exp();
            scores.row(i) /= scores.row(i).sum();
        }
        MatRM mixed = feat + scores * vv;
        std::copy_n(mixed.data(), tokens * c, out.data.data() + f * tokens * c);
    }
    SemanticFeatureMap m;
    m.features = std::move(out);
    return m;
}

SemanticFeatureMap extract_semantic_features(const FrameVideo& v,
                                             const SemanticBackend& backend) {
    return backend.extract(v);
}

PCABasis fit_pca(const SemanticFeatureMap& f, int k) {
    const int64_t tokens = f.tokens(), c = f.channels();
    if (k < 1 || k > c) throw std::invalid_argument("fit_pca: k out of [1, c]");
    if (tokens < k) throw std::invalid_argument("fit_pca: fewer tokens than components");

    Eigen::Map<const MatRM> X(f.features.data.data(), tokens, c);
    Eigen::RowVectorXf mean = X.colwise().mean();
    MatRM centered = X.rowwise() - mean;
    Eigen::MatrixXf cov =
        (centered.transpose() * centered).cast<float>() / static_cast<float>(tokens - 1);
    if (cov.norm() < 1e-12f)
        throw std::invalid_argument("fit_pca: zero-variance input");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXf> es(cov);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("fit_pca: eigendecomposition failed");

    PCABasis basis;
    basis.mean = Tensor({c});
    for (int64_t j = 0; j < c; ++j) basis.mean.data[j] = mean(j);
    basis.components = Tensor({k, c});
    basis.explained_variance = Tensor({k});
    // SelfAdjointEigenSolver returns ascending eigenvalues.
    for (int r = 0; r < k; ++r) {
        const int64_t src = c - 1 - r;
        basis.explained_variance.data[r] = std::max(0.0f, es.eigenvalues()(src));
        for (int64_t j = 0; j < c; ++j)
            basis.components.data[r * c + j] = es.eigenvectors()(j, src);
    }
    return basis;
}

float otsu_threshold(const std::vector<float>& scores) {
    if (scores.empty()) throw std::invalid_argument("otsu_threshold: empty scores");
    const auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
    const float mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) return mn;  // constant scores; caller detects degeneracy

    constexpr int kBins = 256;
    std::vector<int64_t> hist(kBins, 0);
    const float scale = (kBins - 1) / (mx - mn);
    for (float s : scores) {
        int b = static_cast<int>((s - mn) * scale);
        hist[std::clamp(b, 0, kBins - 1)]++;
    }
    const double total = static_cast<double>(scores.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);

    double best = -1.0;
    int best_bin = 0;
    double w0 = 0.0, sum0 = 0.0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[b];
        sum0 += b * static_cast<double>(hist[b]);
        if (w0 == 0.0) continue;
        const double w1 = total - w0;
        if (w1 == 0.0) break;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    // Threshold at the upper edge of the chosen bin.
    return mn + (best_bin + 1) / scale;
}

ForegroundMask foreground_mask(const SemanticFeatureMap& f, const PCABasis& basis,
                               const ThresholdPolicy& policy) {
    if (basis.rank() < 1)
        throw std::invalid_argument("foreground_mask: basis rank must be >= 1");
    const int64_t tokens = f.tokens(), c = f.channels();
    if (basis.components.shape[1] != c)
        throw std::invalid_argument("foreground_mask: channel mismatch");

    std::vector<float> scores(static_cast<size_t>(tokens));
    for (int64_t i = 0; i < tokens; ++i) {
        const float* x = &f.features.data[i * c];
        float acc = 0.0f;
        for (int64_t j = 0; j < c; ++j)
            acc += (x[j] - basis.mean.data[j]) * basis.components.data[j];
        scores[i] = acc;
    }

    float thr;
    if (policy.method == ThresholdMethod::Otsu) {
        thr = otsu_threshold(scores);
    } else {
        std::vector<float> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        const auto idx = static_cast<size_t>(
            std::clamp(policy.quantile, 0.0, 1.0) * (sorted.size() - 1));
        thr = sorted[idx];
    }

    std::vector<uint8_t> above(static_cast<size_t>(tokens));
    int64_t n_above = 0;
    for (int64_t i = 0; i < tokens; ++i) {
        above[i] = scores[i] > thr ? 1 : 0;
        n_above += above[i];
    }
    if (n_above == 0 || n_above == tokens)
        throw std::runtime_error("foreground_mask: degenerate mask (all one class)");

    bool fg_is_above;
    if (policy.orientation == SignOrientation::Positive) {
        fg_is_above = true;
    } else if (policy.orientation == SignOrientation::Negative) {
        fg_is_above = false;
    } else {
        // Foreground = class with the larger mean feature norm.
        double norm_above = 0.0, norm_below = 0.0;
        for (int64_t i = 0; i < tokens; ++i) {
            const float* x = &f.features.data[i * c];
            double nrm = 0.0;
            for (int64_t j = 0; j < c; ++j) nrm += static_cast<double>(x[j]) * x[j];
            nrm = std::sqrt(nrm);
            (above[i] ? norm_above : norm_below) += nrm;
        }
        norm_above /= static_cast<double>(n_above);
        norm_below /= static_cast<double>(tokens - n_above);
        fg_is_above = norm_above >= norm_below;
    }

    ForegroundMask out;
    out.mask = Tensor({f.frame_count(), f.grid_h(), f.grid_w()});
    for (int64_t i = 0; i < tokens; ++i)
        out.mask.data[i] = (above[i] == (fg_is_above ? 1 : 0)) ? 1.0f : 0.0f;
    return out;
}

SemanticFeatureMap masked_foreground(const SemanticFeatureMap& f, const ForegroundMask& m) {
    if (f.frame_count() != m.frame_count() || f.grid_h() != m.grid_h() ||
        f.grid_w() != m.grid_w())
        throw std::invalid_argument("masked_foreground: shape mismatch");
    SemanticFeatureMap out = f;
    const int64_t tokens = f.tokens(), c = f.channels();
    for (int64_t i = 0; i < tokens; ++i)
        if (m.mask.data[i] < 0.5f)
            std::fill_n(&out.features.data[i * c], c, 0.0f);
    return out;
}

FrameVideo pca_rgb_visualization(const SemanticFeatureMap& f, const PCABasis& basis3,
                                 const ForegroundMask* mask) {
    if (basis3.rank() < 3)
        throw std::invalid_argument("pca_rgb_visualization: needs a rank-3 basis");
    const int64_t tokens = f.tokens(), c = f.channels();
    Tensor rgb({f.frame_count(), f.grid_h(), f.grid_w(), 3});
    for (int64_t i = 0; i < tokens; ++i) {
        const float* x = &f.features.data[i * c];
        for (int ch = 0; ch < 3; ++ch) {
            float acc = 0.0f;
            for (int64_t j = 0; j < c; ++j)
                acc += (x[j] - basis3.mean.data[j]) * basis3.components.data[ch * c + j];
            rgb.data[i * 3 + ch] = acc;
        }
    }
    // Joint min-max normalization per channel across all frames.
    for (int ch = 0; ch < 3; ++ch) {
        float mn = rgb.data[ch], mx = rgb.data[ch];
        for (int64_t i = 0; i < tokens; ++i) {
            mn = std::min(mn, rgb.data[i * 3 + ch]);
            mx = std::max(mx, rgb.data[i * 3 + ch]);
        }
        if (mx > mn) {
            // divide (rather than multiply by a reciprocal) so the channel
            // extremes land on exactly 0 and 1
            const float span = mx - mn;
            for (int64_t i = 0; i < tokens; ++i)
                rgb.data[i * 3 + ch] = (rgb.data[i * 3 + ch] - mn) / span;
        } else {
            for (int64_t i = 0; i < tokens; ++i) rgb.data[i * 3 + ch] = 0.5f;
        }
    }
    if (mask) {
        for (int64_t i = 0; i < tokens; ++i)
            if (mask->mask.data[i] < 0.5f) std::fill_n(&rgb.data[i * 3], 3, 0.0f);
    }
    return FrameVideo(std::move(rgb));
}

Tensor resample_mask(const Tensor& mask, int64_t out_h, int64_t out_w) {
    if (mask.shape.size() != 3)
        throw std::invalid_argument("resample_mask: expected [N,h,w]");
    const int64_t n = mask.shape[0], h = mask.shape[1], w = mask.shape[2];
    Tensor out({n, out_h, out_w});
    for (int64_t f = 0; f < n; ++f)
        for (int64_t y = 0; y < out_h; ++y)
            for (int64_t x = 0; x < out_w; ++x) {
                const int64_t sy = std::min(h - 1, y * h / out_h + (h / out_h) / 2);
                const int64_t sx = std::min(w - 1, x * w / out_w + (w / out_w) / 2);
                out.data[(f * out_h + y) * out_w + x] =
                    mask.data[(f * h + sy) * w + sx] > 0.5f ? 1.0f : 0.0f;
            }
    return out;
}

}  // namespace dive
