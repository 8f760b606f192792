#include "dive/assets.hpp"

#include <algorithm>
#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

namespace {

// Paints the square's 4x4-cell texture with its top-left corner at (x0, y0).
void paint_square(Tensor& frame, const Tensor& texture, int side, int x0, int y0,
                  const float* tint) {
    const int64_t h = frame.shape[0], w = frame.shape[1];
    for (int dy = 0; dy < side; ++dy)
        for (int dx = 0; dx < side; ++dx) {
            const int64_t y = y0 + dy, x = x0 + dx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            const int cell = (dy / 4) * (side / 4) + dx / 4;
            for (int c = 0; c < 3; ++c)
                frame.data[(y * w + x) * 3 + c] =
                    std::clamp(texture.data[cell * 3 + c] * tint[c], 0.0f, 1.0f);
        }
}

}  // namespace

ToyAssets make_toy_assets(const Autoencoder& ae, uint64_t seed, int frames, int size,
                          int references) {
    if (frames < 1 || size < 16) throw std::invalid_argument("make_toy_assets: too small");
    const int side = size * 3 / 8;  // 24 px at size 64
    const int step = 2;
    const int y0 = (size - side) / 2;
    const int x_start = size / 16;

    auto rng = make_rng(seed, "assets");
    // Static background: constant color per 8x8 block.
    const int blocks = size / 8;
    Tensor bg_colors = uniform_tensor({blocks * blocks, 3}, rng, 0.1f, 0.9f);
    Tensor background({static_cast<int64_t>(size), static_cast<int64_t>(size), 3});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c)
                background.data[(y * size + x) * 3 + c] =
                    bg_colors.data[((y / 8) * blocks + x / 8) * 3 + c];

    const int cells = side / 4;
    Tensor texture = uniform_tensor({cells * cells, 3}, rng, 0.0f, 1.0f);

    ToyAssets a;
    Tensor vid({frames, size, size, 3});
    a.pixel_mask = Tensor({frames, static_cast<int64_t>(size), static_cast<int64_t>(size)});
    const float plain[3] = {1.0f, 1.0f, 1.0f};
    for (int f = 0; f < frames; ++f) {
        Tensor frame = background;
        const int x0 = x_start + f * step;
        if (x0 + side > size)
            throw std::invalid_argument("make_toy_assets: square leaves the frame");
        paint_square(frame, texture, side, x0, y0, plain);
        std::copy(frame.data.begin(), frame.data.end(),
                  vid.data.begin() + static_cast<size_t>(f) * size * size * 3);
        for (int dy = 0; dy < side; ++dy)
            for (int dx = 0; dx < side; ++dx)
                a.pixel_mask.data[(static_cast<int64_t>(f) * size + y0 + dy) * size +
                                  x0 + dx] = 1.0f;
    }
    a.video = ae.project(FrameVideo(std::move(vid)));

    for (int r = 0; r < references; ++r) {
        auto tint_rng = make_rng(seed, "assets:ref:" + std::to_string(r));
        std::uniform_real_distribution<float> dist(0.6f, 1.0f);
        float tint[3] = {dist(tint_rng), dist(tint_rng), dist(tint_rng)};
        Tensor frame({1, static_cast<int64_t>(size), static_cast<int64_t>(size), 3});
        Tensor flat({static_cast<int64_t>(size), static_cast<int64_t>(size), 3},
                    std::vector<float>(background.data));
        paint_square(flat, texture, side, (size - side) / 2, y0, tint);
        std::copy(flat.data.begin(), flat.data.end(), frame.data.begin());
        FrameVideo proj = ae.project(FrameVideo(std::move(frame)));
        a.reference_frames.push_back(
            Tensor({static_cast<int64_t>(size), static_cast<int64_t>(size), 3},
                   std::move(proj.frames.data)));
    }
    return a;
}

}  // namespace dive
