#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dive/tensor.hpp"

namespace dive {

// N RGB frames with values in [0,1]; tensor layout [N, H, W, 3].
struct FrameVideo {
    Tensor frames;

    FrameVideo() = default;
    explicit FrameVideo(Tensor t) : frames(std::move(t)) {
        if (frames.shape.size() != 4 || frames.shape[3] != 3)
            throw std::invalid_argument("FrameVideo: expected [N,H,W,3]");
        if (frames.shape[0] < 1)
            throw std::invalid_argument("FrameVideo: need at least one frame");
    }

    int64_t frame_count() const { return frames.shape[0]; }
    int64_t height() const { return frames.shape[1]; }
    int64_t width() const { return frames.shape[2]; }

    float* frame_ptr(int64_t n) {
        return frames.data.data() + n * height() * width() * 3;
    }
    const float* frame_ptr(int64_t n) const {
        return frames.data.data() + n * height() * width() * 3;
    }
};

// N latent frames Z, layout [N, H, W, d].
struct LatentVideo {
    Tensor latents;

    LatentVideo() = default;
    explicit LatentVideo(Tensor t) : latents(std::move(t)) {
        if (latents.shape.size() != 4)
            throw std::invalid_argument("LatentVideo: expected [N,H,W,d]");
    }

    int64_t frame_count() const { return latents.shape[0]; }
    int64_t height() const { return latents.shape[1]; }
    int64_t width() const { return latents.shape[2]; }
    int64_t channels() const { return latents.shape[3]; }
};

// Frame directories hold zero-padded numerically named binary PPM files;
// lexicographic order is temporal order.
FrameVideo load_frames(const std::filesystem::path& dir);
void save_frames(const FrameVideo& v, const std::filesystem::path& dir);

// Single-channel 8-bit masks (PGM), 0 = background, 255 = foreground.
void save_mask_frames(const Tensor& mask, const std::filesystem::path& dir);
Tensor load_mask_frames(const std::filesystem::path& dir);  // [N,h,w] in {0,1}

}  // namespace dive
