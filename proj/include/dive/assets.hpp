#pragma once

#include <vector>

#include "dive/autoencoder.hpp"
#include "dive/tensor.hpp"
#include "dive/video.hpp"

namespace dive {

// Bundled synthetic clip: a textured square translating 2 px per frame over a
// static block-noise background, plus reference stills of the same square in
// shifted colorways. Everything is pre-projected into the codec's range so
// encode/decode round-trips exactly.
struct ToyAssets {
    FrameVideo video;
    Tensor pixel_mask;                     // [N, H, W] in {0,1}, the square
    std::vector<Tensor> reference_frames;  // each [H, W, 3]
};

ToyAssets make_toy_assets(const Autoencoder& ae, uint64_t seed = 0, int frames = 16,
                          int size = 64, int references = 3);

}  // namespace dive
