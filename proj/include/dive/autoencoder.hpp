#pragma once

#include "dive/tensor.hpp"
#include "dive/video.hpp"

namespace dive {

struct AutoencoderConfig {
    int patch = 8;            // pixels per latent token side
    int latent_channels = 4;  // d
};

// Fixed (untrained) orthonormal per-patch linear codec standing in for the
// VAE. Each non-overlapping patch x patch x 3 block is projected onto d
// orthonormal directions; decode applies the transpose and clamps to [0,1].
// The first three directions are the per-channel patch means, so any frame
// that is constant per block round-trips exactly.
class Autoencoder {
  public:
    explicit Autoencoder(AutoencoderConfig cfg = {});

    LatentVideo encode_video(const FrameVideo& v) const;
    FrameVideo decode_video(const LatentVideo& z) const;

    // decode(encode(v)): projection of each frame onto the codec's range.
    FrameVideo project(const FrameVideo& v) const { return decode_video(encode_video(v)); }

    const AutoencoderConfig& config() const { return cfg_; }
    const Tensor& basis() const { return basis_; }  // [d, patch*patch*3], rows orthonormal

  private:
    AutoencoderConfig cfg_;
    Tensor basis_;
};

}  // namespace dive
