#pragma once

#include <array>
#include <vector>

#include "dive/autodiff.hpp"
#include "dive/checkpoint.hpp"
#include "dive/config.hpp"
#include "dive/denoiser.hpp"
#include "dive/semantic.hpp"

namespace dive {

// f_t + lambda * f_s, element-wise; shapes must match.
Tensor inject_guidance(const Tensor& f_t, const Tensor& f_s, float lambda);

// Four token-wise MLPs, one per denoiser scale, mapping semantic tokens
// (c channels) to the matching feature width d_l. Hidden layers use GELU;
// the output layer starts at zero so an untrained adapter injects nothing.
class GuidanceAdapters {
  public:
    GuidanceAdapters(const AdapterCfg& cfg, int in_channels,
                     std::array<int, 4> out_channels, uint64_t seed);

    int in_channels() const { return in_channels_; }
    const std::array<int, 4>& out_channels() const { return out_channels_; }
    const AdapterCfg& config() const { return cfg_; }

    // tokens: [n, c] -> [n, d_level].
    ad::Value project(int level, const ad::Value& tokens) const;

    // Projects semantic tokens at their native grid, then resizes each level
    // to the denoiser's tap size. Differentiable (adapter training path).
    std::array<ad::Value, 4> project_all(
        const ad::Value& tokens, int64_t frames, int64_t grid_h, int64_t grid_w,
        const std::array<std::array<int64_t, 2>, 4>& sizes) const;

    // Tensor-level convenience for inference.
    GuidanceStack project_guidance(const SemanticFeatureMap& feats,
                                   const std::array<std::array<int64_t, 2>, 4>& sizes,
                                   float weight) const;

    std::vector<ad::Value> trainable_params();

    void store(ArrayArchive& archive, const std::string& prefix = "adapter") const;
    static GuidanceAdapters restore(const ArrayArchive& archive, const AdapterCfg& cfg,
                                    const std::string& prefix = "adapter");

  private:
    GuidanceAdapters() = default;

    struct Layer {
        ad::Value w;  // [fan_in, fan_out]
        ad::Value b;  // [fan_out]
    };

    AdapterCfg cfg_;
    int in_channels_ = 0;
    std::array<int, 4> out_channels_{};
    std::array<std::vector<Layer>, 4> levels_;
};

}  // namespace dive
