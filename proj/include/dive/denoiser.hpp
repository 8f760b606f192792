#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>

#include "dive/autodiff.hpp"
#include "dive/config.hpp"
#include "dive/lora.hpp"
#include "dive/schedule.hpp"
#include "dive/tensor.hpp"
#include "dive/video.hpp"

namespace dive {

struct TextEmbedding {
    std::vector<std::string> tokens;
    Tensor embedding;  // [token_count, d_txt]
};

// Deterministic whitespace tokenizer + hashed per-token embedding table.
TextEmbedding embed_prompt(const std::string& prompt, int dim = 16, uint64_t seed = 0);

// Projected per-scale guidance features with injection weight lambda.
struct GuidanceStack {
    std::array<Tensor, 4> levels;  // level l: [N, H/2^l_grid, W/2^l_grid, d_l] flattened
    std::array<std::array<int64_t, 2>, 4> sizes;  // per-level (h, w)
    float weight = 1.0f;
};

struct DenoiserOutput {
    Tensor eps_pred;                        // [N, H, W, d]
    std::array<Tensor, 4> encoder_features; // pre-injection taps F_l^t, [N*h_l*w_l, d_l]
    std::array<std::array<int64_t, 2>, 4> feature_sizes;
};

// LoRA deltas lifted into autodiff values (transposed for row-major x W use).
struct LoraValueEntry {
    ad::Value down_t;  // [d_in, rank]
    ad::Value up_t;    // [rank, d_out]
    float scale = 1.0f;
};
using LoraValueSet = std::map<std::string, LoraValueEntry>;

LoraValueSet lift_lora(const LoraSet& set, bool trainable);
LoraSet lower_lora(const LoraValueSet& set);

// Toy inflated noise-prediction network: four downsample stages, each with a
// conv block, timestep/text conditioning, a guidance injection point, windowed
// spatial self-attention (LoRA attachment: q/k/v/out) and an optional temporal
// self-attention, followed by a mirrored upsampling path. The prediction is
// sqrt(1 - abar_t) * z_t plus a small learned correction.
class Denoiser {
  public:
    Denoiser(DenoiserCfg cfg, NoiseSchedule sched, int latent_channels);

    struct ForwardResult {
        ad::Value eps;
        std::array<ad::Value, 4> taps;
        std::array<std::array<int64_t, 2>, 4> tap_sizes;
    };

    // Autodiff-visible forward. z is [N*H*W, d]; guidance (when present) holds
    // per-level values shaped [N*h_l*w_l, d_l].
    ForwardResult forward(const ad::Value& z, int64_t frames, int64_t h, int64_t w,
                          int t, const TextEmbedding& text,
                          const std::array<ad::Value, 4>* guidance, float lambda,
                          const LoraValueSet* lora) const;

    DenoiserOutput predict_noise(const LatentVideo& z_t, int t, const TextEmbedding& text,
                                 const GuidanceStack* guidance = nullptr,
                                 const LoraSet* lora = nullptr) const;

    const DenoiserCfg& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    int latent_channels() const { return latent_channels_; }

    // Expected per-level tap sizes for a given latent size (the scale ladder).
    static std::array<std::array<int64_t, 2>, 4> tap_ladder(int64_t h, int64_t w);

    const std::map<std::string, ad::Value>& params() const { return params_; }
    std::map<std::string, ad::Value>& mutable_params() { return params_; }
    // Marks the temporal-attention parameters trainable (ablation use).
    void set_motion_trainable(bool trainable);
    bool motion_layers_enabled() const { return cfg_.motion_layers_enabled; }
    void set_motion_layers_enabled(bool enabled) { cfg_.motion_layers_enabled = enabled; }

    // sha256 over all parameter buffers in name order.
    std::string weight_hash() const;

    // Deep copy: fresh leaf nodes, so training the clone never touches *this.
    Denoiser clone() const;

  private:
    ad::Value lora_proj(const ad::Value& x, const std::string& name,
                        const LoraValueSet* lora) const;
    ad::Value spatial_attention(const ad::Value& x, int level, int64_t frames,
                                int64_t h, int64_t w, const LoraValueSet* lora) const;
    ad::Value temporal_attention(const ad::Value& x, int level, int64_t frames,
                                 int64_t h, int64_t w) const;
    const ad::Value& p(const std::string& name) const;

    DenoiserCfg cfg_;
    NoiseSchedule sched_;
    int latent_channels_;
    std::map<std::string, ad::Value> params_;
};

// Returns a copy with temporal (motion) layers switched on and configured.
Denoiser inflate_with_motion_layers(const Denoiser& base, const DenoiserCfg& cfg);

}  // namespace dive
