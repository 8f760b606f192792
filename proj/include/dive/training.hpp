#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dive/autodiff.hpp"
#include "dive/config.hpp"
#include "dive/denoiser.hpp"
#include "dive/guidance.hpp"
#include "dive/semantic.hpp"
#include "dive/video.hpp"

namespace dive {

class Adam {
  public:
    Adam(std::vector<ad::Value> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    void step();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

  private:
    std::vector<ad::Value> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// Mean squared error over masked rows only: sum(rowmask * (pred - target)^2)
// normalized by (masked row count * channels). rowmask is [rows] in {0,1}.
ad::Value masked_noise_loss(const ad::Value& eps_pred, const Tensor& eps_target,
                            const Tensor& rowmask);

struct TrainingReport {
    std::vector<float> losses;        // one entry per iteration
    std::vector<int> timesteps;       // the t drawn for each iteration
    float probe_loss_before = 0.0f;   // fixed probe batch, before training
    float probe_loss_after = 0.0f;    // same batch, after training
};

// "iteration,t,loss" with one row per iteration.
void write_loss_csv(const std::filesystem::path& path, const TrainingReport& report);

// Stage 1: fits the guidance adapters on one clip. The denoiser is frozen;
// only the adapter MLPs receive gradients. Timesteps are drawn from the
// upper half of the schedule and the loss is restricted to the subject mask.
TrainingReport train_motion_adapters(const RunConfig& cfg, const Denoiser& denoiser,
                                     GuidanceAdapters& adapters, const LatentVideo& z0,
                                     const SemanticFeatureMap& subject_tokens,
                                     const Tensor& token_mask);

// Ablation variant: trains the temporal attention layers themselves, with no
// guidance injection. The denoiser must be a clone; its motion parameters are
// switched to trainable in place.
TrainingReport train_motion_layers(const RunConfig& cfg, Denoiser& denoiser,
                                   const LatentVideo& z0, const Tensor& token_mask);

// "a photo of <identifier> <class_word>"; the identifier is optional.
std::string build_identity_prompt(const std::string& identifier,
                                  const std::string& class_word);

// Stage 2: registers subject identity from reference stills. Trains the LoRA
// deltas on the spatial attention projections and (unless disabled) a second
// adapter set fusing the references' semantic tokens at the feature level.
// Temporal layers are bypassed; timesteps cover the full schedule.
TrainingReport register_identity(const RunConfig& cfg, const Denoiser& denoiser,
                                 GuidanceAdapters* phi, LoraSet& lora,
                                 const LatentVideo& ref_latents,
                                 const SemanticFeatureMap& ref_tokens);

}  // namespace dive
