#pragma once

#include <string>
#include <vector>

#include "dive/autoencoder.hpp"
#include "dive/config.hpp"
#include "dive/denoiser.hpp"
#include "dive/guidance.hpp"
#include "dive/semantic.hpp"
#include "dive/video.hpp"

namespace dive {

// Whole-token replacement of every occurrence of `source` in `prompt`.
// Throws if the source word does not appear.
std::string swap_subject_word(const std::string& prompt, const std::string& source,
                              const std::string& target);

// m * edited + (1 - m) * source, with off-mask rows copied bitwise from the
// source. rowmask is [rows] in {0,1}; tensors are [rows, d] views.
Tensor blend_latents(const Tensor& edited, const Tensor& source, const Tensor& rowmask);

// DDIM inversion of one clip under the given prompt (no guidance, no LoRA).
// Returns the latent state at every inference timestep: trajectory[0] is the
// clean input, trajectory[k] the state at timesteps[k-1]. Each inversion
// step is refined by fixed-point iteration so a subsequent denoising pass
// retraces the path closely.
struct InversionResult {
    std::vector<Tensor> trajectory;  // length num_steps + 1, each [N,H,W,d]
    std::vector<int> timesteps;      // ascending, 1-based
};

InversionResult invert_video(const RunConfig& cfg, const Denoiser& den,
                             const LatentVideo& z0, const std::string& prompt,
                             int refine_iters = 2);

struct EditStepLog {
    int t = 0;                // timestep the step consumed
    bool injected = false;    // guidance participated
    double ms = 0.0;
};

struct EditResult {
    FrameVideo frames;            // decoded edited clip
    LatentVideo edited_latents;   // final z0 after denoising
    std::vector<int> timesteps;
    std::string source_prompt;
    std::string target_prompt;
    std::vector<EditStepLog> steps;    // in execution order (t descending)
    std::vector<Tensor> step_latents;  // post-blend latent after each step
    InversionResult inversion;         // stored source trajectory
    std::string manifest_json;         // run manifest (config echo, hashes, timing)
};

// Full edit: encode, invert under the source prompt, swap the subject word,
// then denoise with feature injection (early steps only), LoRA identity
// deltas, and per-step latent blending against the inversion trajectory.
EditResult edit_video(const RunConfig& cfg, const Denoiser& den, const Autoencoder& ae,
                      const GuidanceAdapters* adapters, const LoraSet* lora,
                      const FrameVideo& video, const SemanticFeatureMap& subject_tokens,
                      const Tensor& token_mask);

}  // namespace dive
