#pragma once

#include <string>
#include <vector>

#include "dive/assets.hpp"
#include "dive/config.hpp"
#include "dive/denoiser.hpp"
#include "dive/metrics.hpp"
#include "dive/semantic.hpp"

namespace dive {

enum class AblationVariant {
    LambdaSweep,               // trained psi, frozen motion, lambda varied at edit time
    LearnableMotionNoGuidance, // temporal layers trained instead of adapters
    IdentityWith,              // stage 2 with the semantic-guidance branch
    IdentityWithout,           // stage 2 without it
};

struct AblationSpec {
    AblationVariant variant = AblationVariant::LambdaSweep;
    std::vector<float> lambda_values = {0.0f, 0.3f, 1.0f};
    RunConfig base;
};

AblationVariant parse_ablation_variant(const std::string& name);
std::string ablation_variant_name(AblationVariant v);

struct AblationResult {
    std::vector<MethodScores> rows;
    std::string csv;
    // LambdaSweep only: final edited latents per lambda, for the bitwise
    // lambda=0 independence check.
    std::vector<Tensor> edited_latents;
};

// Runs a variant end to end on the toy assets: required training stages, one
// edit per row, metrics per the evaluation schema.
AblationResult run_ablation(const AblationSpec& spec, const Denoiser& den,
                            const Autoencoder& ae, const SemanticBackend& backend,
                            const ToyAssets& assets, const EmbedderInterface& embedder);

}  // namespace dive
