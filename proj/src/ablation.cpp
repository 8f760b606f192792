#include "dive/ablation.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "dive/inference.hpp"
#include "dive/rng.hpp"
#include "dive/training.hpp"

namespace dive {

AblationVariant parse_ablation_variant(const std::string& name) {
    if (name == "lambda_sweep") return AblationVariant::LambdaSweep;
    if (name == "learnable_motion_no_guidance")
        return AblationVariant::LearnableMotionNoGuidance;
    if (name == "identity_with") return AblationVariant::IdentityWith;
    if (name == "identity_without") return AblationVariant::IdentityWithout;
    throw std::invalid_argument("unknown ablation variant \"" + name + "\"");
}

std::string ablation_variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::LambdaSweep: return "lambda_sweep";
        case AblationVariant::LearnableMotionNoGuidance:
            return "learnable_motion_no_guidance";
        case AblationVariant::IdentityWith: return "identity_with";
        case AblationVariant::IdentityWithout: return "identity_without";
    }
    throw std::logic_error("bad variant");
}

namespace {

struct PreparedClip {
    SemanticFeatureMap tokens;         // masked foreground tokens
    Tensor token_mask;                 // [N, gh, gw]
};

PreparedClip prepare_clip(const SemanticBackend& backend, const FrameVideo& video) {
    SemanticFeatureMap feats = extract_semantic_features(video, backend);
    ForegroundMask fm = foreground_mask(feats, fit_pca(feats, 1));
    PreparedClip p;
    p.tokens = masked_foreground(feats, fm);
    p.token_mask = fm.mask;
    return p;
}

}  // namespace

AblationResult run_ablation(const AblationSpec& spec, const Denoiser& den,
                            const Autoencoder& ae, const SemanticBackend& backend,
                            const ToyAssets& assets, const EmbedderInterface& embedder) {
    const RunConfig& base = spec.base;
    AblationResult res;
    PreparedClip clip = prepare_clip(backend, assets.video);
    const LatentVideo z0 = ae.encode_video(assets.video);

    auto score_row = [&](const std::string& name, const EditResult& edit,
                         bool with_image) {
        MethodScores row;
        row.method = name;
        row.text_alignment = text_alignment(edit.frames, edit.target_prompt, embedder);
        if (with_image)
            row.image_alignment =
                image_alignment(edit.frames, assets.reference_frames, embedder);
        row.temporal_consistency = temporal_consistency(edit.frames, embedder);
        res.rows.push_back(row);
    };

    switch (spec.variant) {
        case AblationVariant::LambdaSweep: {
            if (spec.lambda_values.empty())
                throw std::invalid_argument("lambda_sweep: need at least one lambda");
            GuidanceAdapters psi(base.adapter, static_cast<int>(clip.tokens.channels()),
                                 base.denoiser.channels, derive_seed(base.seed, "psi"));
            train_motion_adapters(base, den, psi, z0, clip.tokens, clip.token_mask);
            for (float lambda : spec.lambda_values) {
                RunConfig cfg = base;
                cfg.edit.lambda = lambda;
                EditResult edit = edit_video(cfg, den, ae, &psi, nullptr, assets.video,
                                             clip.tokens, clip.token_mask);
                std::ostringstream name;
                name << "lambda=" << std::fixed << std::setprecision(1) << lambda
                     << ", frozen motion";
                score_row(name.str(), edit, false);
                res.edited_latents.push_back(edit.edited_latents.latents);
            }
            break;
        }
        case AblationVariant::LearnableMotionNoGuidance: {
            Denoiser trained = den.clone();
            RunConfig cfg = base;
            train_motion_layers(cfg, trained, z0, clip.token_mask);
            EditResult edit = edit_video(cfg, trained, ae, nullptr, nullptr, assets.video,
                                         clip.tokens, clip.token_mask);
            score_row("no guidance, learnable motion", edit, false);
            break;
        }
        case AblationVariant::IdentityWith:
        case AblationVariant::IdentityWithout: {
            const bool with_phi = spec.variant == AblationVariant::IdentityWith;
            RunConfig cfg = base;
            cfg.stage2.semantic_guidance = with_phi;

            GuidanceAdapters psi(cfg.adapter, static_cast<int>(clip.tokens.channels()),
                                 cfg.denoiser.channels, derive_seed(cfg.seed, "psi"));
            train_motion_adapters(cfg, den, psi, z0, clip.tokens, clip.token_mask);

            const int refs = static_cast<int>(assets.reference_frames.size());
            const int64_t sz = assets.reference_frames.at(0).shape[0];
            Tensor ref_stack({refs, sz, sz, 3});
            for (int r = 0; r < refs; ++r)
                std::copy(assets.reference_frames[r].data.begin(),
                          assets.reference_frames[r].data.end(),
                          ref_stack.data.begin() + static_cast<size_t>(r) * sz * sz * 3);
            FrameVideo ref_video(std::move(ref_stack));
            LatentVideo ref_z0 = ae.encode_video(ref_video);
            SemanticFeatureMap ref_tokens = extract_semantic_features(ref_video, backend);

            GuidanceAdapters phi(cfg.adapter, static_cast<int>(ref_tokens.channels()),
                                 cfg.denoiser.channels, derive_seed(cfg.seed, "phi"));
            LoraSet lora;
            register_identity(cfg, den, with_phi ? &phi : nullptr, lora, ref_z0,
                              ref_tokens);

            EditResult edit = edit_video(cfg, den, ae, &psi, &lora, assets.video,
                                         clip.tokens, clip.token_mask);
            score_row(with_phi ? "identity, with semantic guidance"
                               : "identity, without semantic guidance",
                      edit, true);
            break;
        }
    }
    res.csv = evaluation_csv(res.rows);
    return res;
}

}  // namespace dive
