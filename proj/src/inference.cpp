#include "dive/inference.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dive/schedule.hpp"

namespace dive {

namespace {

std::vector<std::string> tokenize(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::string join(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += " ";
        out += toks[i];
    }
    return out;
}

}  // namespace

std::string swap_subject_word(const std::string& prompt, const std::string& source,
                              const std::string& target) {
    if (source.empty()) throw std::invalid_argument("swap_subject_word: empty source");
    auto toks = tokenize(prompt);
    bool found = false;
    for (auto& t : toks)
        if (t == source) {
            t = target;
            found = true;
        }
    if (!found)
        throw std::invalid_argument("swap_subject_word: \"" + source +
                                    "\" does not occur in \"" + prompt + "\"");
    return join(toks);
}

Tensor blend_latents(const Tensor& edited, const Tensor& source, const Tensor& rowmask) {
    require_same_shape(edited, source, "blend_latents");
    const int64_t rows = rowmask.numel();
    if (rows == 0 || edited.numel() % rows != 0)
        throw std::invalid_argument("blend_latents: mask does not tile the latents");
    const int64_t d = edited.numel() / rows;
    Tensor out = edited;
    for (int64_t r = 0; r < rows; ++r)
        if (rowmask.data[r] <= 0.5f)
            std::copy(source.data.begin() + r * d, source.data.begin() + (r + 1) * d,
                      out.data.begin() + r * d);
    return out;
}

InversionResult invert_video(const RunConfig& cfg, const Denoiser& den,
                             const LatentVideo& z0, const std::string& prompt,
                             int refine_iters) {
    const NoiseSchedule& sched = den.schedule();
    InversionResult res;
    res.timesteps = inference_timesteps(sched.total_steps, cfg.edit.num_steps);
    TextEmbedding text = embed_prompt(prompt, cfg.denoiser.text_dim, cfg.seed);

    res.trajectory.reserve(res.timesteps.size() + 1);
    res.trajectory.push_back(z0.latents);
    Tensor z = z0.latents;
    int t_prev = 0;
    for (int t : res.timesteps) {
        // eps at the unknown z_t is approximated from the current state and
        // tightened by fixed-point iteration on the exact step inverse.
        Tensor eps = den.predict_noise(LatentVideo(z), t, text).eps_pred;
        Tensor z_t = ddim_invert_step(z, eps, t_prev, t, sched);
        for (int i = 0; i < refine_iters; ++i) {
            eps = den.predict_noise(LatentVideo(z_t), t, text).eps_pred;
            z_t = ddim_invert_step(z, eps, t_prev, t, sched);
        }
        z = std::move(z_t);
        res.trajectory.push_back(z);
        t_prev = t;
    }
    return res;
}

EditResult edit_video(const RunConfig& cfg, const Denoiser& den, const Autoencoder& ae,
                      const GuidanceAdapters* adapters, const LoraSet* lora,
                      const FrameVideo& video, const SemanticFeatureMap& subject_tokens,
                      const Tensor& token_mask) {
    const NoiseSchedule& sched = den.schedule();
    const LatentVideo z0 = ae.encode_video(video);
    const int64_t frames = z0.frame_count(), h = z0.height(), w = z0.width();
    if (subject_tokens.frame_count() != frames)
        throw std::invalid_argument("edit_video: token/frame count mismatch");

    EditResult res;
    res.source_prompt = cfg.stage1.prompt;
    res.target_prompt =
        swap_subject_word(res.source_prompt, cfg.edit.source_word, cfg.edit.target_word);

    InversionResult inv = invert_video(cfg, den, z0, res.source_prompt);
    res.timesteps = inv.timesteps;
    const int steps = static_cast<int>(inv.timesteps.size());

    TextEmbedding target_text =
        embed_prompt(res.target_prompt, cfg.denoiser.text_dim, cfg.seed);
    TextEmbedding null_text = embed_prompt("<null>", cfg.denoiser.text_dim, cfg.seed);

    GuidanceStack guidance;
    if (adapters)
        guidance = adapters->project_guidance(subject_tokens, Denoiser::tap_ladder(h, w),
                                              cfg.edit.lambda);
    Tensor rowmask;
    if (cfg.edit.blend_enabled) {
        Tensor latent_mask = resample_mask(token_mask, h, w);
        rowmask = Tensor({frames * h * w}, std::move(latent_mask.data));
    }

    Tensor z = inv.trajectory.back();
    for (int k = steps; k >= 1; --k) {
        const auto start = std::chrono::steady_clock::now();
        const int t = inv.timesteps[k - 1];
        const int t_prev = k > 1 ? inv.timesteps[k - 2] : 0;
        const bool inject = adapters != nullptr && t > cfg.edit.injection_stop;
        const GuidanceStack* g = inject ? &guidance : nullptr;

        Tensor eps =
            den.predict_noise(LatentVideo(z), t, target_text, g, lora).eps_pred;
        if (cfg.edit.cfg_scale > 0.0f) {
            Tensor eps_u =
                den.predict_noise(LatentVideo(z), t, null_text, g, lora).eps_pred;
            for (size_t i = 0; i < eps.data.size(); ++i)
                eps.data[i] =
                    eps_u.data[i] + cfg.edit.cfg_scale * (eps.data[i] - eps_u.data[i]);
        }
        z = ddim_denoise_step(z, eps, t, t_prev, sched);
        if (cfg.edit.blend_enabled) z = blend_latents(z, inv.trajectory[k - 1], rowmask);
        res.step_latents.push_back(z);
        EditStepLog log;
        log.t = t;
        log.injected = inject;
        log.ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - start)
                     .count();
        res.steps.push_back(log);
    }

    res.edited_latents = LatentVideo(z);
    res.frames = ae.decode_video(res.edited_latents);
    res.inversion = std::move(inv);

    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(dump_config(cfg));
    manifest["seed"] = cfg.seed;
    manifest["source_prompt"] = res.source_prompt;
    manifest["target_prompt"] = res.target_prompt;
    manifest["timesteps"] = res.timesteps;
    manifest["denoiser_weights_sha256"] = den.weight_hash();
    manifest["injection_stop"] = cfg.edit.injection_stop;
    manifest["guidance_used"] = adapters != nullptr;
    manifest["lora_used"] = lora != nullptr;
    std::vector<int> injected;
    std::vector<double> step_ms;
    for (const auto& s : res.steps) {
        if (s.injected) injected.push_back(s.t);
        step_ms.push_back(s.ms);
    }
    manifest["injected_timesteps"] = injected;
    manifest["timing"] = {{"step_ms", step_ms}};
    res.manifest_json = manifest.dump(2);
    return res;
}

}  // namespace dive
