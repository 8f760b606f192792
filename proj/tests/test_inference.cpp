#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "dive/assets.hpp"
#include "dive/inference.hpp"
#include "dive/rng.hpp"

using namespace dive;

namespace {

struct EditRig {
    RunConfig cfg;
    Autoencoder ae;
    NoiseSchedule sched;
    Denoiser den;
    ToyAssets assets;
    ToySemanticBackend backend;
    SemanticFeatureMap tokens;
    Tensor token_mask;

    EditRig()
        : cfg(make_cfg()),
          ae(AutoencoderConfig{cfg.autoencoder.patch, cfg.autoencoder.latent_channels}),
          sched(build_schedule(cfg.schedule.total_steps, cfg.schedule.beta_start,
                               cfg.schedule.beta_end)),
          den(cfg.denoiser, sched, cfg.autoencoder.latent_channels),
          assets(make_toy_assets(ae, 5, 2, 64, 2)),
          backend(8, 8, 5),
          tokens(backend.extract(assets.video)),
          token_mask(resample_mask(assets.pixel_mask, tokens.grid_h(), tokens.grid_w())) {}

    static RunConfig make_cfg() {
        RunConfig cfg;
        cfg.schedule.total_steps = 100;
        cfg.denoiser.channels = {4, 8, 12, 16};
        cfg.denoiser.temporal_window = 2;
        cfg.semantic.patch = 8;
        cfg.semantic.channels = 8;
        cfg.adapter.hidden_width = 8;
        cfg.adapter.depth = 2;
        cfg.edit.num_steps = 10;
        cfg.edit.injection_stop = 50;
        cfg.stage1.prompt = "a cat moving";
        cfg.edit.source_word = "cat";
        cfg.edit.target_word = "dog";
        return cfg;
    }
};

double rel_l2(const Tensor& a, const Tensor& b) {
    double num = 0, den = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num / std::max(den, 1e-12));
}

}  // namespace

TEST_CASE("subject word swaps are whole-token and exhaustive") {
    CHECK(swap_subject_word("a cat moving", "cat", "dog") == "a dog moving");
    CHECK(swap_subject_word("cat chases cat", "cat", "dog") == "dog chases dog");
    CHECK_THROWS(swap_subject_word("a caterpillar moving", "cat", "dog"));
    CHECK_THROWS(swap_subject_word("a dog moving", "cat", "dog"));
    CHECK_THROWS(swap_subject_word("a cat moving", "", "dog"));
}

TEST_CASE("latent blending copies off-mask rows bitwise") {
    auto rng = make_rng(1, "blend");
    Tensor edited = gaussian_tensor({6, 4}, rng);
    Tensor source = gaussian_tensor({6, 4}, rng);
    Tensor mask({6}, {1, 0, 1, 0, 0, 1});
    Tensor out = blend_latents(edited, source, mask);
    for (int64_t r = 0; r < 6; ++r)
        for (int64_t c = 0; c < 4; ++c) {
            const float want = mask.data[r] > 0.5f ? edited.data[r * 4 + c]
                                                   : source.data[r * 4 + c];
            CHECK(out.data[r * 4 + c] == want);
        }
    CHECK_THROWS(blend_latents(edited, gaussian_tensor({5, 4}, rng), mask));
    CHECK_THROWS(blend_latents(edited, source, Tensor({5}, {1, 1, 1, 1, 1})));
}

TEST_CASE("inversion produces a full trajectory the denoiser can retrace") {
    EditRig rig;
    LatentVideo z0 = rig.ae.encode_video(rig.assets.video);
    InversionResult inv = invert_video(rig.cfg, rig.den, z0, "a cat moving");
    REQUIRE(inv.timesteps == inference_timesteps(100, 10));
    REQUIRE(inv.trajectory.size() == 11);
    CHECK(inv.trajectory[0].data == z0.latents.data);

    // denoise all the way back down; the fixed-point refinement should leave
    // only a small retrace error
    TextEmbedding text = embed_prompt("a cat moving", 16, rig.cfg.seed);
    Tensor z = inv.trajectory.back();
    for (int k = 10; k >= 1; --k) {
        const int t = inv.timesteps[k - 1];
        const int t_prev = k > 1 ? inv.timesteps[k - 2] : 0;
        Tensor eps = rig.den.predict_noise(LatentVideo(z), t, text).eps_pred;
        z = ddim_denoise_step(z, eps, t, t_prev, rig.sched);
    }
    CHECK(rel_l2(z, z0.latents) < 1e-2);
}

TEST_CASE("neutral edits are bit-identical to plain reconstruction at every step") {
    EditRig rig;
    RunConfig cfg = rig.cfg;
    cfg.edit.target_word = cfg.edit.source_word;  // unchanged prompt
    cfg.edit.lambda = 0.0f;
    cfg.edit.blend_enabled = false;

    // oracle: inversion followed by a bare denoising loop
    LatentVideo z0 = rig.ae.encode_video(rig.assets.video);
    InversionResult inv = invert_video(cfg, rig.den, z0, cfg.stage1.prompt);
    TextEmbedding text = embed_prompt(cfg.stage1.prompt, 16, cfg.seed);
    std::vector<Tensor> plain;
    Tensor z = inv.trajectory.back();
    for (int k = 10; k >= 1; --k) {
        const int t = inv.timesteps[k - 1];
        const int t_prev = k > 1 ? inv.timesteps[k - 2] : 0;
        Tensor eps = rig.den.predict_noise(LatentVideo(z), t, text).eps_pred;
        z = ddim_denoise_step(z, eps, t, t_prev, rig.sched);
        plain.push_back(z);
    }

    // no adapters at all
    EditResult bare = edit_video(cfg, rig.den, rig.ae, nullptr, nullptr, rig.assets.video,
                                rig.tokens, rig.token_mask);
    REQUIRE(bare.step_latents.size() == plain.size());
    for (size_t k = 0; k < plain.size(); ++k)
        CHECK(bare.step_latents[k].data == plain[k].data);

    // adapters present but weighted to zero
    GuidanceAdapters adapters(cfg.adapter, 8, cfg.denoiser.channels, 77);
    EditResult zeroed = edit_video(cfg, rig.den, rig.ae, &adapters, nullptr,
                                   rig.assets.video, rig.tokens, rig.token_mask);
    for (size_t k = 0; k < plain.size(); ++k)
        CHECK(zeroed.step_latents[k].data == plain[k].data);
    CHECK(zeroed.edited_latents.latents.data == plain.back().data);
}

TEST_CASE("guidance is injected exactly at timesteps above the stop") {
    EditRig rig;
    GuidanceAdapters adapters(rig.cfg.adapter, 8, rig.cfg.denoiser.channels, 78);
    EditResult res = edit_video(rig.cfg, rig.den, rig.ae, &adapters, nullptr,
                                rig.assets.video, rig.tokens, rig.token_mask);
    REQUIRE(res.steps.size() == 10);
    int injected = 0;
    for (const auto& s : res.steps) {
        CHECK(s.injected == (s.t > 50));
        injected += s.injected ? 1 : 0;
    }
    CHECK(injected == 5);

    auto manifest = nlohmann::json::parse(res.manifest_json);
    std::vector<int> logged = manifest["injected_timesteps"];
    CHECK(logged == std::vector<int>({100, 90, 80, 70, 60}));
}

TEST_CASE("blending pins off-mask rows to the inversion trajectory bitwise") {
    EditRig rig;
    RunConfig cfg = rig.cfg;
    cfg.edit.lambda = 0.4f;
    GuidanceAdapters adapters(cfg.adapter, 8, cfg.denoiser.channels, 79);
    // make the adapters non-trivial so the edit actually deviates on-mask
    auto prng = make_rng(80, "perturb");
    std::normal_distribution<float> dist(0.0f, 0.1f);
    for (auto& p : adapters.trainable_params())
        for (float& v : p.mutable_val().data) v += dist(prng);

    EditResult res = edit_video(cfg, rig.den, rig.ae, &adapters, nullptr,
                                rig.assets.video, rig.tokens, rig.token_mask);
    const LatentVideo z0 = rig.ae.encode_video(rig.assets.video);
    Tensor latent_mask = resample_mask(rig.token_mask, z0.height(), z0.width());
    const int64_t rows = latent_mask.numel();
    const int64_t d = z0.channels();

    REQUIRE(res.step_latents.size() == res.inversion.trajectory.size() - 1);
    bool on_mask_deviates = false;
    for (size_t s = 0; s < res.step_latents.size(); ++s) {
        // step s consumed timesteps[steps-1-s] and landed on trajectory index
        // steps-1-s of the stored inversion
        const Tensor& ref = res.inversion.trajectory[res.step_latents.size() - 1 - s];
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < d; ++c) {
                if (latent_mask.data[r] <= 0.5f)
                    CHECK(res.step_latents[s].data[r * d + c] == ref.data[r * d + c]);
                else if (res.step_latents[s].data[r * d + c] != ref.data[r * d + c])
                    on_mask_deviates = true;
            }
    }
    CHECK(on_mask_deviates);
}

TEST_CASE("manifests are deterministic apart from timing") {
    EditRig rig;
    GuidanceAdapters adapters(rig.cfg.adapter, 8, rig.cfg.denoiser.channels, 81);
    EditResult a = edit_video(rig.cfg, rig.den, rig.ae, &adapters, nullptr,
                              rig.assets.video, rig.tokens, rig.token_mask);
    EditResult b = edit_video(rig.cfg, rig.den, rig.ae, &adapters, nullptr,
                              rig.assets.video, rig.tokens, rig.token_mask);
    CHECK(a.edited_latents.latents.data == b.edited_latents.latents.data);

    auto ma = nlohmann::json::parse(a.manifest_json);
    auto mb = nlohmann::json::parse(b.manifest_json);
    ma.erase("timing");
    mb.erase("timing");
    CHECK(ma.dump() == mb.dump());

    CHECK(ma["denoiser_weights_sha256"] == rig.den.weight_hash());
    CHECK(ma["source_prompt"] == "a cat moving");
    CHECK(ma["target_prompt"] == "a dog moving");
    CHECK(ma["guidance_used"] == true);
    CHECK(ma["lora_used"] == false);
}
