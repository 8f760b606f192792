#include "dive/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dive/rng.hpp"
#include "dive/schedule.hpp"

namespace dive {

Adam::Adam(std::vector<ad::Value> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (params_.empty()) throw std::invalid_argument("Adam: no parameters");
    for (const auto& p : params_) {
        if (!p.defined() || !p.requires_grad())
            throw std::invalid_argument("Adam: parameter is not a trainable leaf");
        m_.emplace_back(p.val().shape);
        v_.emplace_back(p.val().shape);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        ad::Value& p = params_[i];
        const Tensor& g = p.grad();
        if (g.data.empty()) continue;  // parameter unused in this graph
        Tensor& w = p.mutable_val();
        for (size_t j = 0; j < w.data.size(); ++j) {
            const double gj = g.data[j];
            m_[i].data[j] = static_cast<float>(beta1_ * m_[i].data[j] + (1 - beta1_) * gj);
            v_[i].data[j] =
                static_cast<float>(beta2_ * v_[i].data[j] + (1 - beta2_) * gj * gj);
            const double mhat = m_[i].data[j] / bc1;
            const double vhat = v_[i].data[j] / bc2;
            w.data[j] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

ad::Value masked_noise_loss(const ad::Value& eps_pred, const Tensor& eps_target,
                            const Tensor& rowmask) {
    const int64_t rows = eps_pred.val().rows(), cols = eps_pred.val().cols();
    if (eps_target.numel() != rows * cols)
        throw std::invalid_argument("masked_noise_loss: target size mismatch");
    if (rowmask.numel() != rows)
        throw std::invalid_argument("masked_noise_loss: mask must have one entry per row");
    double count = 0;
    for (float m : rowmask.data) count += m > 0.5f ? 1.0 : 0.0;
    if (count == 0)
        throw std::invalid_argument("masked_noise_loss: mask selects no rows");
    Tensor target({rows, cols}, eps_target.data);
    ad::Value diff = ad::sub(eps_pred, ad::constant(std::move(target)));
    ad::Value sq = ad::mask_rows(ad::mul(diff, diff), rowmask);
    return ad::scale(ad::sum(sq), static_cast<float>(1.0 / (count * cols)));
}

void write_loss_csv(const std::filesystem::path& path, const TrainingReport& report) {
    if (report.timesteps.size() != report.losses.size())
        throw std::invalid_argument("write_loss_csv: timestep/loss count mismatch");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,t,loss\n";
    for (size_t i = 0; i < report.losses.size(); ++i)
        out << i + 1 << "," << report.timesteps[i] << "," << report.losses[i] << "\n";
}

namespace {

float eval_loss(const Denoiser& den, const ad::Value& z, int64_t frames, int64_t h,
                int64_t w, int t, const TextEmbedding& text,
                const std::array<ad::Value, 4>* guidance, float lambda,
                const LoraValueSet* lora, const Tensor& eps, const Tensor& rowmask) {
    auto fwd = den.forward(z, frames, h, w, t, text, guidance, lambda, lora);
    return masked_noise_loss(fwd.eps, eps, rowmask).val().data[0];
}

}  // namespace

TrainingReport train_motion_adapters(const RunConfig& cfg, const Denoiser& denoiser,
                                     GuidanceAdapters& adapters, const LatentVideo& z0,
                                     const SemanticFeatureMap& subject_tokens,
                                     const Tensor& token_mask) {
    const int64_t frames = z0.frame_count(), h = z0.height(), w = z0.width();
    const int d = static_cast<int>(z0.channels());
    if (subject_tokens.frame_count() != frames)
        throw std::invalid_argument("train_motion_adapters: token/latent frame mismatch");
    const auto ladder = Denoiser::tap_ladder(h, w);
    const NoiseSchedule& sched = denoiser.schedule();
    const int T = sched.total_steps;

    Tensor latent_mask = resample_mask(token_mask, h, w);
    Tensor rowmask({frames * h * w}, latent_mask.data);

    Tensor token_flat({subject_tokens.tokens(), subject_tokens.channels()},
                      subject_tokens.features.data);
    ad::Value tokens = ad::constant(std::move(token_flat));
    TextEmbedding text =
        embed_prompt(cfg.stage1.prompt, cfg.denoiser.text_dim, cfg.seed);

    Adam opt(adapters.trainable_params(), cfg.stage1.learning_rate);
    auto eps_rng = make_rng(cfg.seed, "stage1:eps");
    TimestepSampler sampler(T / 2, T, derive_seed(cfg.seed, "stage1:t"));

    auto probe_rng = make_rng(cfg.seed, "stage1:probe");
    const Tensor probe_eps = gaussian_tensor({frames, h, w, d}, probe_rng);
    const int probe_t = (3 * T) / 4;
    auto probe = [&]() {
        Tensor z_t = add_noise(z0.latents, probe_eps, probe_t, sched);
        ad::Value zv = ad::constant(Tensor({frames * h * w, d}, z_t.data));
        auto g = adapters.project_all(tokens, frames, subject_tokens.grid_h(),
                                      subject_tokens.grid_w(), ladder);
        return eval_loss(denoiser, zv, frames, h, w, probe_t, text, &g,
                         cfg.stage1.lambda, nullptr, probe_eps, rowmask);
    };

    TrainingReport report;
    report.probe_loss_before = probe();
    for (int it = 0; it < cfg.stage1.iterations; ++it) {
        const int t = sampler.sample();
        Tensor eps = gaussian_tensor({frames, h, w, d}, eps_rng);
        Tensor z_t = add_noise(z0.latents, eps, t, sched);
        ad::Value zv = ad::constant(Tensor({frames * h * w, d}, std::move(z_t.data)));
        auto guidance = adapters.project_all(tokens, frames, subject_tokens.grid_h(),
                                             subject_tokens.grid_w(), ladder);
        auto fwd = denoiser.forward(zv, frames, h, w, t, text, &guidance,
                                    cfg.stage1.lambda, nullptr);
        ad::Value loss = masked_noise_loss(fwd.eps, eps, rowmask);
        opt.zero_grad();
        ad::backward(loss);
        opt.step();
        report.losses.push_back(loss.val().data[0]);
        report.timesteps.push_back(t);
    }
    report.probe_loss_after = probe();
    return report;
}

TrainingReport train_motion_layers(const RunConfig& cfg, Denoiser& denoiser,
                                   const LatentVideo& z0, const Tensor& token_mask) {
    const int64_t frames = z0.frame_count(), h = z0.height(), w = z0.width();
    const int d = static_cast<int>(z0.channels());
    const NoiseSchedule& sched = denoiser.schedule();
    const int T = sched.total_steps;

    denoiser.set_motion_trainable(true);
    std::vector<ad::Value> params;
    for (auto& [name, v] : denoiser.mutable_params())
        if (v.requires_grad()) params.push_back(v);
    Adam opt(params, cfg.stage1.learning_rate);

    Tensor latent_mask = resample_mask(token_mask, h, w);
    Tensor rowmask({frames * h * w}, latent_mask.data);
    TextEmbedding text =
        embed_prompt(cfg.stage1.prompt, cfg.denoiser.text_dim, cfg.seed);

    auto eps_rng = make_rng(cfg.seed, "stage1:eps");
    TimestepSampler sampler(T / 2, T, derive_seed(cfg.seed, "stage1:t"));
    auto probe_rng = make_rng(cfg.seed, "stage1:probe");
    const Tensor probe_eps = gaussian_tensor({frames, h, w, d}, probe_rng);
    const int probe_t = (3 * T) / 4;
    auto probe = [&]() {
        Tensor z_t = add_noise(z0.latents, probe_eps, probe_t, sched);
        ad::Value zv = ad::constant(Tensor({frames * h * w, d}, z_t.data));
        return eval_loss(denoiser, zv, frames, h, w, probe_t, text, nullptr, 0.0f,
                         nullptr, probe_eps, rowmask);
    };

    TrainingReport report;
    report.probe_loss_before = probe();
    for (int it = 0; it < cfg.stage1.iterations; ++it) {
        const int t = sampler.sample();
        Tensor eps = gaussian_tensor({frames, h, w, d}, eps_rng);
        Tensor z_t = add_noise(z0.latents, eps, t, sched);
        ad::Value zv = ad::constant(Tensor({frames * h * w, d}, std::move(z_t.data)));
        auto fwd = denoiser.forward(zv, frames, h, w, t, text, nullptr, 0.0f, nullptr);
        ad::Value loss = masked_noise_loss(fwd.eps, eps, rowmask);
        opt.zero_grad();
        ad::backward(loss);
        opt.step();
        report.losses.push_back(loss.val().data[0]);
        report.timesteps.push_back(t);
    }
    report.probe_loss_after = probe();
    return report;
}

std::string build_identity_prompt(const std::string& identifier,
                                  const std::string& class_word) {
    if (class_word.empty())
        throw std::invalid_argument("identity prompt: class word required");
    return identifier.empty() ? "a photo of " + class_word
                              : "a photo of " + identifier + " " + class_word;
}

TrainingReport register_identity(const RunConfig& cfg, const Denoiser& denoiser,
                                 GuidanceAdapters* phi, LoraSet& lora,
                                 const LatentVideo& ref_latents,
                                 const SemanticFeatureMap& ref_tokens) {
    Denoiser den = denoiser;
    den.set_motion_layers_enabled(false);  // references are independent stills

    const int64_t refs = ref_latents.frame_count();
    const int64_t h = ref_latents.height(), w = ref_latents.width();
    const int d = static_cast<int>(ref_latents.channels());
    if (ref_tokens.frame_count() != refs)
        throw std::invalid_argument("register_identity: token/latent count mismatch");
    const auto ladder = Denoiser::tap_ladder(h, w);
    const NoiseSchedule& sched = den.schedule();
    const int T = sched.total_steps;

    const bool use_phi = phi != nullptr && cfg.stage2.semantic_guidance;
    if (lora.empty()) {
        const auto& c = cfg.denoiser.channels;
        for (int l = 0; l < 4; ++l)
            for (const char* proj : {".sattn.q", ".sattn.k", ".sattn.v", ".sattn.out"}) {
                const std::string name = "enc" + std::to_string(l) + proj;
                lora.emplace(name,
                             init_lora(c[l], c[l], cfg.lora.rank, cfg.lora.scale(),
                                       derive_seed(cfg.seed, "lora:" + name)));
            }
    }
    LoraValueSet lvals = lift_lora(lora, true);

    std::vector<ad::Value> params;
    for (auto& [name, e] : lvals) {
        params.push_back(e.down_t);
        params.push_back(e.up_t);
    }
    if (use_phi)
        for (auto& p : phi->trainable_params()) params.push_back(p);
    Adam opt(params, cfg.stage2.learning_rate);

    Tensor token_flat({ref_tokens.tokens(), ref_tokens.channels()},
                      ref_tokens.features.data);
    ad::Value tokens = ad::constant(std::move(token_flat));
    TextEmbedding text =
        embed_prompt(build_identity_prompt(cfg.stage2.identifier, cfg.stage2.class_word),
                     cfg.denoiser.text_dim, cfg.seed);
    const Tensor rowmask = Tensor::full({refs * h * w}, 1.0f);

    auto eps_rng = make_rng(cfg.seed, "stage2:eps");
    TimestepSampler sampler(1, T, derive_seed(cfg.seed, "stage2:t"));
    auto probe_rng = make_rng(cfg.seed, "stage2:probe");
    const Tensor probe_eps = gaussian_tensor({refs, h, w, d}, probe_rng);
    const int probe_t = T / 2;
    auto probe = [&]() {
        Tensor z_t = add_noise(ref_latents.latents, probe_eps, probe_t, sched);
        ad::Value zv = ad::constant(Tensor({refs * h * w, d}, z_t.data));
        std::array<ad::Value, 4> g;
        if (use_phi)
            g = phi->project_all(tokens, refs, ref_tokens.grid_h(), ref_tokens.grid_w(),
                                 ladder);
        return eval_loss(den, zv, refs, h, w, probe_t, text, use_phi ? &g : nullptr,
                         1.0f, &lvals, probe_eps, rowmask);
    };

    TrainingReport report;
    report.probe_loss_before = probe();
    for (int it = 0; it < cfg.stage2.iterations; ++it) {
        const int t = sampler.sample();
        Tensor eps = gaussian_tensor({refs, h, w, d}, eps_rng);
        Tensor z_t = add_noise(ref_latents.latents, eps, t, sched);
        ad::Value zv = ad::constant(Tensor({refs * h * w, d}, std::move(z_t.data)));
        std::array<ad::Value, 4> g;
        if (use_phi)
            g = phi->project_all(tokens, refs, ref_tokens.grid_h(), ref_tokens.grid_w(),
                                 ladder);
        auto fwd =
            den.forward(zv, refs, h, w, t, text, use_phi ? &g : nullptr, 1.0f, &lvals);
        ad::Value loss = masked_noise_loss(fwd.eps, eps, rowmask);
        opt.zero_grad();
        ad::backward(loss);
        opt.step();
        report.losses.push_back(loss.val().data[0]);
        report.timesteps.push_back(t);
    }
    report.probe_loss_after = probe();
    lora = lower_lora(lvals);
    return report;
}

}  // namespace dive
