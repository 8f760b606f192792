#include "dive/denoiser.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dive/checkpoint.hpp"
#include "dive/rng.hpp"

namespace dive {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

Tensor sinusoidal_embedding(int t, int dim) {
    Tensor e({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        e.data[i] = static_cast<float>(std::sin(t * freq));
        e.data[half + i] = static_cast<float>(std::cos(t * freq));
    }
    return e;
}

int64_t window_side(int64_t dim) {
    for (int64_t s = std::min<int64_t>(8, dim); s > 1; --s)
        if (dim % s == 0) return s;
    return 1;
}

std::vector<int64_t> window_permutation(int64_t frames, int64_t h, int64_t w,
                                        int64_t wh, int64_t ww) {
    std::vector<int64_t> idx;
    idx.reserve(frames * h * w);
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t by = 0; by < h / wh; ++by)
            for (int64_t bx = 0; bx < w / ww; ++bx)
                for (int64_t iy = 0; iy < wh; ++iy)
                    for (int64_t ix = 0; ix < ww; ++ix)
                        idx.push_back((f * h + by * wh + iy) * w + bx * ww + ix);
    return idx;
}

std::vector<int64_t> invert_permutation(const std::vector<int64_t>& p) {
    std::vector<int64_t> inv(p.size());
    for (size_t i = 0; i < p.size(); ++i) inv[p[i]] = static_cast<int64_t>(i);
    return inv;
}

}  // namespace

TextEmbedding embed_prompt(const std::string& prompt, int dim, uint64_t seed) {
    TextEmbedding e;
    e.tokens = split_ws(prompt);
    if (e.tokens.empty())
        throw std::invalid_argument("embed_prompt: empty prompt");
    e.embedding = Tensor({static_cast<int64_t>(e.tokens.size()), dim});
    for (size_t i = 0; i < e.tokens.size(); ++i) {
        auto rng = make_rng(seed, "token:" + e.tokens[i]);
        std::normal_distribution<float> dist(0.0f, 1.0f);
        for (int j = 0; j < dim; ++j) e.embedding.data[i * dim + j] = dist(rng);
    }
    return e;
}

LoraValueSet lift_lora(const LoraSet& set, bool trainable) {
    LoraValueSet out;
    for (const auto& [name, d] : set) {
        const int64_t r = d.rank;
        const int64_t d_in = d.down.shape[1], d_out = d.up.shape[0];
        Tensor down_t({d_in, r}), up_t({r, d_out});
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < d_in; ++j)
                down_t.data[j * r + i] = d.down.data[i * d_in + j];
        for (int64_t i = 0; i < d_out; ++i)
            for (int64_t j = 0; j < r; ++j)
                up_t.data[j * d_out + i] = d.up.data[i * r + j];
        LoraValueEntry e;
        e.down_t = trainable ? ad::param(std::move(down_t)) : ad::constant(std::move(down_t));
        e.up_t = trainable ? ad::param(std::move(up_t)) : ad::constant(std::move(up_t));
        e.scale = d.scale;
        out.emplace(name, std::move(e));
    }
    return out;
}

LoraSet lower_lora(const LoraValueSet& set) {
    LoraSet out;
    for (const auto& [name, e] : set) {
        const int64_t d_in = e.down_t.val().shape[0], r = e.down_t.val().shape[1];
        const int64_t d_out = e.up_t.val().shape[1];
        LoraDelta d;
        d.rank = static_cast<int>(r);
        d.scale = e.scale;
        d.down = Tensor({r, d_in});
        d.up = Tensor({d_out, r});
        for (int64_t i = 0; i < d_in; ++i)
            for (int64_t j = 0; j < r; ++j)
                d.down.data[j * d_in + i] = e.down_t.val().data[i * r + j];
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < d_out; ++j)
                d.up.data[j * r + i] = e.up_t.val().data[i * d_out + j];
        out.emplace(name, std::move(d));
    }
    return out;
}

Denoiser::Denoiser(DenoiserCfg cfg, NoiseSchedule sched, int latent_channels)
    : cfg_(cfg), sched_(std::move(sched)), latent_channels_(latent_channels) {
    const auto& c = cfg_.channels;
    auto add_param = [&](const std::string& name, std::vector<int64_t> shape,
                         float stddev) {
        auto rng = make_rng(cfg_.weight_seed, "denoiser:" + name);
        params_.emplace(name, ad::constant(gaussian_tensor(std::move(shape), rng, stddev)));
    };
    auto add_zeros = [&](const std::string& name, std::vector<int64_t> shape) {
        params_.emplace(name, ad::constant(Tensor(std::move(shape))));
    };

    for (int l = 0; l < 4; ++l) {
        const int cin = l == 0 ? latent_channels_ : c[l - 1];
        const std::string pre = "enc" + std::to_string(l);
        add_param(pre + ".conv.w", {9 * cin, c[l]}, 1.0f / std::sqrt(9.0f * cin));
        add_zeros(pre + ".conv.b", {c[l]});
        add_param(pre + ".time.w", {cfg_.time_dim, c[l]},
                  0.5f / std::sqrt(static_cast<float>(cfg_.time_dim)));
        add_param(pre + ".text.w", {cfg_.text_dim, c[l]},
                  0.5f / std::sqrt(static_cast<float>(cfg_.text_dim)));
        add_param(pre + ".gate.w", {cfg_.time_dim, c[l]},
                  0.5f / std::sqrt(static_cast<float>(cfg_.time_dim)));
        for (const char* proj : {".sattn.q", ".sattn.k", ".sattn.v", ".sattn.out"})
            add_param(pre + proj + ".w", {c[l], c[l]},
                      1.0f / std::sqrt(static_cast<float>(c[l])));
        for (const char* proj : {".tattn.q", ".tattn.k", ".tattn.v", ".tattn.out"})
            add_param(pre + proj + ".w", {c[l], c[l]},
                      1.0f / std::sqrt(static_cast<float>(c[l])));
        add_param(pre + ".posemb", {cfg_.temporal_window, c[l]}, 0.5f);
    }
    for (int l = 3; l >= 1; --l) {
        const std::string pre = "dec" + std::to_string(l);
        add_param(pre + ".conv.w", {9 * c[l], c[l - 1]}, 1.0f / std::sqrt(9.0f * c[l]));
        add_zeros(pre + ".conv.b", {c[l - 1]});
    }
    add_param("conv_out.w", {9 * c[0], latent_channels_},
              1.0f / std::sqrt(9.0f * c[0]));
    add_zeros("conv_out.b", {latent_channels_});
}

const ad::Value& Denoiser::p(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
        throw std::logic_error("denoiser: missing parameter " + name);
    return it->second;
}

std::array<std::array<int64_t, 2>, 4> Denoiser::tap_ladder(int64_t h, int64_t w) {
    if (h % 8 != 0 || w % 8 != 0)
        throw std::invalid_argument("denoiser: latent dims must be divisible by 8");
    return {{{h, w}, {h / 2, w / 2}, {h / 4, w / 4}, {h / 8, w / 8}}};
}

ad::Value Denoiser::lora_proj(const ad::Value& x, const std::string& name,
                              const LoraValueSet* lora) const {
    ad::Value y = ad::matmul(x, p(name + ".w"));
    if (lora) {
        auto it = lora->find(name);
        if (it != lora->end()) {
            const LoraValueEntry& e = it->second;
            y = ad::add(y, ad::scale(ad::matmul(ad::matmul(x, e.down_t), e.up_t),
                                     e.scale));
        }
    }
    return y;
}

ad::Value Denoiser::spatial_attention(const ad::Value& x, int level, int64_t frames,
                                      int64_t h, int64_t w,
                                      const LoraValueSet* lora) const {
    const std::string pre = "enc" + std::to_string(level) + ".sattn";
    const int64_t wh = window_side(h), ww = window_side(w);
    const auto perm = window_permutation(frames, h, w, wh, ww);
    ad::Value xp = ad::gather_rows(x, perm);
    ad::Value q = lora_proj(xp, pre + ".q", lora);
    ad::Value k = lora_proj(xp, pre + ".k", lora);
    ad::Value v = lora_proj(xp, pre + ".v", lora);
    ad::Value attn = ad::grouped_attention(q, k, v, wh * ww);
    ad::Value out = lora_proj(attn, pre + ".out", lora);
    return ad::gather_rows(out, invert_permutation(perm));
}

ad::Value Denoiser::temporal_attention(const ad::Value& x, int level, int64_t frames,
                                       int64_t h, int64_t w) const {
    const std::string pre = "enc" + std::to_string(level) + ".tattn";
    const int64_t hw = h * w;
    // Reorder to pixel-major so each group of `frames` rows is one pixel's
    // trajectory across time.
    std::vector<int64_t> perm(frames * hw);
    for (int64_t pix = 0; pix < hw; ++pix)
        for (int64_t f = 0; f < frames; ++f) perm[pix * frames + f] = f * hw + pix;
    ad::Value xp = ad::gather_rows(x, perm);
    xp = ad::add_tiled(xp, p("enc" + std::to_string(level) + ".posemb"));
    ad::Value q = ad::matmul(xp, p(pre + ".q.w"));
    ad::Value k = ad::matmul(xp, p(pre + ".k.w"));
    ad::Value v = ad::matmul(xp, p(pre + ".v.w"));
    ad::Value attn = ad::grouped_attention(q, k, v, frames);
    ad::Value out = ad::matmul(attn, p(pre + ".out.w"));
    return ad::gather_rows(out, invert_permutation(perm));
}

Denoiser::ForwardResult Denoiser::forward(const ad::Value& z, int64_t frames, int64_t h,
                                          int64_t w, int t, const TextEmbedding& text,
                                          const std::array<ad::Value, 4>* guidance,
                                          float lambda, const LoraValueSet* lora) const {
    if (t < 1 || t > sched_.total_steps)
        throw std::out_of_range("denoiser forward: t out of [1, T]");
    if (z.val().rows() != frames * h * w || z.val().cols() != latent_channels_)
        throw std::invalid_argument("denoiser forward: latent shape mismatch");
    const auto ladder = tap_ladder(h, w);
    if (text.embedding.cols() != cfg_.text_dim)
        throw std::invalid_argument("denoiser forward: text embedding dim mismatch");
    const bool use_motion = cfg_.motion_layers_enabled;
    if (use_motion && frames != cfg_.temporal_window)
        throw std::invalid_argument(
            "denoiser forward: frame count " + std::to_string(frames) +
            " does not match temporal window " + std::to_string(cfg_.temporal_window));

    // Pooled text conditioning row.
    Tensor pooled({1, cfg_.text_dim});
    const int64_t ntok = text.embedding.rows();
    for (int64_t i = 0; i < ntok; ++i)
        for (int j = 0; j < cfg_.text_dim; ++j)
            pooled.data[j] += text.embedding.data[i * cfg_.text_dim + j] / ntok;
    ad::Value text_row = ad::constant(std::move(pooled));
    ad::Value time_row = ad::constant(sinusoidal_embedding(t, cfg_.time_dim));

    ForwardResult res;
    res.tap_sizes = ladder;
    std::array<ad::Value, 4> skips;
    ad::Value x = z;
    for (int l = 0; l < 4; ++l) {
        const auto [lh, lw] = std::pair{ladder[l][0], ladder[l][1]};
        const std::string pre = "enc" + std::to_string(l);
        if (l > 0) x = ad::avg_pool2x2(x, frames, ladder[l - 1][0], ladder[l - 1][1]);
        x = ad::add_bias(ad::matmul(ad::im2col3x3(x, frames, lh, lw), p(pre + ".conv.w")),
                         p(pre + ".conv.b"));
        x = ad::add_row(x, ad::matmul(time_row, p(pre + ".time.w")));
        x = ad::add_row(x, ad::matmul(text_row, p(pre + ".text.w")));
        res.taps[l] = x;  // F_l^t, recorded before injection
        if (guidance) {
            const ad::Value& g = (*guidance)[l];
            if (g.val().rows() != frames * lh * lw ||
                g.val().cols() != cfg_.channels[l])
                throw std::invalid_argument(
                    "denoiser forward: guidance shape mismatch at level " +
                    std::to_string(l + 1) + " (want " +
                    std::to_string(frames * lh * lw) + "x" +
                    std::to_string(cfg_.channels[l]) + ", got " +
                    g.val().shape_str() + ")");
            x = ad::add(x, ad::scale(g, lambda));
        }
        // Timestep-dependent per-channel gate (frozen FiLM-style conditioning).
        ad::Value gate = ad::add(ad::matmul(time_row, p(pre + ".gate.w")),
                                 ad::constant(Tensor::full({1, cfg_.channels[l]}, 1.0f)));
        x = ad::mul_row(x, gate);
        x = ad::add(x, spatial_attention(x, l, frames, lh, lw, lora));
        if (use_motion) x = ad::add(x, temporal_attention(x, l, frames, lh, lw));
        skips[l] = x;
    }

    ad::Value y = skips[3];
    for (int l = 3; l >= 1; --l) {
        const std::string pre = "dec" + std::to_string(l);
        y = ad::upsample2x(y, frames, ladder[l][0], ladder[l][1]);
        y = ad::add_bias(ad::matmul(ad::im2col3x3(y, frames, ladder[l - 1][0],
                                                  ladder[l - 1][1]),
                                    p(pre + ".conv.w")),
                         p(pre + ".conv.b"));
        y = ad::add(y, skips[l - 1]);
    }
    y = ad::add_bias(ad::matmul(ad::im2col3x3(y, frames, h, w), p("conv_out.w")),
                     p("conv_out.b"));

    const float skip_gain = static_cast<float>(std::sqrt(1.0 - sched_.alpha_bar(t)));
    res.eps = ad::add(ad::scale(z, skip_gain), ad::scale(y, cfg_.out_scale));
    return res;
}

DenoiserOutput Denoiser::predict_noise(const LatentVideo& z_t, int t,
                                       const TextEmbedding& text,
                                       const GuidanceStack* guidance,
                                       const LoraSet* lora) const {
    const int64_t n = z_t.frame_count(), h = z_t.height(), w = z_t.width();
    Tensor flat({n * h * w, z_t.channels()}, z_t.latents.data);
    ad::Value z = ad::constant(std::move(flat));

    std::array<ad::Value, 4> gvals;
    const std::array<ad::Value, 4>* gptr = nullptr;
    float lambda = 0.0f;
    if (guidance) {
        for (int l = 0; l < 4; ++l) gvals[l] = ad::constant(guidance->levels[l]);
        gptr = &gvals;
        lambda = guidance->weight;
    }
    LoraValueSet lvals;
    const LoraValueSet* lptr = nullptr;
    if (lora) {
        lvals = lift_lora(*lora, false);
        lptr = &lvals;
    }
    ForwardResult r = forward(z, n, h, w, t, text, gptr, lambda, lptr);

    DenoiserOutput out;
    out.eps_pred = Tensor({n, h, w, z_t.channels()}, r.eps.val().data);
    for (int l = 0; l < 4; ++l) out.encoder_features[l] = r.taps[l].val();
    out.feature_sizes = r.tap_sizes;
    return out;
}

void Denoiser::set_motion_trainable(bool trainable) {
    for (auto& [name, v] : params_)
        if (name.find(".tattn.") != std::string::npos ||
            name.find(".posemb") != std::string::npos)
            v.node()->requires_grad = trainable;
}

std::string Denoiser::weight_hash() const {
    std::string bytes;
    for (const auto& [name, v] : params_) {
        bytes.append(name);
        bytes.append(reinterpret_cast<const char*>(v.val().data.data()),
                     v.val().data.size() * sizeof(float));
    }
    return sha256_hex(bytes.data(), bytes.size());
}

Denoiser Denoiser::clone() const {
    Denoiser d = *this;
    for (auto& [name, v] : d.params_) {
        const bool rq = v.requires_grad();
        v = rq ? ad::param(v.val()) : ad::constant(v.val());
    }
    return d;
}

Denoiser inflate_with_motion_layers(const Denoiser& base, const DenoiserCfg& cfg) {
    Denoiser d = base;  // shares parameter storage
    // Window size is baked into the positional table at construction.
    if (cfg.temporal_window != d.config().temporal_window)
        throw std::invalid_argument(
            "inflate_with_motion_layers: temporal window mismatch");
    d.set_motion_layers_enabled(cfg.motion_layers_enabled);
    d.set_motion_trainable(cfg.motion_layers_trainable);
    return d;
}

}  // namespace dive
