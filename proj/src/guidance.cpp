#include "dive/guidance.hpp"

#include <cmath>
#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

namespace {

std::vector<int64_t> nearest_indices(int64_t frames, int64_t h, int64_t w,
                                     int64_t oh, int64_t ow) {
    std::vector<int64_t> idx;
    idx.reserve(frames * oh * ow);
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < oh; ++y) {
            const int64_t sy = std::min<int64_t>(h - 1, y * h / oh);
            for (int64_t x = 0; x < ow; ++x) {
                const int64_t sx = std::min<int64_t>(w - 1, x * w / ow);
                idx.push_back((f * h + sy) * w + sx);
            }
        }
    return idx;
}

}  // namespace

Tensor inject_guidance(const Tensor& f_t, const Tensor& f_s, float lambda) {
    require_same_shape(f_t, f_s, "inject_guidance");
    Tensor out = f_t;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += lambda * f_s.data[i];
    return out;
}

GuidanceAdapters::GuidanceAdapters(const AdapterCfg& cfg, int in_channels,
                                   std::array<int, 4> out_channels, uint64_t seed)
    : cfg_(cfg), in_channels_(in_channels), out_channels_(out_channels) {
    if (cfg_.depth < 1) throw std::invalid_argument("adapter: depth must be >= 1");
    for (int l = 0; l < 4; ++l) {
        int fan_in = in_channels_;
        for (int i = 0; i < cfg_.depth; ++i) {
            const std::string name =
                "adapter" + std::to_string(l) + ".lin" + std::to_string(i);
            auto rng = make_rng(seed, name);
            Layer layer;
            layer.w = ad::param(gaussian_tensor({fan_in, cfg_.hidden_width}, rng,
                                                1.0f / std::sqrt(static_cast<float>(fan_in))));
            layer.b = ad::param(Tensor({cfg_.hidden_width}));
            levels_[l].push_back(std::move(layer));
            fan_in = cfg_.hidden_width;
        }
        Layer out;
        out.w = ad::param(Tensor({fan_in, out_channels_[l]}));
        out.b = ad::param(Tensor({out_channels_[l]}));
        levels_[l].push_back(std::move(out));
    }
}

ad::Value GuidanceAdapters::project(int level, const ad::Value& tokens) const {
    if (level < 0 || level > 3)
        throw std::out_of_range("adapter: level out of range");
    if (tokens.val().cols() != in_channels_)
        throw std::invalid_argument("adapter: token channel mismatch (want " +
                                    std::to_string(in_channels_) + ", got " +
                                    std::to_string(tokens.val().cols()) + ")");
    const auto& layers = levels_[level];
    ad::Value x = tokens;
    for (size_t i = 0; i < layers.size(); ++i) {
        x = ad::add_bias(ad::matmul(x, layers[i].w), layers[i].b);
        if (i + 1 < layers.size()) x = ad::gelu(x);
    }
    return x;
}

std::array<ad::Value, 4> GuidanceAdapters::project_all(
    const ad::Value& tokens, int64_t frames, int64_t grid_h, int64_t grid_w,
    const std::array<std::array<int64_t, 2>, 4>& sizes) const {
    if (tokens.val().rows() != frames * grid_h * grid_w)
        throw std::invalid_argument("adapter: token count does not match grid");
    std::array<ad::Value, 4> out;
    for (int l = 0; l < 4; ++l) {
        ad::Value proj = project(l, tokens);
        const auto [oh, ow] = std::pair{sizes[l][0], sizes[l][1]};
        if (oh == grid_h && ow == grid_w)
            out[l] = proj;
        else if (cfg_.bilinear_resize)
            out[l] = ad::resize_bilinear(proj, frames, grid_h, grid_w, oh, ow);
        else
            out[l] = ad::gather_rows(proj, nearest_indices(frames, grid_h, grid_w, oh, ow));
    }
    return out;
}

GuidanceStack GuidanceAdapters::project_guidance(
    const SemanticFeatureMap& feats, const std::array<std::array<int64_t, 2>, 4>& sizes,
    float weight) const {
    Tensor flat({feats.tokens(), feats.channels()}, feats.features.data);
    auto vals = project_all(ad::constant(std::move(flat)), feats.frame_count(),
                            feats.grid_h(), feats.grid_w(), sizes);
    GuidanceStack g;
    g.sizes = sizes;
    g.weight = weight;
    for (int l = 0; l < 4; ++l) g.levels[l] = vals[l].val();
    return g;
}

std::vector<ad::Value> GuidanceAdapters::trainable_params() {
    std::vector<ad::Value> out;
    for (auto& level : levels_)
        for (auto& layer : level) {
            out.push_back(layer.w);
            out.push_back(layer.b);
        }
    return out;
}

void GuidanceAdapters::store(ArrayArchive& archive, const std::string& prefix) const {
    archive.metadata[prefix + ".in_channels"] = std::to_string(in_channels_);
    for (int l = 0; l < 4; ++l) {
        archive.metadata[prefix + ".out_channels." + std::to_string(l)] =
            std::to_string(out_channels_[l]);
        for (size_t i = 0; i < levels_[l].size(); ++i) {
            const std::string base =
                prefix + "." + std::to_string(l) + ".lin" + std::to_string(i);
            archive.arrays[base + ".w"] = levels_[l][i].w.val();
            archive.arrays[base + ".b"] = levels_[l][i].b.val();
        }
    }
}

GuidanceAdapters GuidanceAdapters::restore(const ArrayArchive& archive,
                                           const AdapterCfg& cfg,
                                           const std::string& prefix) {
    GuidanceAdapters a;
    a.cfg_ = cfg;
    auto meta = [&](const std::string& key) {
        auto it = archive.metadata.find(key);
        if (it == archive.metadata.end())
            throw std::runtime_error("adapter restore: missing metadata " + key);
        return std::stoi(it->second);
    };
    a.in_channels_ = meta(prefix + ".in_channels");
    for (int l = 0; l < 4; ++l) {
        a.out_channels_[l] = meta(prefix + ".out_channels." + std::to_string(l));
        for (int i = 0; i <= cfg.depth; ++i) {
            const std::string base =
                prefix + "." + std::to_string(l) + ".lin" + std::to_string(i);
            auto wi = archive.arrays.find(base + ".w");
            auto bi = archive.arrays.find(base + ".b");
            if (wi == archive.arrays.end() || bi == archive.arrays.end())
                throw std::runtime_error("adapter restore: missing array " + base);
            Layer layer;
            layer.w = ad::param(wi->second);
            layer.b = ad::param(bi->second);
            a.levels_[l].push_back(std::move(layer));
        }
    }
    return a;
}

}  // namespace dive
