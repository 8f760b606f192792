#include "dive/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dive {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
    throw std::runtime_error("config: unknown key \"" +
                             (section.empty() ? key : section + "." + key) + "\"");
}

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& known) {
    if (!j.is_object())
        throw std::runtime_error("config: section \"" + section + "\" must be an object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) bad_key(section, k);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void apply_env_overrides(PathsCfg& p) {
    if (const char* v = std::getenv("DIVE_VIDEO_DIR")) p.video_dir = v;
    if (const char* v = std::getenv("DIVE_REFS_DIR")) p.refs_dir = v;
    if (const char* v = std::getenv("DIVE_MASK_DIR")) p.mask_dir = v;
    if (const char* v = std::getenv("DIVE_CHECKPOINT_DIR")) p.checkpoint_dir = v;
    if (const char* v = std::getenv("DIVE_OUTPUT_DIR")) p.output_dir = v;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: parse error: ") + e.what());
    }
    RunConfig c;
    check_keys(j, "",
               {"seed", "schedule", "autoencoder", "denoiser", "semantic", "adapter",
                "lora", "stage1", "stage2", "edit", "paths"});
    get_to(j, "seed", c.seed);

    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        check_keys(s, "schedule", {"total_steps", "beta_start", "beta_end", "spacing"});
        get_to(s, "total_steps", c.schedule.total_steps);
        get_to(s, "beta_start", c.schedule.beta_start);
        get_to(s, "beta_end", c.schedule.beta_end);
        if (s.contains("spacing")) {
            const std::string v = s["spacing"].get<std::string>();
            if (v == "linear")
                c.schedule.spacing = BetaSpacing::Linear;
            else if (v == "scaled_linear")
                c.schedule.spacing = BetaSpacing::ScaledLinear;
            else
                throw std::runtime_error("config: schedule.spacing must be "
                                         "\"linear\" or \"scaled_linear\"");
        }
    }
    if (j.contains("autoencoder")) {
        const json& s = j["autoencoder"];
        check_keys(s, "autoencoder", {"patch", "latent_channels"});
        get_to(s, "patch", c.autoencoder.patch);
        get_to(s, "latent_channels", c.autoencoder.latent_channels);
    }
    if (j.contains("denoiser")) {
        const json& s = j["denoiser"];
        check_keys(s, "denoiser",
                   {"channels", "motion_layers_enabled", "motion_layers_trainable",
                    "temporal_window", "text_dim", "time_dim", "out_scale",
                    "weight_seed"});
        get_to(s, "channels", c.denoiser.channels);
        get_to(s, "motion_layers_enabled", c.denoiser.motion_layers_enabled);
        get_to(s, "motion_layers_trainable", c.denoiser.motion_layers_trainable);
        get_to(s, "temporal_window", c.denoiser.temporal_window);
        get_to(s, "text_dim", c.denoiser.text_dim);
        get_to(s, "time_dim", c.denoiser.time_dim);
        get_to(s, "out_scale", c.denoiser.out_scale);
        get_to(s, "weight_seed", c.denoiser.weight_seed);
        if (c.denoiser.temporal_window < 1)
            throw std::runtime_error("config: denoiser.temporal_window must be >= 1");
    }
    if (j.contains("semantic")) {
        const json& s = j["semantic"];
        check_keys(s, "semantic", {"patch", "channels"});
        get_to(s, "patch", c.semantic.patch);
        get_to(s, "channels", c.semantic.channels);
    }
    if (j.contains("adapter")) {
        const json& s = j["adapter"];
        check_keys(s, "adapter", {"hidden_width", "depth", "bilinear_resize"});
        get_to(s, "hidden_width", c.adapter.hidden_width);
        get_to(s, "depth", c.adapter.depth);
        get_to(s, "bilinear_resize", c.adapter.bilinear_resize);
    }
    if (j.contains("lora")) {
        const json& s = j["lora"];
        check_keys(s, "lora", {"rank", "alpha"});
        get_to(s, "rank", c.lora.rank);
        get_to(s, "alpha", c.lora.alpha);
        if (c.lora.rank < 1) throw std::runtime_error("config: lora.rank must be >= 1");
    }
    if (j.contains("stage1")) {
        const json& s = j["stage1"];
        check_keys(s, "stage1", {"learning_rate", "iterations", "lambda", "prompt"});
        get_to(s, "learning_rate", c.stage1.learning_rate);
        get_to(s, "iterations", c.stage1.iterations);
        get_to(s, "lambda", c.stage1.lambda);
        get_to(s, "prompt", c.stage1.prompt);
        if (c.stage1.iterations < 1)
            throw std::runtime_error("config: stage1.iterations must be >= 1");
    }
    if (j.contains("stage2")) {
        const json& s = j["stage2"];
        check_keys(s, "stage2",
                   {"learning_rate", "iterations", "class_word", "identifier",
                    "semantic_guidance"});
        get_to(s, "learning_rate", c.stage2.learning_rate);
        get_to(s, "iterations", c.stage2.iterations);
        get_to(s, "class_word", c.stage2.class_word);
        get_to(s, "identifier", c.stage2.identifier);
        get_to(s, "semantic_guidance", c.stage2.semantic_guidance);
        if (c.stage2.iterations < 1)
            throw std::runtime_error("config: stage2.iterations must be >= 1");
    }
    if (j.contains("edit")) {
        const json& s = j["edit"];
        check_keys(s, "edit",
                   {"lambda", "num_steps", "injection_stop", "source_word",
                    "target_word", "blend_enabled", "store_trajectory", "cfg_scale"});
        get_to(s, "lambda", c.edit.lambda);
        get_to(s, "num_steps", c.edit.num_steps);
        get_to(s, "injection_stop", c.edit.injection_stop);
        get_to(s, "source_word", c.edit.source_word);
        get_to(s, "target_word", c.edit.target_word);
        get_to(s, "blend_enabled", c.edit.blend_enabled);
        get_to(s, "store_trajectory", c.edit.store_trajectory);
        get_to(s, "cfg_scale", c.edit.cfg_scale);
        if (c.edit.num_steps < 1)
            throw std::runtime_error("config: edit.num_steps must be >= 1");
    }
    if (j.contains("paths")) {
        const json& s = j["paths"];
        check_keys(s, "paths",
                   {"video_dir", "refs_dir", "mask_dir", "checkpoint_dir", "output_dir"});
        get_to(s, "video_dir", c.paths.video_dir);
        get_to(s, "refs_dir", c.paths.refs_dir);
        get_to(s, "mask_dir", c.paths.mask_dir);
        get_to(s, "checkpoint_dir", c.paths.checkpoint_dir);
        get_to(s, "output_dir", c.paths.output_dir);
    }
    apply_env_overrides(c.paths);

    if (c.edit.injection_stop < 0)
        c.edit.injection_stop = c.schedule.total_steps / 2;
    if (c.edit.injection_stop > c.schedule.total_steps)
        throw std::runtime_error("config: edit.injection_stop must be <= total_steps");
    // Exercises the range checks early.
    build_schedule(c.schedule.total_steps, c.schedule.beta_start, c.schedule.beta_end,
                   c.schedule.spacing);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string dump_config(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["schedule"] = {{"total_steps", c.schedule.total_steps},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end},
                     {"spacing", c.schedule.spacing == BetaSpacing::Linear
                                     ? "linear"
                                     : "scaled_linear"}};
    j["autoencoder"] = {{"patch", c.autoencoder.patch},
                        {"latent_channels", c.autoencoder.latent_channels}};
    j["denoiser"] = {{"channels", c.denoiser.channels},
                     {"motion_layers_enabled", c.denoiser.motion_layers_enabled},
                     {"motion_layers_trainable", c.denoiser.motion_layers_trainable},
                     {"temporal_window", c.denoiser.temporal_window},
                     {"text_dim", c.denoiser.text_dim},
                     {"time_dim", c.denoiser.time_dim},
                     {"out_scale", c.denoiser.out_scale},
                     {"weight_seed", c.denoiser.weight_seed}};
    j["semantic"] = {{"patch", c.semantic.patch}, {"channels", c.semantic.channels}};
    j["adapter"] = {{"hidden_width", c.adapter.hidden_width},
                    {"depth", c.adapter.depth},
                    {"bilinear_resize", c.adapter.bilinear_resize}};
    j["lora"] = {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}};
    j["stage1"] = {{"learning_rate", c.stage1.learning_rate},
                   {"iterations", c.stage1.iterations},
                   {"lambda", c.stage1.lambda},
                   {"prompt", c.stage1.prompt}};
    j["stage2"] = {{"learning_rate", c.stage2.learning_rate},
                   {"iterations", c.stage2.iterations},
                   {"class_word", c.stage2.class_word},
                   {"identifier", c.stage2.identifier},
                   {"semantic_guidance", c.stage2.semantic_guidance}};
    j["edit"] = {{"lambda", c.edit.lambda},
                 {"num_steps", c.edit.num_steps},
                 {"injection_stop", c.edit.injection_stop},
                 {"source_word", c.edit.source_word},
                 {"target_word", c.edit.target_word},
                 {"blend_enabled", c.edit.blend_enabled},
                 {"store_trajectory", c.edit.store_trajectory},
                 {"cfg_scale", c.edit.cfg_scale}};
    j["paths"] = {{"video_dir", c.paths.video_dir},
                  {"refs_dir", c.paths.refs_dir},
                  {"mask_dir", c.paths.mask_dir},
                  {"checkpoint_dir", c.paths.checkpoint_dir},
                  {"output_dir", c.paths.output_dir}};
    return j.dump(2);
}

}  // namespace dive
