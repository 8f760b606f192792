#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "dive/schedule.hpp"

namespace dive {

struct ScheduleConfig {
    int total_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    BetaSpacing spacing = BetaSpacing::Linear;
};

struct AutoencoderCfg {
    int patch = 8;
    int latent_channels = 4;
};

struct DenoiserCfg {
    std::array<int, 4> channels = {8, 16, 24, 32};  // d_l ladder
    bool motion_layers_enabled = true;
    bool motion_layers_trainable = false;
    int temporal_window = 16;
    int text_dim = 16;
    int time_dim = 16;
    float out_scale = 0.01f;  // magnitude of the learned correction path
    uint64_t weight_seed = 0;
};

struct SemanticCfg {
    int patch = 28;
    int channels = 32;
};

struct AdapterCfg {
    int hidden_width = 256;
    int depth = 2;
    bool bilinear_resize = true;  // false -> nearest
};

struct LoraCfg {
    int rank = 4;
    float alpha = 4.0f;  // scale = alpha / rank
    float scale() const { return alpha / static_cast<float>(rank); }
};

struct Stage1Cfg {
    double learning_rate = 5e-4;
    int iterations = 100;
    float lambda = 1.0f;
    std::string prompt = "a cat moving";
};

struct Stage2Cfg {
    double learning_rate = 1e-4;
    int iterations = 1000;
    std::string class_word = "cat";
    std::string identifier = "sks";
    bool semantic_guidance = true;  // ablation: disable the phi branch
};

struct EditCfg {
    float lambda = 1.0f;
    int num_steps = 50;
    int injection_stop = -1;  // -1 -> resolved to T/2 at load
    std::string source_word = "cat";
    std::string target_word = "dog";
    bool blend_enabled = true;
    bool store_trajectory = true;  // false -> recompute inversion on demand
    float cfg_scale = 0.0f;        // classifier-free guidance hook, off by default
};

struct PathsCfg {
    std::string video_dir;
    std::string refs_dir;
    std::string mask_dir;
    std::string checkpoint_dir;
    std::string output_dir;
};

struct RunConfig {
    uint64_t seed = 0;
    ScheduleConfig schedule;
    AutoencoderCfg autoencoder;
    DenoiserCfg denoiser;
    SemanticCfg semantic;
    AdapterCfg adapter;
    LoraCfg lora;
    Stage1Cfg stage1;
    Stage2Cfg stage2;
    EditCfg edit;
    PathsCfg paths;
};

// Strict loader: unknown keys and invalid values are rejected with the
// offending key named. Environment variables (DIVE_VIDEO_DIR, DIVE_REFS_DIR,
// DIVE_MASK_DIR, DIVE_CHECKPOINT_DIR, DIVE_OUTPUT_DIR) override paths only.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& json_text);
std::string dump_config(const RunConfig& cfg);

}  // namespace dive
