#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dive/ablation.hpp"
#include "dive/assets.hpp"
#include "dive/autoencoder.hpp"
#include "dive/checkpoint.hpp"
#include "dive/config.hpp"
#include "dive/denoiser.hpp"
#include "dive/guidance.hpp"
#include "dive/inference.hpp"
#include "dive/lora.hpp"
#include "dive/metrics.hpp"
#include "dive/rng.hpp"
#include "dive/semantic.hpp"
#include "dive/training.hpp"

namespace fs = std::filesystem;
using namespace dive;

namespace {

struct Pipeline {
    RunConfig cfg;
    Autoencoder ae;
    Denoiser den;
    ToySemanticBackend backend;

    explicit Pipeline(const RunConfig& c)
        : cfg(c),
          ae(AutoencoderConfig{c.autoencoder.patch, c.autoencoder.latent_channels}),
          den(c.denoiser,
              build_schedule(c.schedule.total_steps, c.schedule.beta_start,
                             c.schedule.beta_end, c.schedule.spacing),
              c.autoencoder.latent_channels),
          backend(c.semantic.patch, c.semantic.channels,
                  derive_seed(c.seed, "semantic")) {}
};

struct Clip {
    FrameVideo video;
    LatentVideo z0;
    SemanticFeatureMap subject_tokens;
    Tensor token_mask;
};

Clip load_clip(const Pipeline& p) {
    Clip c;
    c.video = load_frames(p.cfg.paths.video_dir);
    c.z0 = p.ae.encode_video(c.video);
    SemanticFeatureMap feats = extract_semantic_features(c.video, p.backend);
    ForegroundMask fm = foreground_mask(feats, fit_pca(feats, 1));
    c.subject_tokens = masked_foreground(feats, fm);
    c.token_mask = fm.mask;
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

fs::path checkpoint_path(const RunConfig& cfg, const char* name) {
    if (cfg.paths.checkpoint_dir.empty())
        throw std::runtime_error("config: paths.checkpoint_dir is required here");
    return fs::path(cfg.paths.checkpoint_dir) / name;
}

int cmd_mask(const Pipeline& p, const std::string& out) {
    Clip clip = load_clip(p);
    const fs::path dir = out.empty() ? p.cfg.paths.mask_dir : out;
    if (dir.empty()) throw std::runtime_error("mask: no output directory");
    save_mask_frames(clip.token_mask, dir);
    std::cout << "wrote " << clip.token_mask.shape[0] << " mask frames to " << dir
              << "\n";
    return 0;
}

int cmd_visualize(const Pipeline& p, const std::string& out, bool masked) {
    FrameVideo video = load_frames(p.cfg.paths.video_dir);
    SemanticFeatureMap feats = extract_semantic_features(video, p.backend);
    PCABasis basis3 = fit_pca(feats, 3);
    ForegroundMask fm;
    if (masked) fm = foreground_mask(feats, fit_pca(feats, 1));
    FrameVideo viz = pca_rgb_visualization(feats, basis3, masked ? &fm : nullptr);
    save_frames(viz, out);
    std::cout << "wrote " << viz.frame_count() << " feature grids to " << out << "\n";
    return 0;
}

int cmd_train_motion(const Pipeline& p, const std::string& loss_csv) {
    Clip clip = load_clip(p);
    GuidanceAdapters psi(p.cfg.adapter, static_cast<int>(clip.subject_tokens.channels()),
                         p.cfg.denoiser.channels, derive_seed(p.cfg.seed, "psi"));
    const std::string hash_before = p.den.weight_hash();
    TrainingReport rep = train_motion_adapters(p.cfg, p.den, psi, clip.z0,
                                               clip.subject_tokens, clip.token_mask);
    if (p.den.weight_hash() != hash_before)
        throw std::runtime_error("train-motion: denoiser weights changed");
    ArrayArchive arc;
    arc.metadata["kind"] = "motion-adapters";
    psi.store(arc);
    const fs::path path = checkpoint_path(p.cfg, "psi.dive");
    arc.save(path);
    if (!loss_csv.empty()) write_loss_csv(loss_csv, rep);
    std::cout << "stage 1 probe loss " << rep.probe_loss_before << " -> "
              << rep.probe_loss_after << "; saved " << path << "\n";
    return 0;
}

int cmd_register_identity(const Pipeline& p, const std::string& loss_csv) {
    FrameVideo refs = load_frames(p.cfg.paths.refs_dir);
    LatentVideo ref_z0 = p.ae.encode_video(refs);
    SemanticFeatureMap ref_tokens = extract_semantic_features(refs, p.backend);
    GuidanceAdapters phi(p.cfg.adapter, static_cast<int>(ref_tokens.channels()),
                         p.cfg.denoiser.channels, derive_seed(p.cfg.seed, "phi"));
    LoraSet lora;
    TrainingReport rep = register_identity(
        p.cfg, p.den, p.cfg.stage2.semantic_guidance ? &phi : nullptr, lora, ref_z0,
        ref_tokens);
    ArrayArchive arc;
    arc.metadata["kind"] = "identity";
    store_lora(arc, lora);
    if (p.cfg.stage2.semantic_guidance) phi.store(arc, "phi");
    const fs::path path = checkpoint_path(p.cfg, "identity.dive");
    arc.save(path);
    if (!loss_csv.empty()) write_loss_csv(loss_csv, rep);
    std::cout << "stage 2 probe loss " << rep.probe_loss_before << " -> "
              << rep.probe_loss_after << "; saved " << path << "\n";
    return 0;
}

int cmd_invert(const Pipeline& p, const std::string& out) {
    Clip clip = load_clip(p);
    InversionResult inv = invert_video(p.cfg, p.den, clip.z0, p.cfg.stage1.prompt);
    ArrayArchive arc;
    arc.metadata["kind"] = "inversion";
    arc.metadata["prompt"] = p.cfg.stage1.prompt;
    if (p.cfg.edit.store_trajectory)
        for (size_t k = 0; k < inv.trajectory.size(); ++k)
            arc.arrays["z" + std::to_string(k)] = inv.trajectory[k];
    else
        arc.arrays["z" + std::to_string(inv.trajectory.size() - 1)] =
            inv.trajectory.back();
    const fs::path path = out.empty() ? checkpoint_path(p.cfg, "inversion.dive")
                                      : fs::path(out);
    arc.save(path);
    std::cout << "saved inversion (" << inv.timesteps.size() << " steps) to " << path
              << "\n";
    return 0;
}

int cmd_edit(const Pipeline& p, const std::string& out) {
    if (out.empty()) throw std::runtime_error("edit: --out is required");
    Clip clip = load_clip(p);

    std::optional<GuidanceAdapters> psi;
    const fs::path psi_path = checkpoint_path(p.cfg, "psi.dive");
    if (fs::exists(psi_path))
        psi = GuidanceAdapters::restore(ArrayArchive::load(psi_path), p.cfg.adapter);
    else if (p.cfg.edit.lambda != 0.0f)
        throw std::runtime_error("edit: missing checkpoint " + psi_path.string() +
                                 " (run train-motion first or set edit.lambda = 0)");

    std::optional<LoraSet> lora;
    const fs::path id_path = checkpoint_path(p.cfg, "identity.dive");
    if (fs::exists(id_path)) lora = restore_lora(ArrayArchive::load(id_path));

    EditResult res = edit_video(p.cfg, p.den, p.ae, psi ? &*psi : nullptr,
                                lora ? &*lora : nullptr, clip.video,
                                clip.subject_tokens, clip.token_mask);
    save_frames(res.frames, fs::path(out) / "frames");
    write_text(fs::path(out) / "manifest.json", res.manifest_json);
    std::cout << "edited \"" << res.source_prompt << "\" -> \"" << res.target_prompt
              << "\"; wrote " << out << "\n";
    return 0;
}

int cmd_evaluate(const Pipeline& p, const std::string& frames_dir,
                 const std::string& out) {
    FrameVideo edited = load_frames(frames_dir);
    ToyEmbedder embedder(64, derive_seed(p.cfg.seed, "embedder"));
    const std::string target_prompt = swap_subject_word(
        p.cfg.stage1.prompt, p.cfg.edit.source_word, p.cfg.edit.target_word);

    MethodScores row;
    row.method = "dive";
    row.text_alignment = text_alignment(edited, target_prompt, embedder);
    row.temporal_consistency = temporal_consistency(edited, embedder);
    if (!p.cfg.paths.refs_dir.empty() && fs::exists(p.cfg.paths.refs_dir)) {
        FrameVideo refs = load_frames(p.cfg.paths.refs_dir);
        std::vector<Tensor> ref_frames;
        for (int64_t n = 0; n < refs.frame_count(); ++n)
            ref_frames.push_back(video_frame(refs, n));
        row.image_alignment = image_alignment(edited, ref_frames, embedder);
    }
    const std::string csv = evaluation_csv({row});
    if (!out.empty()) write_text(out, csv);
    std::cout << evaluation_table({row});
    return 0;
}

int cmd_ablate(const Pipeline& p, const std::string& variant,
               std::vector<float> lambdas, const std::string& out) {
    AblationSpec spec;
    spec.variant = parse_ablation_variant(variant);
    if (!lambdas.empty()) spec.lambda_values = std::move(lambdas);
    spec.base = p.cfg;

    ToyAssets assets;
    assets.video = p.ae.project(load_frames(p.cfg.paths.video_dir));
    if (!p.cfg.paths.refs_dir.empty() && fs::exists(p.cfg.paths.refs_dir)) {
        FrameVideo refs = load_frames(p.cfg.paths.refs_dir);
        for (int64_t n = 0; n < refs.frame_count(); ++n)
            assets.reference_frames.push_back(video_frame(refs, n));
    }
    ToyEmbedder embedder(64, derive_seed(p.cfg.seed, "embedder"));
    AblationResult res =
        run_ablation(spec, p.den, p.ae, p.backend, assets, embedder);
    if (!out.empty()) write_text(out, res.csv);
    std::cout << evaluation_table(res.rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subject-driven video editing pipeline"};
    app.require_subcommand(1);

    std::string config_path, out, frames_dir, variant = "lambda_sweep", loss_csv;
    std::vector<float> lambdas;
    bool masked_viz = false;
    app.add_option("--config", config_path, "run configuration file")->required();

    auto* mask = app.add_subcommand("mask", "derive subject masks from features");
    mask->add_option("--out", out, "mask output directory");
    auto* viz = app.add_subcommand("visualize-features", "PCA RGB feature grids");
    viz->add_option("--out", out, "output directory")->required();
    viz->add_flag("--masked", masked_viz, "black out the background");
    auto* tm = app.add_subcommand("train-motion", "stage 1: fit guidance adapters");
    tm->add_option("--loss-csv", loss_csv, "per-iteration loss CSV");
    auto* ri = app.add_subcommand("register-identity", "stage 2: LoRA + identity adapters");
    ri->add_option("--loss-csv", loss_csv, "per-iteration loss CSV");
    auto* inv = app.add_subcommand("invert", "DDIM-invert the source clip");
    inv->add_option("--out", out, "archive path");
    auto* edit = app.add_subcommand("edit", "run the full edit");
    edit->add_option("--out", out, "output directory")->required();
    auto* ev = app.add_subcommand("evaluate", "score an edited clip");
    ev->add_option("--frames", frames_dir, "edited frame directory")->required();
    ev->add_option("--out", out, "CSV path");
    auto* ab = app.add_subcommand("ablate", "run an ablation variant");
    ab->add_option("--variant", variant, "variant name");
    ab->add_option("--lambdas", lambdas, "lambda sweep values");
    ab->add_option("--out", out, "CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        Pipeline p(load_config(config_path));
        if (*mask) return cmd_mask(p, out);
        if (*viz) return cmd_visualize(p, out, masked_viz);
        if (*tm) return cmd_train_motion(p, loss_csv);
        if (*ri) return cmd_register_identity(p, loss_csv);
        if (*inv) return cmd_invert(p, out);
        if (*edit) return cmd_edit(p, out);
        if (*ev) return cmd_evaluate(p, frames_dir, out);
        if (*ab) return cmd_ablate(p, variant, lambdas, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
