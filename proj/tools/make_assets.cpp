// Generates the bundled synthetic clip (textured square over block noise),
// its analytic pixel mask, and reference stills, as frame directories the
// CLI subcommands consume.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "dive/assets.hpp"
#include "dive/autoencoder.hpp"
#include "dive/video.hpp"

namespace fs = std::filesystem;
using namespace dive;

int main(int argc, char** argv) {
    CLI::App app{"synthetic asset generator"};
    std::string out = "assets";
    uint64_t seed = 0;
    int frames = 16, size = 64, refs = 3, patch = 8, latent_channels = 4;
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", seed, "base seed");
    app.add_option("--frames", frames, "frame count");
    app.add_option("--size", size, "frame side in pixels");
    app.add_option("--refs", refs, "reference image count");
    app.add_option("--patch", patch, "codec patch size");
    app.add_option("--latent-channels", latent_channels, "codec channels");
    CLI11_PARSE(app, argc, argv);

    try {
        Autoencoder ae(AutoencoderConfig{patch, latent_channels});
        ToyAssets a = make_toy_assets(ae, seed, frames, size, refs);
        save_frames(a.video, fs::path(out) / "video");
        save_mask_frames(a.pixel_mask, fs::path(out) / "masks");
        Tensor ref_stack({refs, static_cast<int64_t>(size), static_cast<int64_t>(size), 3});
        for (int r = 0; r < refs; ++r)
            std::copy(a.reference_frames[r].data.begin(), a.reference_frames[r].data.end(),
                      ref_stack.data.begin() + static_cast<size_t>(r) * size * size * 3);
        save_frames(FrameVideo(std::move(ref_stack)), fs::path(out) / "refs");
        std::cout << "wrote " << frames << " frames, masks and " << refs
                  << " references under " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
