#include "dive/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dive {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_sorted(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("frame dir not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext)
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("no " + ext + " frames in " + dir.string());
    return files;
}

void read_pnm_header(std::ifstream& in, const std::string& magic, int64_t& w,
                     int64_t& h, const fs::path& p) {
    std::string m;
    in >> m;
    if (m != magic) throw std::runtime_error("bad " + magic + " file: " + p.string());
    int maxval = 0;
    in >> w >> h >> maxval;
    if (w < 1 || h < 1 || maxval != 255)
        throw std::runtime_error("unsupported PNM header in " + p.string());
    in.get();  // single whitespace before raster
}

uint8_t quantize(float v) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

FrameVideo load_frames(const fs::path& dir) {
    const auto files = list_sorted(dir, ".ppm");
    Tensor t;
    int64_t w = 0, h = 0;
    const int64_t n = static_cast<int64_t>(files.size());
    std::vector<uint8_t> buf;
    for (int64_t i = 0; i < n; ++i) {
        std::ifstream in(files[i], std::ios::binary);
        int64_t fw, fh;
        read_pnm_header(in, "P6", fw, fh, files[i]);
        if (i == 0) {
            w = fw;
            h = fh;
            t = Tensor({n, h, w, 3});
            buf.resize(static_cast<size_t>(w * h * 3));
        } else if (fw != w || fh != h) {
            throw std::runtime_error("inconsistent frame sizes in " + dir.string());
        }
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw std::runtime_error("truncated frame: " + files[i].string());
        float* out = t.data.data() + i * h * w * 3;
        for (size_t j = 0; j < buf.size(); ++j) out[j] = buf[j] / 255.0f;
    }
    return FrameVideo(std::move(t));
}

void save_frames(const FrameVideo& v, const fs::path& dir) {
    fs::create_directories(dir);
    const int64_t n = v.frame_count(), h = v.height(), w = v.width();
    std::vector<uint8_t> buf(static_cast<size_t>(h * w * 3));
    for (int64_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05lld.ppm", static_cast<long long>(i));
        std::ofstream out(dir / name, std::ios::binary);
        out << "P6\n" << w << " " << h << "\n255\n";
        const float* src = v.frame_ptr(i);
        for (size_t j = 0; j < buf.size(); ++j) buf[j] = quantize(src[j]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("failed writing frame to " + dir.string());
    }
}

void save_mask_frames(const Tensor& mask, const fs::path& dir) {
    if (mask.shape.size() != 3)
        throw std::invalid_argument("save_mask_frames: expected [N,h,w]");
    fs::create_directories(dir);
    const int64_t n = mask.shape[0], h = mask.shape[1], w = mask.shape[2];
    std::vector<uint8_t> buf(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05lld.pgm", static_cast<long long>(i));
        std::ofstream out(dir / name, std::ios::binary);
        out << "P5\n" << w << " " << h << "\n255\n";
        const float* src = mask.data.data() + i * h * w;
        for (size_t j = 0; j < buf.size(); ++j) buf[j] = src[j] > 0.5f ? 255 : 0;
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
    }
}

Tensor load_mask_frames(const fs::path& dir) {
    const auto files = list_sorted(dir, ".pgm");
    Tensor t;
    int64_t w = 0, h = 0;
    const int64_t n = static_cast<int64_t>(files.size());
    std::vector<uint8_t> buf;
    for (int64_t i = 0; i < n; ++i) {
        std::ifstream in(files[i], std::ios::binary);
        int64_t fw, fh;
        read_pnm_header(in, "P5", fw, fh, files[i]);
        if (i == 0) {
            w = fw;
            h = fh;
            t = Tensor({n, h, w});
            buf.resize(static_cast<size_t>(w * h));
        } else if (fw != w || fh != h) {
            throw std::runtime_error("inconsistent mask sizes in " + dir.string());
        }
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw std::runtime_error("truncated mask: " + files[i].string());
        float* out = t.data.data() + i * h * w;
        for (size_t j = 0; j < buf.size(); ++j) out[j] = buf[j] >= 128 ? 1.0f : 0.0f;
    }
    return t;
}

}  // namespace dive
