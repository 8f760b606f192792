#include "dive/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

namespace {

constexpr int kGrid = 8;

void normalize(Tensor& v) {
    double n = 0;
    for (float x : v.data) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    if (n < 1e-12) throw std::runtime_error("embedder: zero-norm embedding");
    for (float& x : v.data) x = static_cast<float>(x / n);
}

double cosine(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine");
    if (a.data == b.data) return 1.0;  // identical inputs score exactly 1
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        dot += static_cast<double>(a.data[i]) * b.data[i];
        na += static_cast<double>(a.data[i]) * a.data[i];
        nb += static_cast<double>(b.data[i]) * b.data[i];
    }
    if (na < 1e-24 || nb < 1e-24) throw std::runtime_error("cosine: zero-norm embedding");
    return dot / std::sqrt(na * nb);  // invariant to positive rescaling
}

}  // namespace

ToyEmbedder::ToyEmbedder(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
    auto rng = make_rng(seed, "embedder:image_proj");
    image_proj_ = gaussian_tensor({kGrid * kGrid * 3, dim}, rng,
                                  1.0f / std::sqrt(static_cast<float>(kGrid * kGrid * 3)));
}

Tensor ToyEmbedder::embed_image(const Tensor& frame) const {
    if (frame.shape.size() != 3 || frame.shape[2] != 3)
        throw std::invalid_argument("embed_image: expected [H,W,3]");
    const int64_t h = frame.shape[0], w = frame.shape[1];
    // Area downsample onto the kGrid x kGrid pooling grid.
    Tensor pooled({kGrid * kGrid * 3});
    std::vector<int> counts(kGrid * kGrid, 0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const int64_t gy = std::min<int64_t>(kGrid - 1, y * kGrid / h);
            const int64_t gx = std::min<int64_t>(kGrid - 1, x * kGrid / w);
            const int64_t cell = gy * kGrid + gx;
            ++counts[cell];
            for (int c = 0; c < 3; ++c)
                pooled.data[cell * 3 + c] += frame.data[(y * w + x) * 3 + c];
        }
    for (int64_t cell = 0; cell < kGrid * kGrid; ++cell)
        if (counts[cell])
            for (int c = 0; c < 3; ++c) pooled.data[cell * 3 + c] /= counts[cell];

    Tensor out({dim_});
    for (int64_t i = 0; i < kGrid * kGrid * 3; ++i)
        for (int j = 0; j < dim_; ++j)
            out.data[j] += pooled.data[i] * image_proj_.data[i * dim_ + j];
    // Bias keeps near-black frames away from the zero vector.
    out.data[0] += 1e-3f;
    normalize(out);
    return out;
}

Tensor ToyEmbedder::embed_text(const std::string& text) const {
    std::istringstream iss(text);
    std::string tok;
    Tensor out({dim_});
    int count = 0;
    while (iss >> tok) {
        auto rng = make_rng(seed_, "embedder:token:" + tok);
        std::normal_distribution<float> dist(0.0f, 1.0f);
        for (int j = 0; j < dim_; ++j) out.data[j] += dist(rng);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("embed_text: empty text");
    normalize(out);
    return out;
}

Tensor video_frame(const FrameVideo& v, int64_t n) {
    if (n < 0 || n >= v.frame_count())
        throw std::out_of_range("video_frame: index out of range");
    const int64_t sz = v.height() * v.width() * 3;
    Tensor f({v.height(), v.width(), 3});
    std::copy(v.frame_ptr(n), v.frame_ptr(n) + sz, f.data.begin());
    return f;
}

double text_alignment(const FrameVideo& v, const std::string& prompt,
                      const EmbedderInterface& e) {
    const Tensor te = e.embed_text(prompt);
    double acc = 0;
    for (int64_t n = 0; n < v.frame_count(); ++n)
        acc += 100.0 * cosine(e.embed_image(video_frame(v, n)), te);
    return acc / v.frame_count();
}

double image_alignment(const FrameVideo& v, const std::vector<Tensor>& references,
                       const EmbedderInterface& e) {
    if (references.empty())
        throw std::invalid_argument("image_alignment: no reference images");
    std::vector<Tensor> refs;
    for (const auto& r : references) refs.push_back(e.embed_image(r));
    double acc = 0;
    for (int64_t n = 0; n < v.frame_count(); ++n) {
        const Tensor fe = e.embed_image(video_frame(v, n));
        for (const auto& re : refs) acc += 100.0 * cosine(fe, re);
    }
    return acc / (v.frame_count() * static_cast<double>(refs.size()));
}

double temporal_consistency(const FrameVideo& v, const EmbedderInterface& e) {
    if (v.frame_count() < 2)
        throw std::invalid_argument("temporal_consistency: need at least two frames");
    Tensor prev = e.embed_image(video_frame(v, 0));
    double acc = 0;
    for (int64_t n = 1; n < v.frame_count(); ++n) {
        Tensor cur = e.embed_image(video_frame(v, n));
        acc += 100.0 * cosine(prev, cur);
        prev = std::move(cur);
    }
    return acc / (v.frame_count() - 1);
}

namespace {

std::string cell(const std::optional<double>& v) {
    if (!v) return "\\";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << *v;
    return os.str();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string evaluation_csv(const std::vector<MethodScores>& rows) {
    std::ostringstream os;
    os << "method,text_alignment,image_alignment,temporal_consistency\n";
    for (const auto& r : rows)
        os << csv_escape(r.method) << "," << cell(r.text_alignment) << ","
           << cell(r.image_alignment) << "," << cell(r.temporal_consistency) << "\n";
    return os.str();
}

std::string evaluation_table(const std::vector<MethodScores>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "method" << std::right << std::setw(10) << "text"
       << std::setw(10) << "image" << std::setw(12) << "temporal" << "\n";
    for (const auto& r : rows)
        os << std::left << std::setw(28) << r.method << std::right << std::setw(10)
           << cell(r.text_alignment) << std::setw(10) << cell(r.image_alignment)
           << std::setw(12) << cell(r.temporal_consistency) << "\n";
    return os.str();
}

}  // namespace dive
