#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dive/tensor.hpp"
#include "dive/video.hpp"

namespace dive {

// Pluggable embedding backend for the evaluation metrics. A CLIP-style
// encoder drops in here; the bundled toy embedder keeps the harness
// self-contained.
class EmbedderInterface {
  public:
    virtual ~EmbedderInterface() = default;
    virtual int dim() const = 0;
    virtual Tensor embed_image(const Tensor& frame) const = 0;  // [H,W,3] -> [dim], unit norm
    virtual Tensor embed_text(const std::string& text) const = 0;  // [dim], unit norm
};

// Frozen random projections: images are area-downsampled to an 8x8 grid and
// projected; text is a normalized bag of hashed tokens.
class ToyEmbedder : public EmbedderInterface {
  public:
    explicit ToyEmbedder(int dim = 64, uint64_t seed = 0);
    int dim() const override { return dim_; }
    Tensor embed_image(const Tensor& frame) const override;
    Tensor embed_text(const std::string& text) const override;

  private:
    int dim_;
    uint64_t seed_;
    Tensor image_proj_;  // [8*8*3, dim]
};

Tensor video_frame(const FrameVideo& v, int64_t n);  // copy of frame n, [H,W,3]

// All scores are 100 x cosine similarity, averaged.
double text_alignment(const FrameVideo& v, const std::string& prompt,
                      const EmbedderInterface& e);
double image_alignment(const FrameVideo& v, const std::vector<Tensor>& references,
                       const EmbedderInterface& e);
double temporal_consistency(const FrameVideo& v, const EmbedderInterface& e);

struct MethodScores {
    std::string method;
    std::optional<double> text_alignment;
    std::optional<double> image_alignment;
    std::optional<double> temporal_consistency;
};

// CSV: header + one row per method; inapplicable cells hold "\".
std::string evaluation_csv(const std::vector<MethodScores>& rows);
// Fixed-width text table with the same cells.
std::string evaluation_table(const std::vector<MethodScores>& rows);

}  // namespace dive
