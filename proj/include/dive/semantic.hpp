#pragma once

#include <memory>

#include "dive/tensor.hpp"
#include "dive/video.hpp"

namespace dive {

// Per-frame patch-token features, layout [N, h, w, c].
struct SemanticFeatureMap {
    Tensor features;

    int64_t frame_count() const { return features.shape[0]; }
    int64_t grid_h() const { return features.shape[1]; }
    int64_t grid_w() const { return features.shape[2]; }
    int64_t channels() const { return features.shape[3]; }
    int64_t tokens() const { return frame_count() * grid_h() * grid_w(); }
};

// Binary per-token masks, layout [N, h, w], values in {0,1}.
struct ForegroundMask {
    Tensor mask;

    int64_t frame_count() const { return mask.shape[0]; }
    int64_t grid_h() const { return mask.shape[1]; }
    int64_t grid_w() const { return mask.shape[2]; }
};

struct PCABasis {
    Tensor mean;                // [c]
    Tensor components;          // [k, c], rows orthonormal
    Tensor explained_variance;  // [k], non-increasing

    int64_t rank() const { return components.shape.empty() ? 0 : components.shape[0]; }
};

// Any extractor producing an [N,h,w,c] token map plugs in here.
class SemanticBackend {
  public:
    virtual ~SemanticBackend() = default;
    virtual int patch_size() const = 0;
    virtual SemanticFeatureMap extract(const FrameVideo& v) const = 0;
};

// Frozen random patch projection followed by one spatial self-attention
// mixing layer, so tokens carry neighborhood context.
class ToySemanticBackend : public SemanticBackend {
  public:
    explicit ToySemanticBackend(int patch = 28, int channels = 32, uint64_t seed = 0);
    int patch_size() const override { return patch_; }
    int channels() const { return channels_; }
    SemanticFeatureMap extract(const FrameVideo& v) const override;

  private:
    int patch_;
    int channels_;
    Tensor proj_;           // [patch*patch*3, c]
    Tensor wq_, wk_, wv_;   // [c, c]
};

SemanticFeatureMap extract_semantic_features(const FrameVideo& v,
                                             const SemanticBackend& backend);

// Joint PCA over all frames' tokens.
PCABasis fit_pca(const SemanticFeatureMap& f, int k);

enum class ThresholdMethod { Otsu, Quantile };
enum class SignOrientation { Auto, Positive, Negative };

struct ThresholdPolicy {
    ThresholdMethod method = ThresholdMethod::Otsu;
    double quantile = 0.5;  // used by Quantile
    SignOrientation orientation = SignOrientation::Auto;
};

ForegroundMask foreground_mask(const SemanticFeatureMap& f, const PCABasis& basis,
                               const ThresholdPolicy& policy = {});

SemanticFeatureMap masked_foreground(const SemanticFeatureMap& f, const ForegroundMask& m);

// Token-grid RGB rendering of the top-3 PCA projections; background
// (when a mask is given) is painted black.
FrameVideo pca_rgb_visualization(const SemanticFeatureMap& f, const PCABasis& basis3,
                                 const ForegroundMask* mask = nullptr);

// Nearest-neighbor transport of a binary mask to another grid, 0.5 threshold.
Tensor resample_mask(const Tensor& mask, int64_t out_h, int64_t out_w);

// Otsu threshold on raw scores (exposed for oracle tests).
float otsu_threshold(const std::vector<float>& scores);

}  // namespace dive
