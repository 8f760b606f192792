#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dive/tensor.hpp"

namespace dive::ad {

// Tape-based reverse-mode autodiff. Activations are 2-D [rows, cols]
// tensors; spatial/temporal layout changes are expressed as row
// permutations so every op stays a flat matrix kernel.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily, same shape as val
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    Tensor& ensure_grad() {
        if (grad.data.empty()) grad = Tensor(val.shape);
        return grad;
    }
};

class Value {
  public:
    Value() = default;
    explicit Value(NodePtr n) : n_(std::move(n)) {}

    const Tensor& val() const { return n_->val; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool defined() const { return static_cast<bool>(n_); }
    NodePtr node() const { return n_; }
    void zero_grad() {
        if (n_ && !n_->grad.data.empty())
            std::fill(n_->grad.data.begin(), n_->grad.data.end(), 0.0f);
    }
    // In-place update of a leaf parameter's value (optimizer use only).
    Tensor& mutable_val() { return n_->val; }

  private:
    NodePtr n_;
};

Value constant(Tensor t);
Value param(Tensor t);  // leaf with requires_grad = true

// Elementwise / broadcast
Value add(const Value& a, const Value& b);          // same shape
Value sub(const Value& a, const Value& b);          // same shape
Value mul(const Value& a, const Value& b);          // same shape
Value scale(const Value& a, float s);
Value add_bias(const Value& x, const Value& b);     // x [n,d] + b [d]
Value add_row(const Value& x, const Value& r);      // x [n,d] + r [1,d]
Value mul_row(const Value& x, const Value& r);      // x [n,d] * r [1,d]
Value add_tiled(const Value& x, const Value& p);    // x [B*g,d] + tiled p [g,d]
Value mask_rows(const Value& x, const Tensor& m);   // x [n,d] * m[n] (constant mask)
Value gelu(const Value& x);

// Linear algebra
Value matmul(const Value& a, const Value& b);       // [n,k] x [k,m]

// Layout / resampling (all linear, all row-level)
Value gather_rows(const Value& x, std::vector<int64_t> idx);
Value avg_pool2x2(const Value& x, int64_t frames, int64_t h, int64_t w);
Value upsample2x(const Value& x, int64_t frames, int64_t h, int64_t w);
Value resize_bilinear(const Value& x, int64_t frames, int64_t h, int64_t w,
                      int64_t out_h, int64_t out_w);
Value im2col3x3(const Value& x, int64_t frames, int64_t h, int64_t w);

// Attention over groups of `group` consecutive rows: softmax(q k^T / sqrt(d)) v.
Value grouped_attention(const Value& q, const Value& k, const Value& v, int64_t group);

// Reductions
Value sum(const Value& x);  // -> scalar [1]

// Runs reverse-mode accumulation from a scalar root (seeds d(root)=1).
void backward(const Value& root);

}  // namespace dive::ad
