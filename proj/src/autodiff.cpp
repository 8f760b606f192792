#include "dive/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

namespace dive::ad {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

namespace {

NodePtr make_node(Tensor val, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

bool wants(const NodePtr& p) { return p->requires_grad; }

MapC cmap(const Tensor& t, int64_t r, int64_t c) { return MapC(t.data.data(), r, c); }
MapM mmap(Tensor& t, int64_t r, int64_t c) { return MapM(t.data.data(), r, c); }

}  // namespace

Value constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return Value(n);
}

Value param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return Value(n);
}

Value add(const Value& a, const Value& b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        for (int s = 0; s < 2; ++s) {
            if (!wants(n.parents[s])) continue;
            Tensor& g = n.parents[s]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
    }));
}

Value sub(const Value& a, const Value& b) {
    require_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        if (wants(n.parents[0])) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (wants(n.parents[1])) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    }));
}

Value mul(const Value& a, const Value& b) {
    require_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        const Tensor& av = n.parents[0]->val;
        const Tensor& bv = n.parents[1]->val;
        if (wants(n.parents[0])) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += n.grad.data[i] * bv.data[i];
        }
        if (wants(n.parents[1])) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += n.grad.data[i] * av.data[i];
        }
    }));
}

Value scale(const Value& a, float s) {
    Tensor out = a.val();
    for (float& v : out.data) v *= s;
    return Value(make_node(std::move(out), {a.node()}, [s](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += s * n.grad.data[i];
    }));
}

Value add_bias(const Value& x, const Value& b) {
    const int64_t d = x.val().cols();
    if (b.val().numel() != d)
        throw std::invalid_argument("add_bias: bias length mismatch");
    Tensor out = x.val();
    const int64_t rows = out.rows();
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < d; ++j) out.data[i * d + j] += b.val().data[j];
    return Value(make_node(std::move(out), {x.node(), b.node()}, [d](Node& n) {
        const int64_t rows = n.val.rows();
        if (wants(n.parents[0])) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (wants(n.parents[1])) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < d; ++j) g.data[j] += n.grad.data[i * d + j];
        }
    }));
}

Value add_row(const Value& x, const Value& r) { return add_bias(x, r); }

Value mul_row(const Value& x, const Value& r) {
    const int64_t d = x.val().cols();
    if (r.val().numel() != d)
        throw std::invalid_argument("mul_row: row length mismatch");
    Tensor out = x.val();
    const int64_t rows = out.rows();
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < d; ++j) out.data[i * d + j] *= r.val().data[j];
    return Value(make_node(std::move(out), {x.node(), r.node()}, [d](Node& n) {
        const int64_t rows = n.val.rows();
        const Tensor& xv = n.parents[0]->val;
        const Tensor& rv = n.parents[1]->val;
        if (wants(n.parents[0])) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < d; ++j)
                    g.data[i * d + j] += n.grad.data[i * d + j] * rv.data[j];
        }
        if (wants(n.parents[1])) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < d; ++j)
                    g.data[j] += n.grad.data[i * d + j] * xv.data[i * d + j];
        }
    }));
}

Value add_tiled(const Value& x, const Value& p) {
    const int64_t d = x.val().cols();
    const int64_t g_rows = p.val().rows();
    if (p.val().cols() != d || x.val().rows() % g_rows != 0)
        throw std::invalid_argument("add_tiled: tile shape mismatch");
    Tensor out = x.val();
    const int64_t rows = out.rows();
    for (int64_t i = 0; i < rows; ++i) {
        const int64_t ti = i % g_rows;
        for (int64_t j = 0; j < d; ++j)
            out.data[i * d + j] += p.val().data[ti * d + j];
    }
    return Value(make_node(std::move(out), {x.node(), p.node()}, [d, g_rows](Node& n) {
        const int64_t rows = n.val.rows();
        if (wants(n.parents[0])) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
        }
        if (wants(n.parents[1])) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < rows; ++i) {
                const int64_t ti = i % g_rows;
                for (int64_t j = 0; j < d; ++j)
                    g.data[ti * d + j] += n.grad.data[i * d + j];
            }
        }
    }));
}

Value mask_rows(const Value& x, const Tensor& m) {
    const int64_t rows = x.val().rows(), d = x.val().cols();
    if (m.numel() != rows)
        throw std::invalid_argument("mask_rows: mask length mismatch");
    Tensor out = x.val();
    for (int64_t i = 0; i < rows; ++i) {
        const float mi = m.data[i];
        for (int64_t j = 0; j < d; ++j) out.data[i * d + j] *= mi;
    }
    Tensor mask = m;
    return Value(make_node(std::move(out), {x.node()}, [mask, d](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        const int64_t rows = n.val.rows();
        for (int64_t i = 0; i < rows; ++i) {
            const float mi = mask.data[i];
            for (int64_t j = 0; j < d; ++j)
                g.data[i * d + j] += n.grad.data[i * d + j] * mi;
        }
    }));
}

namespace {
constexpr float kInvSqrt2 = 0.7071067811865476f;
constexpr float kInvSqrt2Pi = 0.3989422804014327f;
}  // namespace

Value gelu(const Value& x) {
    Tensor out = x.val();
    for (float& v : out.data) v = v * 0.5f * (1.0f + std::erf(v * kInvSqrt2));
    return Value(make_node(std::move(out), {x.node()}, [](Node& n) {
        if (!wants(n.parents[0])) return;
        const Tensor& xv = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) {
            const float v = xv.data[i];
            const float cdf = 0.5f * (1.0f + std::erf(v * kInvSqrt2));
            const float pdf = kInvSqrt2Pi * std::exp(-0.5f * v * v);
            g.data[i] += n.grad.data[i] * (cdf + v * pdf);
        }
    }));
}

Value matmul(const Value& a, const Value& b) {
    const int64_t n = a.val().rows(), k = a.val().cols();
    const int64_t k2 = b.val().rows(), m = b.val().cols();
    if (k != k2) throw std::invalid_argument("matmul: inner dimension mismatch");
    Tensor out({n, m});
    mmap(out, n, m).noalias() = cmap(a.val(), n, k) * cmap(b.val(), k, m);
    return Value(make_node(std::move(out), {a.node(), b.node()}, [n, k, m](Node& nd) {
        MapC dC(nd.grad.data.data(), n, m);
        if (wants(nd.parents[0])) {
            Tensor& g = nd.parents[0]->ensure_grad();
            mmap(g, n, k).noalias() += dC * cmap(nd.parents[1]->val, k, m).transpose();
        }
        if (wants(nd.parents[1])) {
            Tensor& g = nd.parents[1]->ensure_grad();
            mmap(g, k, m).noalias() += cmap(nd.parents[0]->val, n, k).transpose() * dC;
        }
    }));
}

Value gather_rows(const Value& x, std::vector<int64_t> idx) {
    const int64_t d = x.val().cols();
    const int64_t src_rows = x.val().rows();
    Tensor out({static_cast<int64_t>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= src_rows)
            throw std::invalid_argument("gather_rows: index out of range");
        std::copy_n(&x.val().data[idx[i] * d], d, &out.data[i * d]);
    }
    auto indices = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return Value(make_node(std::move(out), {x.node()}, [indices, d](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < indices->size(); ++i) {
            const int64_t s = (*indices)[i];
            for (int64_t j = 0; j < d; ++j)
                g.data[s * d + j] += n.grad.data[i * d + j];
        }
    }));
}

Value avg_pool2x2(const Value& x, int64_t frames, int64_t h, int64_t w) {
    const int64_t d = x.val().cols();
    if (x.val().rows() != frames * h * w || h % 2 || w % 2)
        throw std::invalid_argument("avg_pool2x2: bad geometry");
    const int64_t oh = h / 2, ow = w / 2;
    Tensor out({frames * oh * ow, d});
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xo = 0; xo < ow; ++xo) {
                float* o = &out.data[((f * oh + y) * ow + xo) * d];
                for (int64_t dy = 0; dy < 2; ++dy)
                    for (int64_t dx = 0; dx < 2; ++dx) {
                        const float* s =
                            &x.val().data[((f * h + 2 * y + dy) * w + 2 * xo + dx) * d];
                        for (int64_t j = 0; j < d; ++j) o[j] += 0.25f * s[j];
                    }
            }
    return Value(make_node(std::move(out), {x.node()}, [frames, h, w, d](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        const int64_t oh = h / 2, ow = w / 2;
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const float* go = &n.grad.data[((f * oh + y) * ow + xo) * d];
                    for (int64_t dy = 0; dy < 2; ++dy)
                        for (int64_t dx = 0; dx < 2; ++dx) {
                            float* gs =
                                &g.data[((f * h + 2 * y + dy) * w + 2 * xo + dx) * d];
                            for (int64_t j = 0; j < d; ++j) gs[j] += 0.25f * go[j];
                        }
                }
    }));
}

Value upsample2x(const Value& x, int64_t frames, int64_t h, int64_t w) {
    const int64_t d = x.val().cols();
    if (x.val().rows() != frames * h * w)
        throw std::invalid_argument("upsample2x: bad geometry");
    const int64_t oh = h * 2, ow = w * 2;
    Tensor out({frames * oh * ow, d});
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xo = 0; xo < ow; ++xo) {
                const float* s = &x.val().data[((f * h + y / 2) * w + xo / 2) * d];
                std::copy_n(s, d, &out.data[((f * oh + y) * ow + xo) * d]);
            }
    return Value(make_node(std::move(out), {x.node()}, [frames, h, w, d](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        const int64_t oh = h * 2, ow = w * 2;
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const float* go = &n.grad.data[((f * oh + y) * ow + xo) * d];
                    float* gs = &g.data[((f * h + y / 2) * w + xo / 2) * d];
                    for (int64_t j = 0; j < d; ++j) gs[j] += go[j];
                }
    }));
}

namespace {
struct BilinearTap {
    int64_t r00, r01, r10, r11;
    float w00, w01, w10, w11;
};
}  // namespace

Value resize_bilinear(const Value& x, int64_t frames, int64_t h, int64_t w,
                      int64_t out_h, int64_t out_w) {
    const int64_t d = x.val().cols();
    if (x.val().rows() != frames * h * w)
        throw std::invalid_argument("resize_bilinear: bad geometry");
    auto taps = std::make_shared<std::vector<BilinearTap>>();
    taps->reserve(out_h * out_w);
    for (int64_t y = 0; y < out_h; ++y) {
        float sy = (static_cast<float>(y) + 0.5f) * static_cast<float>(h) /
                       static_cast<float>(out_h) - 0.5f;
        sy = std::max(0.0f, std::min(sy, static_cast<float>(h - 1)));
        const int64_t y0 = static_cast<int64_t>(sy);
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const float fy = sy - static_cast<float>(y0);
        for (int64_t xo = 0; xo < out_w; ++xo) {
            float sx = (static_cast<float>(xo) + 0.5f) * static_cast<float>(w) /
                           static_cast<float>(out_w) - 0.5f;
            sx = std::max(0.0f, std::min(sx, static_cast<float>(w - 1)));
            const int64_t x0 = static_cast<int64_t>(sx);
            const int64_t x1 = std::min(x0 + 1, w - 1);
            const float fx = sx - static_cast<float>(x0);
            taps->push_back({y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1,
                             (1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx),
                             fy * fx});
        }
    }
    Tensor out({frames * out_h * out_w, d});
    const int64_t per_out = out_h * out_w, per_in = h * w;
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t i = 0; i < per_out; ++i) {
            const BilinearTap& t = (*taps)[i];
            float* o = &out.data[(f * per_out + i) * d];
            const float* base = &x.val().data[f * per_in * d];
            for (int64_t j = 0; j < d; ++j)
                o[j] = t.w00 * base[t.r00 * d + j] + t.w01 * base[t.r01 * d + j] +
                       t.w10 * base[t.r10 * d + j] + t.w11 * base[t.r11 * d + j];
        }
    return Value(make_node(std::move(out), {x.node()},
                           [taps, frames, per_out, per_in, d](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t i = 0; i < per_out; ++i) {
                const BilinearTap& t = (*taps)[i];
                const float* go = &n.grad.data[(f * per_out + i) * d];
                float* base = &g.data[f * per_in * d];
                for (int64_t j = 0; j < d; ++j) {
                    base[t.r00 * d + j] += t.w00 * go[j];
                    base[t.r01 * d + j] += t.w01 * go[j];
                    base[t.r10 * d + j] += t.w10 * go[j];
                    base[t.r11 * d + j] += t.w11 * go[j];
                }
            }
    }));
}

Value im2col3x3(const Value& x, int64_t frames, int64_t h, int64_t w) {
    const int64_t c = x.val().cols();
    if (x.val().rows() != frames * h * w)
        throw std::invalid_argument("im2col3x3: bad geometry");
    Tensor out({frames * h * w, 9 * c});
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xo = 0; xo < w; ++xo) {
                float* o = &out.data[((f * h + y) * w + xo) * 9 * c];
                int64_t k = 0;
                for (int64_t dy = -1; dy <= 1; ++dy)
                    for (int64_t dx = -1; dx <= 1; ++dx, ++k) {
                        const int64_t sy = y + dy, sx = xo + dx;
                        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;  // zero pad
                        std::copy_n(&x.val().data[((f * h + sy) * w + sx) * c], c,
                                    o + k * c);
                    }
            }
    return Value(make_node(std::move(out), {x.node()}, [frames, h, w, c](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (int64_t f = 0; f < frames; ++f)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xo = 0; xo < w; ++xo) {
                    const float* go = &n.grad.data[((f * h + y) * w + xo) * 9 * c];
                    int64_t k = 0;
                    for (int64_t dy = -1; dy <= 1; ++dy)
                        for (int64_t dx = -1; dx <= 1; ++dx, ++k) {
                            const int64_t sy = y + dy, sx = xo + dx;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            float* gs = &g.data[((f * h + sy) * w + sx) * c];
                            for (int64_t j = 0; j < c; ++j) gs[j] += go[k * c + j];
                        }
                }
    }));
}

Value grouped_attention(const Value& q, const Value& k, const Value& v, int64_t group) {
    const int64_t n = q.val().rows(), d = q.val().cols();
    require_same_shape(q.val(), k.val(), "grouped_attention");
    require_same_shape(q.val(), v.val(), "grouped_attention");
    if (group < 1 || n % group != 0)
        throw std::invalid_argument("grouped_attention: rows not divisible by group");
    const int64_t groups = n / group;
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
    Tensor out({n, d});
    auto attn = std::make_shared<Tensor>(std::vector<int64_t>{n, group});
    for (int64_t b = 0; b < groups; ++b) {
        MapC Q(q.val().data.data() + b * group * d, group, d);
        MapC K(k.val().data.data() + b * group * d, group, d);
        MapC V(v.val().data.data() + b * group * d, group, d);
        MapM A(attn->data.data() + b * group * group, group, group);
        A.noalias() = Q * K.transpose() * inv_sqrt_d;
        for (int64_t i = 0; i < group; ++i) {
            float mx = A.row(i).maxCoeff();
            A.row(i) = (A.row(i).array() - mx).exp();
            A.row(i) /= A.row(i).sum();
        }
        MapM O(out.data.data() + b * group * d, group, d);
        O.noalias() = A * V;
    }
    return Value(make_node(std::move(out), {q.node(), k.node(), v.node()},
                           [attn, group, d, inv_sqrt_d](Node& n) {
        const int64_t rows = n.val.rows();
        const int64_t groups = rows / group;
        const bool wq = wants(n.parents[0]), wk = wants(n.parents[1]),
                   wv = wants(n.parents[2]);
        if (wq) n.parents[0]->ensure_grad();
        if (wk) n.parents[1]->ensure_grad();
        if (wv) n.parents[2]->ensure_grad();
        MatRM dA(group, group), dS(group, group);
        for (int64_t b = 0; b < groups; ++b) {
            MapC dO(n.grad.data.data() + b * group * d, group, d);
            MapC A(attn->data.data() + b * group * group, group, group);
            MapC Q(n.parents[0]->val.data.data() + b * group * d, group, d);
            MapC K(n.parents[1]->val.data.data() + b * group * d, group, d);
            MapC V(n.parents[2]->val.data.data() + b * group * d, group, d);
            if (wv) {
                MapM dV(n.parents[2]->grad.data.data() + b * group * d, group, d);
                dV.noalias() += A.transpose() * dO;
            }
            if (wq || wk) {
                dA.noalias() = dO * V.transpose();
                for (int64_t i = 0; i < group; ++i) {
                    const float dot = (dA.row(i).array() * A.row(i).array()).sum();
                    dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
                }
                if (wq) {
                    MapM dQ(n.parents[0]->grad.data.data() + b * group * d, group, d);
                    dQ.noalias() += dS * K * inv_sqrt_d;
                }
                if (wk) {
                    MapM dK(n.parents[1]->grad.data.data() + b * group * d, group, d);
                    dK.noalias() += dS.transpose() * Q * inv_sqrt_d;
                }
            }
        }
    }));
}

Value sum(const Value& x) {
    float s = 0.0f;
    for (float v : x.val().data) s += v;
    return Value(make_node(Tensor::scalar(s), {x.node()}, [](Node& n) {
        if (!wants(n.parents[0])) return;
        Tensor& g = n.parents[0]->ensure_grad();
        const float go = n.grad.data[0];
        for (float& v : g.data) v += go;
    }));
}

void backward(const Value& root) {
    if (root.val().numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    if (!root.node()->requires_grad) return;

    // Iterative post-order topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad().data[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

}  // namespace dive::ad
