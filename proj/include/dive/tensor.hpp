#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dive {

// Dense row-major float tensor. Most numeric kernels view it as a
// [rows, cols] matrix; higher-rank layouts (frames, grids) keep their
// dimensions in `shape` and flatten everything but the channel axis
// into rows.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
    }
    Tensor(std::vector<int64_t> s, std::vector<float> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, float v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    // Matrix view helpers: last dimension is columns, the rest are rows.
    int64_t cols() const {
        if (shape.empty()) throw std::logic_error("Tensor: rank 0");
        return shape.back();
    }
    int64_t rows() const {
        int64_t c = cols();
        return c == 0 ? 0 : numel() / c;
    }

    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

}  // namespace dive
