#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dive/checkpoint.hpp"
#include "dive/tensor.hpp"

namespace dive {

// Low-rank weight update: delta_W = scale * up * down, attached to a frozen
// base projection. `up` starts all-zero, so a fresh delta is invisible.
struct LoraDelta {
    Tensor down;  // [rank, d_in]
    Tensor up;    // [d_out, rank]
    int rank = 0;
    float scale = 1.0f;
};

// Deltas keyed by the adapted projection's parameter name.
using LoraSet = std::map<std::string, LoraDelta>;

LoraDelta init_lora(int d_in, int d_out, int rank, float scale, uint64_t seed);

// y = W x + scale * up * (down * x); w is [d_out, d_in], x is [d_in].
Tensor apply_lora(const Tensor& x, const Tensor& w, const LoraDelta& delta);

// W + scale * up * down.
Tensor merge_lora(const Tensor& w, const LoraDelta& delta);

void store_lora(ArrayArchive& archive, const LoraSet& set,
                const std::string& prefix = "lora");
LoraSet restore_lora(const ArrayArchive& archive, const std::string& prefix = "lora");

}  // namespace dive
