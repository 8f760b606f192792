#include "dive/lora.hpp"

#include <Eigen/Dense>

#include <stdexcept>

#include "dive/rng.hpp"

namespace dive {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecX = Eigen::VectorXf;

LoraDelta init_lora(int d_in, int d_out, int rank, float scale, uint64_t seed) {
    if (rank < 1 || rank > std::min(d_in, d_out))
        throw std::invalid_argument("init_lora: rank out of [1, min(d_in, d_out)]");
    auto rng = make_rng(seed, "lora_init");
    LoraDelta d;
    d.rank = rank;
    d.scale = scale;
    d.down = gaussian_tensor({rank, d_in}, rng, 0.02f);
    d.up = Tensor({d_out, rank});  // zeros: delta_W = 0 at init
    return d;
}

Tensor apply_lora(const Tensor& x, const Tensor& w, const LoraDelta& delta) {
    const int64_t d_out = w.shape[0], d_in = w.shape[1];
    if (x.numel() != d_in || delta.down.shape[1] != d_in || delta.up.shape[0] != d_out)
        throw std::invalid_argument("apply_lora: dimension mismatch");
    // accumulate in double so the runtime path agrees with merge-then-multiply
    Eigen::MatrixXd W = Eigen::Map<const MatRM>(w.data.data(), d_out, d_in).cast<double>();
    Eigen::MatrixXd A =
        Eigen::Map<const MatRM>(delta.down.data.data(), delta.rank, d_in).cast<double>();
    Eigen::MatrixXd B =
        Eigen::Map<const MatRM>(delta.up.data.data(), d_out, delta.rank).cast<double>();
    Eigen::VectorXd X = Eigen::Map<const VecX>(x.data.data(), d_in).cast<double>();
    Eigen::VectorXd y = (W + static_cast<double>(delta.scale) * (B * A)) * X;
    Tensor out({d_out});
    for (int64_t i = 0; i < d_out; ++i) out.data[i] = static_cast<float>(y[i]);
    return out;
}

Tensor merge_lora(const Tensor& w, const LoraDelta& delta) {
    const int64_t d_out = w.shape[0], d_in = w.shape[1];
    if (delta.down.shape[1] != d_in || delta.up.shape[0] != d_out)
        throw std::invalid_argument("merge_lora: dimension mismatch");
    Eigen::MatrixXd W = Eigen::Map<const MatRM>(w.data.data(), d_out, d_in).cast<double>();
    Eigen::MatrixXd A =
        Eigen::Map<const MatRM>(delta.down.data.data(), delta.rank, d_in).cast<double>();
    Eigen::MatrixXd B =
        Eigen::Map<const MatRM>(delta.up.data.data(), d_out, delta.rank).cast<double>();
    W += static_cast<double>(delta.scale) * (B * A);
    Tensor out = w;
    for (int64_t i = 0; i < d_out; ++i)
        for (int64_t j = 0; j < d_in; ++j)
            out.data[i * d_in + j] = static_cast<float>(W(i, j));
    return out;
}

void store_lora(ArrayArchive& archive, const LoraSet& set, const std::string& prefix) {
    for (const auto& [name, d] : set) {
        const std::string base = prefix + "." + name;
        archive.arrays[base + ".down"] = d.down;
        archive.arrays[base + ".up"] = d.up;
        archive.metadata[base + ".rank"] = std::to_string(d.rank);
        archive.metadata[base + ".scale"] = std::to_string(d.scale);
    }
}

LoraSet restore_lora(const ArrayArchive& archive, const std::string& prefix) {
    LoraSet set;
    const std::string pre = prefix + ".";
    for (const auto& [key, t] : archive.arrays) {
        if (key.rfind(pre, 0) != 0 || key.size() < 6 ||
            key.compare(key.size() - 5, 5, ".down") != 0)
            continue;
        const std::string name = key.substr(pre.size(), key.size() - pre.size() - 5);
        const std::string base = prefix + "." + name;
        auto up = archive.arrays.find(base + ".up");
        auto rank = archive.metadata.find(base + ".rank");
        auto scale = archive.metadata.find(base + ".scale");
        if (up == archive.arrays.end() || rank == archive.metadata.end() ||
            scale == archive.metadata.end())
            throw std::runtime_error("restore_lora: incomplete entry for " + name);
        LoraDelta d;
        d.down = t;
        d.up = up->second;
        d.rank = std::stoi(rank->second);
        d.scale = std::stof(scale->second);
        if (d.down.shape.size() != 2 || d.up.shape.size() != 2 ||
            d.down.shape[0] != d.rank || d.up.shape[1] != d.rank)
            throw std::runtime_error("restore_lora: shape/rank mismatch for " + name);
        set.emplace(name, std::move(d));
    }
    return set;
}

}  // namespace dive
