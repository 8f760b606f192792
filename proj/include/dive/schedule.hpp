#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dive/tensor.hpp"

namespace dive {

enum class BetaSpacing { Linear, ScaledLinear };

// Diffusion coefficients over T steps. Timesteps are 1-based: t in [1, T],
// alpha_bar(0) == 1 denotes the clean-data endpoint.
struct NoiseSchedule {
    int total_steps = 0;
    std::vector<double> betas;       // length T
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // cumulative product

    // alpha_bar at a 1-based timestep; t == 0 returns 1 (clean data).
    double alpha_bar(int t) const {
        if (t < 0 || t > total_steps)
            throw std::out_of_range("alpha_bar: t out of [0, T]");
        return t == 0 ? 1.0 : alpha_bars[t - 1];
    }
};

NoiseSchedule build_schedule(int total_steps, double beta_start, double beta_end,
                             BetaSpacing spacing = BetaSpacing::Linear);

// Forward q-sample: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched);

// Deterministic (eta = 0) DDIM update from t down to t_prev.
Tensor ddim_denoise_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                         const NoiseSchedule& sched);

// Algebraic inverse of ddim_denoise_step under the same eps_pred.
Tensor ddim_invert_step(const Tensor& z_tprev, const Tensor& eps_pred, int t_prev, int t,
                        const NoiseSchedule& sched);

// Uniformly strided 1-based inference timesteps, ascending: e.g. T=1000,
// n=50 -> {20, 40, ..., 1000}.
std::vector<int> inference_timesteps(int total_steps, int num_steps);

struct TimestepSampler {
    int t_min = 1;
    int t_max = 1;
    std::mt19937_64 rng;

    TimestepSampler(int lo, int hi, uint64_t seed);
    int sample();
};

}  // namespace dive
