#include "dive/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dive/rng.hpp"

namespace dive {

NoiseSchedule build_schedule(int total_steps, double beta_start, double beta_end,
                             BetaSpacing spacing) {
    if (total_steps < 1)
        throw std::invalid_argument("build_schedule: total_steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument(
            "build_schedule: need 0 < beta_start <= beta_end < 1, got beta_start=" +
            std::to_string(beta_start) + " beta_end=" + std::to_string(beta_end));

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.betas.resize(total_steps);
    if (total_steps == 1) {
        s.betas[0] = beta_start;
    } else if (spacing == BetaSpacing::Linear) {
        for (int i = 0; i < total_steps; ++i)
            s.betas[i] = beta_start + (beta_end - beta_start) * i / (total_steps - 1);
    } else {
        const double r0 = std::sqrt(beta_start), r1 = std::sqrt(beta_end);
        for (int i = 0; i < total_steps; ++i) {
            const double r = r0 + (r1 - r0) * i / (total_steps - 1);
            s.betas[i] = r * r;
        }
    }
    s.alphas.resize(total_steps);
    s.alpha_bars.resize(total_steps);
    double prod = 1.0;
    for (int i = 0; i < total_steps; ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    require_same_shape(z0, eps, "add_noise");
    if (t < 1 || t > sched.total_steps)
        throw std::out_of_range("add_noise: t out of [1, T]");
    const float a = static_cast<float>(std::sqrt(sched.alpha_bar(t)));
    const float b = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar(t)));
    Tensor out = z0;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

Tensor ddim_denoise_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                         const NoiseSchedule& sched) {
    require_same_shape(z_t, eps_pred, "ddim_denoise_step");
    if (t_prev >= t)
        throw std::invalid_argument("ddim_denoise_step: requires t_prev < t");
    const double ab_t = sched.alpha_bar(t), ab_p = sched.alpha_bar(t_prev);
    const double inv_sa = 1.0 / std::sqrt(ab_t);
    const double sb_t = std::sqrt(1.0 - ab_t);
    const double sa_p = std::sqrt(ab_p);
    const double sb_p = std::sqrt(1.0 - ab_p);
    Tensor out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double z0_hat = (z_t.data[i] - sb_t * eps_pred.data[i]) * inv_sa;
        out.data[i] = static_cast<float>(sa_p * z0_hat + sb_p * eps_pred.data[i]);
    }
    return out;
}

Tensor ddim_invert_step(const Tensor& z_tprev, const Tensor& eps_pred, int t_prev, int t,
                        const NoiseSchedule& sched) {
    require_same_shape(z_tprev, eps_pred, "ddim_invert_step");
    if (t <= t_prev)
        throw std::invalid_argument("ddim_invert_step: requires t > t_prev");
    const double ab_t = sched.alpha_bar(t), ab_p = sched.alpha_bar(t_prev);
    const double inv_sa_p = 1.0 / std::sqrt(ab_p);
    const double sb_p = std::sqrt(1.0 - ab_p);
    const double sa_t = std::sqrt(ab_t);
    const double sb_t = std::sqrt(1.0 - ab_t);
    Tensor out = z_tprev;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double z0_hat = (z_tprev.data[i] - sb_p * eps_pred.data[i]) * inv_sa_p;
        out.data[i] = static_cast<float>(sa_t * z0_hat + sb_t * eps_pred.data[i]);
    }
    return out;
}

std::vector<int> inference_timesteps(int total_steps, int num_steps) {
    if (num_steps < 1 || num_steps > total_steps)
        throw std::invalid_argument("inference_timesteps: bad num_steps");
    if (total_steps % num_steps != 0)
        throw std::invalid_argument(
            "inference_timesteps: num_steps must divide total_steps");
    std::vector<int> ts(num_steps);
    const int stride = total_steps / num_steps;
    for (int i = 0; i < num_steps; ++i) ts[i] = (i + 1) * stride;
    return ts;
}

TimestepSampler::TimestepSampler(int lo, int hi, uint64_t seed)
    : t_min(lo), t_max(hi), rng(make_rng(seed, "timestep_sampler")) {
    if (!(1 <= lo && lo <= hi))
        throw std::invalid_argument("TimestepSampler: need 1 <= t_min <= t_max");
}

int TimestepSampler::sample() {
    std::uniform_int_distribution<int> dist(t_min, t_max);
    return dist(rng);
}

}  // namespace dive
