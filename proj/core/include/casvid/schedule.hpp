#pragma once

#include <utility>
#include <vector>

#include "casvid/tensor.hpp"

namespace casvid {

class Rng;

// T-step linear beta schedule with cumulative products. Discrete timesteps
// t in [1, T] map to array index t-1; t = 0 denotes the clean latent and
// alpha_bar(0) == 1.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> betas;       // length T
    std::vector<double> alpha_bars;  // length T, strictly decreasing in (0,1)

    double alpha_bar(int t) const;  // t in [0, T]
    void require_step(int t) const;
};

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);

struct OffsetNoiseConfig {
    double strength = 0.1;
};

// Forward marginal: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// v = sqrt(abar_t) * eps - sqrt(1 - abar_t) * z0.
Tensor v_from_eps_x0(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched);

// Inverse rotation; the pair satisfies z_t = sqrt(abar)*x0 + sqrt(1-abar)*eps.
std::pair<Tensor, Tensor> recover_x0_eps(const Tensor& z_t, const Tensor& v, int t,
                                         const NoiseSchedule& sched);
std::pair<Tensor, Tensor> recover_x0_eps_alpha(const Tensor& z_t, const Tensor& v,
                                               double alpha_bar);

// i.i.d. Gaussian plus a per-(sample, channel) constant component scaled by
// cfg.strength, broadcast over frames and spatial dims. Accepts rank-5
// (B,F,C,H,W) or rank-4 (F,C,H,W) shapes.
Tensor sample_offset_noise(const std::vector<int>& shape, const OffsetNoiseConfig& cfg, Rng& rng);

}  // namespace casvid
