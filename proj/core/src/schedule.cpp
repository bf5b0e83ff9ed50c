#include "casvid/schedule.hpp"

#include <cmath>
#include <string>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    require_step(t);
    return alpha_bars[static_cast<std::size_t>(t - 1)];
}

void NoiseSchedule::require_step(int t) const {
    if (t < 1 || t > T)
        throw DimError("timestep " + std::to_string(t) + " outside [1," + std::to_string(T) + "]");
}

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("schedule T must be >= 2, got " + std::to_string(T));
    if (!(beta_start > 0.0)) throw ConfigError("beta_start must be > 0, got " + std::to_string(beta_start));
    if (!(beta_end < 1.0)) throw ConfigError("beta_end must be < 1, got " + std::to_string(beta_end));
    if (!(beta_start <= beta_end))
        throw ConfigError("beta_start must be <= beta_end, got " + std::to_string(beta_start) + " > " +
                          std::to_string(beta_end));

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double beta = beta_start + (beta_end - beta_start) * i / static_cast<double>(T - 1);
        s.betas[static_cast<std::size_t>(i)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.require_step(t);
    require_same_shape(z0, eps, "q_sample");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out = z0;
    double* o = out.data();
    const double* e = eps.data();
    for (std::int64_t i = 0; i < out.size(); ++i) o[i] = a * o[i] + b * e[i];
    return out;
}

Tensor v_from_eps_x0(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    sched.require_step(t);
    require_same_shape(z0, eps, "v_from_eps_x0");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out = eps;
    double* o = out.data();
    const double* z = z0.data();
    for (std::int64_t i = 0; i < out.size(); ++i) o[i] = a * o[i] - b * z[i];
    return out;
}

std::pair<Tensor, Tensor> recover_x0_eps_alpha(const Tensor& z_t, const Tensor& v,
                                               double alpha_bar) {
    require_same_shape(z_t, v, "recover_x0_eps");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    Tensor x0(z_t.shape()), eps(z_t.shape());
    const double* z = z_t.data();
    const double* vd = v.data();
    double* x = x0.data();
    double* e = eps.data();
    for (std::int64_t i = 0; i < z_t.size(); ++i) {
        x[i] = a * z[i] - b * vd[i];
        e[i] = b * z[i] + a * vd[i];
    }
    return {std::move(x0), std::move(eps)};
}

std::pair<Tensor, Tensor> recover_x0_eps(const Tensor& z_t, const Tensor& v, int t,
                                         const NoiseSchedule& sched) {
    sched.require_step(t);
    return recover_x0_eps_alpha(z_t, v, sched.alpha_bar(t));
}

Tensor sample_offset_noise(const std::vector<int>& shape, const OffsetNoiseConfig& cfg, Rng& rng) {
    if (cfg.strength < 0.0) throw ConfigError("offset noise strength must be >= 0");
    if (shape.size() != 4 && shape.size() != 5)
        throw DimError("offset noise expects (B,F,C,H,W) or (F,C,H,W), got " + shape_str(shape));

    const bool batched = shape.size() == 5;
    const int B = batched ? shape[0] : 1;
    const int F = batched ? shape[1] : shape[0];
    const int C = batched ? shape[2] : shape[1];
    const std::int64_t per_ch = batched ? static_cast<std::int64_t>(shape[3]) * shape[4]
                                        : static_cast<std::int64_t>(shape[2]) * shape[3];

    Tensor out(shape);
    out.fill_normal(rng);
    if (cfg.strength == 0.0) return out;

    // One offset per (sample, channel), constant over frames/space.
    for (int bIdx = 0; bIdx < B; ++bIdx) {
        for (int c = 0; c < C; ++c) {
            const double off = cfg.strength * rng.normal();
            for (int f = 0; f < F; ++f) {
                double* p = out.data() + ((static_cast<std::int64_t>(bIdx) * F + f) * C + c) * per_ch;
                for (std::int64_t i = 0; i < per_ch; ++i) p[i] += off;
            }
        }
    }
    return out;
}

}  // namespace casvid
