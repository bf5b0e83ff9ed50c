#include "casvid/sampler.hpp"

#include <cmath>

#include "casvid/errors.hpp"

namespace casvid {

Tensor ddim_step_alpha(const Tensor& z_t, double ab_t, double ab_prev, const Tensor& v_pred) {
    auto [x0, eps] = recover_x0_eps_alpha(z_t, v_pred, ab_t);
    const double a = std::sqrt(ab_prev), b = std::sqrt(1.0 - ab_prev);
    Tensor out(z_t.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

Tensor ddim_step(const Tensor& z_t, int t, int t_prev, const Tensor& v_pred,
                 const NoiseSchedule& sched) {
    if (!(t > t_prev && t_prev >= 0))
        throw UsageError("ddim_step needs t > t_prev >= 0, got t=" + std::to_string(t) +
                         ", t_prev=" + std::to_string(t_prev));
    sched.require_step(t);
    require_same_shape(z_t, v_pred, "ddim_step");
    return ddim_step_alpha(z_t, sched.alpha_bar(t), sched.alpha_bar(t_prev), v_pred);
}

std::vector<int> make_step_schedule(int num_steps, int T, int t_start) {
    if (t_start < 0) t_start = T;
    if (!(num_steps >= 1 && num_steps <= t_start && t_start <= T))
        throw ConfigError("step schedule needs 1 <= num_steps <= t_start <= T, got num_steps=" +
                          std::to_string(num_steps) + ", t_start=" + std::to_string(t_start) +
                          ", T=" + std::to_string(T));
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(num_steps));
    if (num_steps == 1) {
        steps.push_back(t_start);
        return steps;
    }
    const double span = static_cast<double>(t_start - 1) / (num_steps - 1);
    for (int i = 0; i < num_steps; ++i) {
        int t = static_cast<int>(std::lround(t_start - span * i));
        if (!steps.empty() && t >= steps.back()) t = steps.back() - 1;  // keep strictly decreasing
        steps.push_back(t);
    }
    if (steps.back() < 1) throw ConfigError("step schedule collapsed below 1");
    return steps;
}

Tensor noise_to_level(const Tensor& z0, int t_level, const Tensor& eps,
                      const NoiseSchedule& sched) {
    return q_sample(z0, t_level, eps, sched);
}

Tensor ddim_sample(StagePredictor& model, const Tensor& init_latent,
                   const ConditioningBundle& cond, const std::vector<int>& steps,
                   const NoiseSchedule& sched) {
    if (steps.empty()) throw UsageError("empty step schedule");
    cond.require_stage(model.stage());
    Tensor z = init_latent;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const int t = steps[i];
        const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
        Tensor v = model.predict_v(z, t, cond);
        z = ddim_step(z, t, t_prev, v, sched);
    }
    return z;
}

}  // namespace casvid
