#pragma once

#include <string>
#include <vector>

#include "casvid/encoders.hpp"
#include "casvid/schedule.hpp"
#include "casvid/tensor.hpp"

namespace casvid {

// A stage-tagged denoiser: predicts v for a latent clip at timestep t under
// the stage's conditioning.
class StagePredictor {
public:
    virtual ~StagePredictor() = default;
    virtual Tensor predict_v(const Tensor& z, int t, const ConditioningBundle& cond) = 0;
    virtual std::string stage() const = 0;
};

// One deterministic (eta = 0) reverse step t -> t_prev; alpha_bar(0) == 1.
Tensor ddim_step(const Tensor& z_t, int t, int t_prev, const Tensor& v_pred,
                 const NoiseSchedule& sched);
Tensor ddim_step_alpha(const Tensor& z_t, double ab_t, double ab_prev, const Tensor& v_pred);

// Strictly decreasing timesteps from t_start toward 1, evenly spaced; the
// sampler appends the final hop to 0 itself.
std::vector<int> make_step_schedule(int num_steps, int T, int t_start = -1);

// Forward marginal injection that starts a refinement trajectory
// (identical to q_sample).
Tensor noise_to_level(const Tensor& z0, int t_level, const Tensor& eps,
                      const NoiseSchedule& sched);

// Iterates ddim_step along the step schedule; fully deterministic.
Tensor ddim_sample(StagePredictor& model, const Tensor& init_latent,
                   const ConditioningBundle& cond, const std::vector<int>& steps,
                   const NoiseSchedule& sched);

}  // namespace casvid
