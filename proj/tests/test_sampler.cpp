#include <doctest.h>

#include <cmath>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"
#include "casvid/sampler.hpp"
#include "test_util.hpp"

using namespace casvid;

namespace {

// Analytic denoiser for a point-mass data distribution at z0: for any z_t,
// eps = (z_t - sqrt(ab) z0) / sqrt(1-ab), v = sqrt(ab) eps - sqrt(1-ab) z0.
class PointMassDenoiser : public StagePredictor {
public:
    PointMassDenoiser(Tensor z0, NoiseSchedule sched) : z0_(std::move(z0)), sched_(std::move(sched)) {}

    Tensor predict_v(const Tensor& z, int t, const ConditioningBundle&) override {
        const double ab = sched_.alpha_bar(t);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        Tensor v(z.shape());
        for (std::int64_t i = 0; i < z.size(); ++i) {
            const double eps = (z[i] - a * z0_[i]) / b;
            v[i] = a * eps - b * z0_[i];
        }
        return v;
    }
    std::string stage() const override { return "refine"; }

private:
    Tensor z0_;
    NoiseSchedule sched_;
};

ConditioningBundle dummy_refine_bundle() {
    return ConditioningBundle::for_refine(Tensor({1, 8}), 4);
}

}  // namespace

TEST_CASE("make_step_schedule: full, partial-start, degenerate, invalid") {
    auto full = make_step_schedule(1000, 1000, 1000);
    REQUIRE(full.size() == 1000);
    for (int i = 0; i < 1000; ++i) CHECK(full[static_cast<std::size_t>(i)] == 1000 - i);

    auto part = make_step_schedule(50, 1000, 600);
    REQUIRE(part.size() == 50);
    CHECK(part.front() == 600);
    CHECK(part.back() == 1);
    for (std::size_t i = 1; i < part.size(); ++i) CHECK(part[i] < part[i - 1]);

    auto one = make_step_schedule(1, 1000, 1000);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 1000);

    CHECK_THROWS_AS(make_step_schedule(0, 1000, 600), ConfigError);
    CHECK_THROWS_AS(make_step_schedule(700, 1000, 600), ConfigError);
    CHECK_THROWS_AS(make_step_schedule(10, 1000, 1200), ConfigError);
}

TEST_CASE("ddim_step algebra: equal alphas collapse; t_prev=0 returns x0") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor z = testutil::random_tensor({1, 2, 4, 4}, 1);
    Tensor v = testutil::random_tensor({1, 2, 4, 4}, 2);

    Tensor same = ddim_step_alpha(z, 0.5, 0.5, v);
    CHECK(max_abs_diff(same, z) < 1e-12);

    const int t = 777;
    Tensor out = ddim_step(z, t, 0, v, sched);
    auto [x0, eps] = recover_x0_eps(z, v, t, sched);
    CHECK(max_abs_diff(out, x0) == 0.0);

    CHECK_THROWS_AS(ddim_step(z, 5, 5, v, sched), UsageError);
    CHECK_THROWS_AS(ddim_step(z, 5, 9, v, sched), UsageError);
}

TEST_CASE("noise_to_level matches q_sample bitwise") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor z0 = testutil::random_tensor({2, 4, 8, 8}, 3);
    Tensor eps = testutil::random_tensor({2, 4, 8, 8}, 4);
    Tensor a = noise_to_level(z0, 600, eps, sched);
    Tensor b = q_sample(z0, 600, eps, sched);
    CHECK(max_abs_diff(a, b) == 0.0);

    Tensor zero(z0.shape());
    Tensor c = noise_to_level(z0, 600, zero, sched);
    const double scale = std::sqrt(sched.alpha_bar(600));
    for (std::int64_t i = 0; i < z0.size(); ++i)
        CHECK(c[i] == doctest::Approx(scale * z0[i]).epsilon(1e-14));
}

TEST_CASE("oracle denoiser: 50-step DDIM recovers the target within 1e-3") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor target = testutil::random_tensor({2, 4, 4, 4}, 5, 0.8);
    PointMassDenoiser oracle(target, sched);

    Rng rng(6);
    Tensor z(target.shape());
    z.fill_normal(rng);
    Tensor out = ddim_sample(oracle, z, dummy_refine_bundle(), make_step_schedule(50, 1000), sched);
    CHECK(max_abs(out - target) < 1e-3);
}

TEST_CASE("oracle denoiser: step composition t->s->r equals t->r") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor target = testutil::random_tensor({1, 2, 4, 4}, 7, 0.8);
    PointMassDenoiser oracle(target, sched);
    ConditioningBundle cond = dummy_refine_bundle();

    Rng rng(8);
    Tensor eps(target.shape());
    eps.fill_normal(rng);
    Tensor z_t = q_sample(target, 900, eps, sched);

    // two hops
    Tensor v1 = oracle.predict_v(z_t, 900, cond);
    Tensor z_s = ddim_step(z_t, 900, 500, v1, sched);
    Tensor v2 = oracle.predict_v(z_s, 500, cond);
    Tensor z_r2 = ddim_step(z_s, 500, 100, v2, sched);

    // one hop
    Tensor z_r1 = ddim_step(z_t, 900, 100, v1, sched);
    CHECK(max_abs(z_r1 - z_r2) < 1e-6);
}

TEST_CASE("oracle denoiser: distance to target decreases monotonically") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor target = testutil::random_tensor({1, 2, 4, 4}, 9, 0.8);
    PointMassDenoiser oracle(target, sched);
    ConditioningBundle cond = dummy_refine_bundle();

    Rng rng(10);
    Tensor z(target.shape());
    z.fill_normal(rng);
    auto steps = make_step_schedule(25, 1000);
    double prev = l2_norm(z - target);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const int t = steps[i];
        const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
        z = ddim_step(z, t, t_prev, oracle.predict_v(z, t, cond), sched);
        const double d = l2_norm(z - target);
        CHECK(d <= prev + 1e-9);
        prev = d;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("partial noising then full oracle denoising returns the source") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor z0 = testutil::random_tensor({1, 4, 4, 4}, 11, 0.8);
    PointMassDenoiser oracle(z0, sched);

    Rng rng(12);
    Tensor eps(z0.shape());
    eps.fill_normal(rng);
    Tensor z600 = noise_to_level(z0, 600, eps, sched);
    Tensor back = ddim_sample(oracle, z600, dummy_refine_bundle(),
                              make_step_schedule(30, 1000, 600), sched);
    CHECK(max_abs(back - z0) < 1e-3);
}

TEST_CASE("ddim_sample is deterministic and validates the bundle stage") {
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor target = testutil::random_tensor({1, 2, 4, 4}, 13, 0.8);
    PointMassDenoiser oracle(target, sched);

    Rng rng(14);
    Tensor z(target.shape());
    z.fill_normal(rng);
    Tensor a = ddim_sample(oracle, z, dummy_refine_bundle(), make_step_schedule(10, 1000), sched);
    Tensor b = ddim_sample(oracle, z, dummy_refine_bundle(), make_step_schedule(10, 1000), sched);
    CHECK(max_abs_diff(a, b) == 0.0);

    ConditioningBundle wrong = ConditioningBundle::for_base(
        Tensor({8}), LatentVideo(Tensor({1, 2, 4, 4}), 4), 4);
    CHECK_THROWS_AS(ddim_sample(oracle, z, wrong, make_step_schedule(10, 1000), sched), UsageError);
}
