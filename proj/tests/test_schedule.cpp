#include <doctest.h>

#include <cmath>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"
#include "casvid/schedule.hpp"
#include "test_util.hpp"

using namespace casvid;

namespace {

// Independent oracle: explicit cumulative-product loop, written before the
// schedule implementation and kept separate from it.
std::vector<double> oracle_alpha_bars(int T, double b0, double b1) {
    std::vector<double> out;
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        const double beta = b0 + (b1 - b0) * i / static_cast<double>(T - 1);
        prod *= 1.0 - beta;
        out.push_back(prod);
    }
    return out;
}

}  // namespace

TEST_CASE("linear schedule matches the cumulative-product oracle") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    const auto oracle = oracle_alpha_bars(1000, 1e-4, 0.02);
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9999).epsilon(1e-12));
    for (int t = 0; t < 1000; ++t)
        CHECK(s.alpha_bars[static_cast<std::size_t>(t)] ==
              doctest::Approx(oracle[static_cast<std::size_t>(t)]).epsilon(1e-13));
    // terminal signal retention is order 4e-5
    CHECK(s.alpha_bars[999] > 1e-5);
    CHECK(s.alpha_bars[999] < 1e-4);
    CHECK(s.alpha_bars[999] == doctest::Approx(oracle[999]).epsilon(1e-13));
}

TEST_CASE("constant-beta closed form at T=2") {
    const double b = 0.01;
    const auto s = build_linear_schedule(2, b, b);
    CHECK(s.alpha_bars[0] == doctest::Approx(1.0 - b).epsilon(1e-15));
    CHECK(s.alpha_bars[1] == doctest::Approx((1.0 - b) * (1.0 - b)).epsilon(1e-15));
}

TEST_CASE("alpha_bars strictly decreasing in (0,1); alpha_bar(0) == 1") {
    const auto s = build_linear_schedule(500, 1e-4, 0.02);
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.alpha_bar(t) < 1.0);
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
}

TEST_CASE("schedule construction rejects bad ranges") {
    CHECK_THROWS_AS(build_linear_schedule(1, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 1e-4, 1.0), ConfigError);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.03, 0.02), ConfigError);
}

TEST_CASE("q_sample: zero noise scales by sqrt(alpha_bar)") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    Tensor z0 = testutil::random_tensor({2, 4, 6, 6}, 1);
    Tensor eps({2, 4, 6, 6});
    const int t = 250;
    Tensor out = q_sample(z0, t, eps, s);
    const double a = std::sqrt(s.alpha_bar(t));
    for (std::int64_t i = 0; i < z0.size(); ++i)
        CHECK(out[i] == doctest::Approx(a * z0[i]).epsilon(1e-14));
}

TEST_CASE("q_sample errors: shape mismatch and t out of range") {
    const auto s = build_linear_schedule(100, 1e-4, 0.02);
    Tensor z0({1, 2, 4, 4}), eps({1, 2, 4, 5});
    CHECK_THROWS_AS(q_sample(z0, 10, eps, s), DimError);
    Tensor ok({1, 2, 4, 4});
    CHECK_THROWS_AS(q_sample(z0, 0, ok, s), DimError);
    CHECK_THROWS_AS(q_sample(z0, 101, ok, s), DimError);
}

TEST_CASE("q_sample Monte-Carlo moments within 2%") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    const int t = 400;
    Rng rng(99);
    Tensor z0({2, 2, 4, 4});  // zero
    double sum = 0.0, sum2 = 0.0;
    std::int64_t count = 0;
    for (int draw = 0; draw < 10000; ++draw) {
        Tensor eps(z0.shape());
        eps.fill_normal(rng);
        Tensor out = q_sample(z0, t, eps, s);
        for (std::int64_t i = 0; i < out.size(); ++i) {
            sum += out[i];
            sum2 += out[i] * out[i];
            ++count;
        }
    }
    const double m = sum / count;
    const double var = sum2 / count - m * m;
    CHECK(std::abs(m) < 0.02 * std::sqrt(1.0 - s.alpha_bar(t)));
    CHECK(var == doctest::Approx(1.0 - s.alpha_bar(t)).epsilon(0.02));
}

TEST_CASE("q_sample at t=T decorrelates from z0") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    Rng rng(7);
    Tensor z0 = testutil::random_tensor({1, 1, 10, 10}, 3);
    double num = 0.0, den_a = 0.0, den_b = 0.0;
    const double mz = mean(z0);
    for (int draw = 0; draw < 10000; ++draw) {
        Tensor eps(z0.shape());
        eps.fill_normal(rng);
        Tensor out = q_sample(z0, 1000, eps, s);
        const double mo = mean(out);
        for (std::int64_t i = 0; i < z0.size(); ++i) {
            num += (z0[i] - mz) * (out[i] - mo);
            den_a += (z0[i] - mz) * (z0[i] - mz);
            den_b += (out[i] - mo) * (out[i] - mo);
        }
    }
    const double corr = num / std::sqrt(den_a * den_b);
    CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("v parameterization: trivial endpoints") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    const int t = 123;
    const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
    Tensor z0 = testutil::random_tensor({1, 2, 4, 4}, 5);
    Tensor zero(z0.shape());
    Tensor eps = testutil::random_tensor({1, 2, 4, 4}, 6);

    Tensor v1 = v_from_eps_x0(zero, eps, t, s);
    for (std::int64_t i = 0; i < v1.size(); ++i)
        CHECK(v1[i] == doctest::Approx(a * eps[i]).epsilon(1e-14));

    Tensor v2 = v_from_eps_x0(z0, zero, t, s);
    for (std::int64_t i = 0; i < v2.size(); ++i)
        CHECK(v2[i] == doctest::Approx(-b * z0[i]).epsilon(1e-14));
}

TEST_CASE("v parameterization round-trips 1000 random triples to 1e-5") {
    const auto s = build_linear_schedule(1000, 1e-4, 0.02);
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const int t = rng.uniform_int(1, 1000);
        Tensor z0({1, 1, 4, 4}), eps({1, 1, 4, 4});
        z0.fill_normal(rng);
        eps.fill_normal(rng);
        Tensor zt = q_sample(z0, t, eps, s);
        Tensor v = v_from_eps_x0(z0, eps, t, s);
        auto [x0r, epsr] = recover_x0_eps(zt, v, t, s);
        CHECK(l2_norm(x0r - z0) / l2_norm(z0) < 1e-5);
        CHECK(l2_norm(epsr - eps) / l2_norm(eps) < 1e-5);
        // reconstruction identity
        Tensor rebuilt = q_sample(x0r, t, epsr, s);
        CHECK(max_abs_diff(rebuilt, zt) < 1e-9);
    }
}

TEST_CASE("recover_x0_eps boundary algebra") {
    Tensor zt = testutil::random_tensor({1, 1, 3, 3}, 21);
    Tensor v = testutil::random_tensor({1, 1, 3, 3}, 22);

    // alpha_bar = 1: x0 = z_t, eps = v
    auto [x0a, epsa] = recover_x0_eps_alpha(zt, v, 1.0);
    CHECK(max_abs_diff(x0a, zt) == 0.0);
    CHECK(max_abs_diff(epsa, v) == 0.0);

    // v = 0, alpha_bar = 0.25: x0 = 0.5 z_t, eps = sqrt(0.75) z_t
    Tensor zero(zt.shape());
    auto [x0b, epsb] = recover_x0_eps_alpha(zt, zero, 0.25);
    for (std::int64_t i = 0; i < zt.size(); ++i) {
        CHECK(x0b[i] == doctest::Approx(0.5 * zt[i]).epsilon(1e-15));
        CHECK(epsb[i] == doctest::Approx(std::sqrt(0.75) * zt[i]).epsilon(1e-15));
    }
}

TEST_CASE("offset noise: strength 0 is plain Gaussian (two-sample KS)") {
    Rng rng_a(31), rng_b(32);
    OffsetNoiseConfig cfg{0.0};
    std::vector<double> a, b;
    // 1e5 scalar draws from each source
    while (a.size() < 100000) {
        Tensor d = sample_offset_noise({2, 4, 5, 5}, cfg, rng_a);
        for (std::int64_t i = 0; i < d.size(); ++i) a.push_back(d[i]);
    }
    while (b.size() < 100000) b.push_back(rng_b.normal());
    a.resize(100000);
    CHECK(testutil::ks_two_sample_pass(a, b));
}

TEST_CASE("offset noise: per-channel spatial mean spread matches strength 0.1") {
    // mean over (F,H,W) of iid noise has sd sqrt(1/(F*H*W)); the offset adds
    // an independent strength^2 variance term.
    const int F = 4, C = 3, H = 8, W = 8;
    OffsetNoiseConfig cfg{0.1};
    Rng rng(77);
    double sum = 0.0, sum2 = 0.0;
    int count = 0;
    for (int draw = 0; draw < 10000; ++draw) {
        Tensor d = sample_offset_noise({F, C, H, W}, cfg, rng);
        for (int c = 0; c < C; ++c) {
            double m = 0.0;
            for (int f = 0; f < F; ++f) {
                const double* p = d.data() + (static_cast<std::int64_t>(f) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) m += p[i];
            }
            m /= F * H * W;
            sum += m;
            sum2 += m * m;
            ++count;
        }
    }
    const double mean_m = sum / count;
    const double sd = std::sqrt(sum2 / count - mean_m * mean_m);
    const double expect = std::sqrt(1.0 / (F * H * W) + 0.01);
    CHECK(sd == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("offset noise: same seed is bitwise identical; rank-5 accepted") {
    OffsetNoiseConfig cfg{0.1};
    Rng r1(123), r2(123);
    Tensor a = sample_offset_noise({2, 3, 4, 5, 5}, cfg, r1);
    Tensor b = sample_offset_noise({2, 3, 4, 5, 5}, cfg, r2);
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK_THROWS_AS(sample_offset_noise({3, 4}, cfg, r1), DimError);
    OffsetNoiseConfig bad{-0.5};
    CHECK_THROWS_AS(sample_offset_noise({1, 2, 3, 4}, bad, r1), ConfigError);
}
