#include <doctest.h>

#include <set>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"
#include "casvid/unet.hpp"
#include "test_util.hpp"

using namespace casvid;

namespace {

UNetSpec toy_spec() {
    UNetSpec s;
    s.in_channels = 4;
    s.base_channels = 16;
    s.channel_mults = {1, 2};
    s.attention_levels = {0, 1};
    s.heads = 2;
    s.norm_groups = 4;
    s.cond_dim = 32;
    s.time_dim = 32;
    s.fps_set = {1, 2, 4};
    return s;
}

UNetSpec micro_spec() {
    UNetSpec s;
    s.in_channels = 2;
    s.base_channels = 8;
    s.channel_mults = {1};
    s.attention_levels = {0};
    s.heads = 2;
    s.norm_groups = 2;
    s.cond_dim = 8;
    s.time_dim = 16;
    s.fps_set = {1, 4};
    return s;
}

UNetCond make_cond(int B, int K, int D, int fps, std::uint64_t seed) {
    UNetCond cond;
    for (int b = 0; b < B; ++b) {
        cond.ctx.push_back(testutil::random_tensor({K, D}, seed + static_cast<std::uint64_t>(b)));
        cond.fps.push_back(fps);
    }
    return cond;
}

}  // namespace

TEST_CASE("unet preserves latent shape") {
    UNet3D unet(toy_spec());
    Rng rng(1);
    unet.init(rng);
    Tensor z = testutil::random_tensor({1, 8, 4, 16, 16}, 2);
    UNetCond cond = make_cond(1, 1, 32, 4, 3);
    Tensor v = unet.forward(z, {500}, cond, true, false);
    CHECK(v.shape() == z.shape());
    CHECK(all_finite(v));
}

TEST_CASE("F=1 equals the temporal-disabled forward exactly") {
    UNet3D unet(toy_spec());
    Rng rng(4);
    unet.init(rng);
    // randomize temporal weights so the bypass is what is being tested
    ParamRegistry reg;
    unet.register_params(reg, "unet");
    Rng scramble(5);
    for (Param* p : reg.params())
        if (p->tag == ParamTag::temporal) p->value.fill_normal(scramble);

    Tensor z = testutil::random_tensor({1, 1, 4, 16, 16}, 6);
    UNetCond cond = make_cond(1, 1, 32, 1, 7);
    Tensor with_temporal = unet.forward(z, {100}, cond, true, false);
    Tensor without = unet.forward(z, {100}, cond, false, false);
    CHECK(max_abs_diff(with_temporal, without) == 0.0);
}

TEST_CASE("identity temporal init: clip forward equals per-frame forward") {
    UNet3D unet(toy_spec());
    Rng rng(8);
    unet.init(rng);

    const int F = 4;
    Tensor z = testutil::random_tensor({1, F, 4, 16, 16}, 9);
    UNetCond cond = make_cond(1, 1, 32, 4, 10);
    Tensor whole = unet.forward(z, {321}, cond, true, false);

    const std::int64_t fsz = z.size() / F;
    for (int f = 0; f < F; ++f) {
        Tensor zf({1, 1, 4, 16, 16});
        std::copy(z.data() + f * fsz, z.data() + (f + 1) * fsz, zf.data());
        Tensor vf = unet.forward(zf, {321}, cond, true, false);
        for (std::int64_t i = 0; i < fsz; ++i)
            CHECK(vf[i] == doctest::Approx(whole[f * fsz + i]).epsilon(1e-12));
    }
}

TEST_CASE("batch permutation permutes outputs identically") {
    UNet3D unet(toy_spec());
    Rng rng(11);
    unet.init(rng);
    Tensor a = testutil::random_tensor({1, 4, 4, 16, 16}, 12);
    Tensor b = testutil::random_tensor({1, 4, 4, 16, 16}, 13);
    Tensor ab({2, 4, 4, 16, 16});
    std::copy(a.data(), a.data() + a.size(), ab.data());
    std::copy(b.data(), b.data() + b.size(), ab.data() + a.size());
    Tensor ba({2, 4, 4, 16, 16});
    std::copy(b.data(), b.data() + b.size(), ba.data());
    std::copy(a.data(), a.data() + a.size(), ba.data() + b.size());

    UNetCond cond_ab;
    cond_ab.ctx = {testutil::random_tensor({1, 32}, 14), testutil::random_tensor({1, 32}, 15)};
    cond_ab.fps = {4, 2};
    UNetCond cond_ba;
    cond_ba.ctx = {cond_ab.ctx[1], cond_ab.ctx[0]};
    cond_ba.fps = {2, 4};

    Tensor vab = unet.forward(ab, {100, 700}, cond_ab, true, false);
    Tensor vba = unet.forward(ba, {700, 100}, cond_ba, true, false);
    const std::int64_t half = vab.size() / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        CHECK(vab[i] == vba[half + i]);
        CHECK(vab[half + i] == vba[i]);
    }
}

TEST_CASE("conditioning sensitivity and unconditional path") {
    UNet3D unet(toy_spec());
    Rng rng(16);
    unet.init(rng);
    Tensor z = testutil::random_tensor({1, 2, 4, 16, 16}, 17);

    UNetCond c1 = make_cond(1, 1, 32, 4, 18);
    UNetCond c2 = c1;
    c2.ctx[0] = testutil::random_tensor({1, 32}, 99);
    Tensor v1 = unet.forward(z, {400}, c1, true, false);
    Tensor v2 = unet.forward(z, {400}, c2, true, false);
    CHECK(max_abs_diff(v1, v2) > 0.0);

    UNetCond zero;
    zero.ctx = {Tensor({1, 32})};
    zero.fps = {4};
    Tensor v0 = unet.forward(z, {400}, zero, true, false);
    CHECK(all_finite(v0));
}

TEST_CASE("timestep/fps embedding: table, determinism, distinctness") {
    UNetSpec spec = toy_spec();
    spec.fps_set = {1, 4, 8, 16};
    UNet3D unet(spec);
    Rng rng(19);
    unet.init(rng);

    for (int fps : {1, 4, 8, 16}) CHECK(unet.fps_index(fps) >= 0);
    CHECK_THROWS_AS(unet.fps_index(3), ConfigError);
    CHECK_THROWS_AS(unet.timestep_fps_embedding(100, 5), ConfigError);

    Tensor e1 = unet.timestep_fps_embedding(7, 8);
    Tensor e2 = unet.timestep_fps_embedding(7, 8);
    CHECK(max_abs_diff(e1, e2) == 0.0);
    CHECK(e1.shape() == std::vector<int>{spec.time_dim});

    Tensor first = unet.timestep_fps_embedding(1, 8);
    Tensor last = unet.timestep_fps_embedding(1000, 8);
    CHECK(l2_norm(first - last) > 0.0);

    Tensor fps_a = unet.timestep_fps_embedding(10, 1);
    Tensor fps_b = unet.timestep_fps_embedding(10, 16);
    CHECK(l2_norm(fps_a - fps_b) > 0.0);
}

TEST_CASE("tag partition: spatial and temporal cover all trainable parameters") {
    UNet3D unet(toy_spec());
    ParamRegistry reg;
    unet.register_params(reg, "unet");
    auto tags = tag_parameters(reg);

    std::int64_t tagged = 0;
    std::set<std::string> seen;
    for (const auto& [name, tag] : tags) {
        CHECK(seen.insert(name).second);
        const Param* p = reg.find(name);
        REQUIRE(p != nullptr);
        tagged += p->value.size();
        const bool is_temporal = name.find(".tconv.") != std::string::npos ||
                                 name.find(".tattn.") != std::string::npos;
        CHECK(tag == (is_temporal ? ParamTag::temporal : ParamTag::spatial));
    }
    CHECK(tagged == reg.trainable_size());

    // spot checks: temporal kernels temporal, cross-attention spatial
    CHECK(tags.at("unet.down0.block0.tconv.weight") == ParamTag::temporal);
    CHECK(tags.at("unet.down0.block0.tattn.to_q.weight") == ParamTag::temporal);
    CHECK(tags.at("unet.down0.block0.xattn.to_q.weight") == ParamTag::spatial);
    CHECK(tags.at("unet.mid.res.conv1.weight") == ParamTag::spatial);
}

TEST_CASE("unet gradient check on the micro spec") {
    UNet3D unet(micro_spec());
    Rng rng(20);
    unet.init(rng);
    ParamRegistry reg;
    unet.register_params(reg, "unet");
    // make temporal parameters non-identity so their gradients are generic
    Rng scramble(21);
    for (Param* p : reg.params())
        if (p->tag == ParamTag::temporal) {
            Tensor noise(p->value.shape());
            noise.fill_normal(scramble);
            axpy(0.2, noise, p->value);
        }

    Tensor z = testutil::random_tensor({1, 3, 2, 8, 8}, 22);
    UNetCond cond = make_cond(1, 2, 8, 4, 23);
    Tensor probe = testutil::random_tensor({1, 3, 2, 8, 8}, 24);

    auto loss = [&] { return dot(unet.forward(z, {40}, cond, true, true), probe); };
    loss();
    reg.zero_grad();
    std::vector<Tensor> dctx;
    Tensor dz = unet.backward(probe, &dctx);

    CHECK(testutil::fd_check(z, dz, loss, 1e-5, 24) < 1e-3);
    CHECK(testutil::fd_check(cond.ctx[0], dctx[0], loss, 1e-5, 16) < 1e-3);

    // random ~1% coordinate subset across every parameter
    Rng pick(25);
    int checked = 0;
    for (Param* p : reg.params()) {
        const int n_checks = p->value.size() <= 4 ? 2 : 3;
        const double err = testutil::fd_check(p->value, p->grad, loss, 1e-5, n_checks,
                                              pick.next_u64());
        INFO("param ", p->name);
        CHECK(err < 1e-3);
        checked += n_checks;
    }
    CHECK(checked > 0);
}
