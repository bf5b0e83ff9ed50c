#include <doctest.h>

#include "casvid/datasynth.hpp"
#include "casvid/encoders.hpp"
#include "casvid/errors.hpp"
#include "casvid/rng.hpp"
#include "test_util.hpp"

using namespace casvid;

TEST_CASE("paper-scale global encoder reproduces the declared shape chain") {
    GlobalEncoderSpec spec = GlobalEncoderSpec::paper_scale();
    GlobalEncoder enc(spec);
    Rng rng(1);
    enc.init(rng);

    Tensor x = testutil::random_tensor({1, 4, 32, 48}, 2);
    Tensor v = enc.forward(x, false);
    CHECK(v.shape() == std::vector<int>{1, 1024});

    const std::vector<std::array<int, 3>> want = {
        {32, 48, 64}, {32, 32, 64}, {16, 16, 256}, {8, 8, 512},
        {4, 4, 512},  {2, 2, 1024}, {1, 1, 1024},
    };
    REQUIRE(enc.shape_chain().size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(enc.shape_chain()[i] == want[i]);
}

TEST_CASE("toy global encoder: (4,16,16) -> 256-vector") {
    GlobalEncoder enc(GlobalEncoderSpec::toy_scale());
    Rng rng(3);
    enc.init(rng);
    Tensor x = testutil::random_tensor({2, 4, 16, 16}, 4);
    Tensor v = enc.forward(x, false);
    CHECK(v.shape() == std::vector<int>{2, 256});
    CHECK(enc.shape_chain().back() == std::array<int, 3>{1, 1, 256});

    Tensor zero({1, 4, 16, 16});
    Tensor vz = enc.forward(zero, false);
    CHECK(all_finite(vz));
}

TEST_CASE("global encoder rejects wrong stem channels") {
    GlobalEncoder enc(GlobalEncoderSpec::toy_scale());
    Rng rng(5);
    enc.init(rng);
    Tensor bad = testutil::random_tensor({1, 3, 16, 16}, 6);
    CHECK_THROWS_AS(enc.forward(bad, false), DimError);
}

TEST_CASE("global encoder gradient check on a tiny spec") {
    GlobalEncoderSpec spec;
    spec.in_h = 8;
    spec.in_w = 8;
    spec.stem = {{4, 8, 3, 1, 1}};
    spec.pool_h = 8;
    spec.pool_w = 8;
    spec.stages = {{8, 8, 3, 2, 1}, {8, 8, 3, 1, 1}, {8, 16, 3, 2, 1}, {16, 16, 3, 1, 1}};
    spec.output = {16, 16, 2, 2, 0};
    spec.out_dim = 16;
    spec.expected_sizes = {{8, 8, 8}, {8, 8, 8}, {4, 4, 8}, {2, 2, 16}, {1, 1, 16}};

    GlobalEncoder enc(spec);
    Rng rng(7);
    enc.init(rng);
    Tensor x = testutil::random_tensor({1, 4, 8, 8}, 8);
    Tensor probe = testutil::random_tensor({1, 16}, 9);

    auto loss = [&] { return dot(enc.forward(x, true), probe); };
    loss();
    ParamRegistry reg;
    enc.register_params(reg, "g", ParamTag::spatial);
    reg.zero_grad();
    Tensor dx = enc.backward(probe);
    CHECK(testutil::fd_check(x, dx, loss) < 1e-3);
    for (Param* p : reg.params()) {
        CHECK(testutil::fd_check(p->value, p->grad, loss, 1e-5, 16) < 1e-3);
    }
}

TEST_CASE("semantic encoder is deterministic and fixed by seed") {
    SemanticEncoder enc(256, 9001);
    Tensor img = testutil::random_tensor({1, 3, 64, 64}, 10, 0.5);
    Tensor v1 = enc.encode(img);
    Tensor v2 = enc.encode(img);
    CHECK(v1.shape() == std::vector<int>{256});
    CHECK(max_abs_diff(v1, v2) == 0.0);

    SemanticEncoder enc_same(256, 9001);
    CHECK(max_abs_diff(enc_same.encode(img), v1) == 0.0);
    SemanticEncoder enc_other(256, 1234);
    CHECK(l2_norm(enc_other.encode(img) - v1) > 0.0);
}

TEST_CASE("semantic encoder separates differing images") {
    SemanticEncoder enc(256, 9001);
    Tensor a = testutil::random_tensor({1, 3, 64, 64}, 11, 0.5);
    Tensor b = a;
    // recolor a patch
    for (int i = 0; i < 16; ++i) b[i] = -b[i];
    Tensor va = enc.encode(a), vb = enc.encode(b);
    const double cos = dot(va, vb) / (l2_norm(va) * l2_norm(vb));
    CHECK(cos < 1.0);
}

TEST_CASE("fuse_semantic identities and oracle sum") {
    Tensor v = testutil::random_tensor({16}, 12);
    Tensor zero({16});
    CHECK(max_abs_diff(fuse_semantic(v, zero), v) == 0.0);
    Tensor neg = v * -1.0;
    CHECK(max_abs(fuse_semantic(v, neg)) == 0.0);

    Tensor a = testutil::random_tensor({16}, 13), b = testutil::random_tensor({16}, 14);
    Tensor f = fuse_semantic(a, b);
    for (int i = 0; i < 16; ++i) CHECK(f[i] == a[i] + b[i]);
    CHECK(max_abs_diff(fuse_semantic(a, b), fuse_semantic(b, a)) == 0.0);
    Tensor c = testutil::random_tensor({16}, 15);
    CHECK(max_abs_diff(fuse_semantic(fuse_semantic(a, b), c),
                       fuse_semantic(a, fuse_semantic(b, c))) < 1e-12);

    Tensor wrong({8});
    CHECK_THROWS_AS(fuse_semantic(a, wrong), DimError);
}

TEST_CASE("text encoder: shapes, null token, determinism, OOV") {
    TextEncoder enc(caption_vocabulary(), 64, 16);
    Rng rng(16);
    enc.init(rng);

    Tensor e = enc.encode("red square moving right");
    CHECK(e.shape() == std::vector<int>{4, 64});

    Tensor empty = enc.encode("");
    CHECK(empty.shape() == std::vector<int>{1, 64});

    Tensor e2 = enc.encode("red square moving right");
    CHECK(max_abs_diff(e, e2) == 0.0);

    CHECK_THROWS_WITH_AS(enc.encode("red zeppelin moving right"),
                         doctest::Contains("zeppelin"), DataError);
}

TEST_CASE("text encoder: position encoding distinguishes repeated tokens") {
    TextEncoder enc(caption_vocabulary(), 32, 16);
    Rng rng(17);
    enc.init(rng);
    const std::vector<int> ids = {2, 2};
    Tensor e = enc.encode_tokens(ids, false);
    double diff = 0.0;
    for (int j = 0; j < 32; ++j) diff += std::abs(e[j] - e[32 + j]);
    CHECK(diff > 0.0);
}

TEST_CASE("conditioning bundle enforces stage separation") {
    Tensor sem = testutil::random_tensor({8}, 18);
    LatentVideo detail(Tensor({1, 4, 4, 4}), 4);
    ConditioningBundle base = ConditioningBundle::for_base(sem, detail, 4);
    base.require_stage("base");
    CHECK_THROWS_AS(base.require_stage("refine"), UsageError);

    ConditioningBundle refine = ConditioningBundle::for_refine(testutil::random_tensor({3, 8}, 19), 4);
    refine.require_stage("refine");
    CHECK_THROWS_AS(refine.require_stage("base"), UsageError);
    CHECK_FALSE(refine.semantic.has_value());
    CHECK_FALSE(refine.detail.has_value());
    CHECK_FALSE(base.text.has_value());
}
