#include <benchmark/benchmark.h>

#include "casvid/codec.hpp"
#include "casvid/config.hpp"
#include "casvid/freqlab.hpp"
#include "casvid/rng.hpp"
#include "casvid/sampler.hpp"
#include "casvid/schedule.hpp"
#include "casvid/unet.hpp"

using namespace casvid;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    t.fill_normal(rng);
    return t;
}

}  // namespace

static void BM_CodecEncodeFrame(benchmark::State& state) {
    Config cfg = Config::profile_toy();
    Autoencoder codec(cfg.codec_config());
    Rng rng(1);
    codec.init(rng);
    Tensor x = random_tensor({1, 3, 64, 64}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(codec.encode_frames(x, false));
}
BENCHMARK(BM_CodecEncodeFrame);

static void BM_CodecDecodeFrame(benchmark::State& state) {
    Config cfg = Config::profile_toy();
    Autoencoder codec(cfg.codec_config());
    Rng rng(1);
    codec.init(rng);
    Tensor z = random_tensor({1, 4, 16, 16}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(codec.decode_frames(z, false));
}
BENCHMARK(BM_CodecDecodeFrame);

static void BM_UNetForwardClip(benchmark::State& state) {
    Config cfg = Config::profile_toy();
    UNet3D unet(cfg.unet_spec());
    Rng rng(4);
    unet.init(rng);
    const int F = static_cast<int>(state.range(0));
    Tensor z = random_tensor({1, F, 4, 16, 16}, 5);
    UNetCond cond;
    cond.ctx.push_back(random_tensor({1, cfg.cond_dim}, 6));
    cond.fps.push_back(4);
    for (auto _ : state) benchmark::DoNotOptimize(unet.forward(z, {500}, cond, true, false));
    state.SetItemsProcessed(state.iterations() * F);
}
BENCHMARK(BM_UNetForwardClip)->Arg(1)->Arg(8);

static void BM_UNetTrainStep(benchmark::State& state) {
    Config cfg = Config::profile_toy();
    UNet3D unet(cfg.unet_spec());
    Rng rng(7);
    unet.init(rng);
    ParamRegistry reg;
    unet.register_params(reg, "unet");
    Tensor z = random_tensor({2, 8, 4, 16, 16}, 8);
    Tensor probe = random_tensor({2, 8, 4, 16, 16}, 9);
    UNetCond cond;
    cond.ctx = {random_tensor({1, cfg.cond_dim}, 10), random_tensor({1, cfg.cond_dim}, 11)};
    cond.fps = {4, 4};
    for (auto _ : state) {
        reg.zero_grad();
        Tensor v = unet.forward(z, {500, 250}, cond, true, true);
        benchmark::DoNotOptimize(unet.backward(probe, nullptr));
    }
}
BENCHMARK(BM_UNetTrainStep);

static void BM_RadialSpectrum(benchmark::State& state) {
    VideoTensor video(random_tensor({8, 3, 64, 64}, 12), 4);
    for (auto _ : state) benchmark::DoNotOptimize(radial_spatial_distribution(video, 24));
}
BENCHMARK(BM_RadialSpectrum);

static void BM_OffsetNoise(benchmark::State& state) {
    Rng rng(13);
    OffsetNoiseConfig cfg{0.1};
    for (auto _ : state) benchmark::DoNotOptimize(sample_offset_noise({4, 8, 4, 16, 16}, cfg, rng));
}
BENCHMARK(BM_OffsetNoise);

BENCHMARK_MAIN();
