#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "casvid/codec.hpp"
#include "casvid/datasynth.hpp"
#include "casvid/encoders.hpp"
#include "casvid/schedule.hpp"
#include "casvid/unet.hpp"

namespace casvid {

// Full run configuration. Two shipped profiles: "toy" (exercised by every
// test) and "paper" (declared dimensions, config only). Field defaults are
// the contract defaults; profiles override them as a bundle.
struct Config {
    std::string profile = "toy";

    // schedule
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double offset_noise_strength = 0.1;

    // geometry
    int base_height = 64, base_width = 64;
    int refine_height = 128, refine_width = 128;
    int latent_factor = 4;
    int latent_channels = 4;
    int cond_dim = 256;
    // conditioning-image latent size consumed by the global encoder
    int global_latent_h = 16, global_latent_w = 16;

    // codec
    int codec_base_channels = 32;
    std::vector<int> codec_stage_channels = {48, 64};

    // unet
    int unet_base_channels = 32;
    std::vector<int> unet_channel_mults = {1, 2};
    std::vector<int> unet_attention_levels = {0, 1};
    int unet_res_blocks = 1;
    int unet_heads = 4;
    int unet_norm_groups = 8;
    int unet_time_dim = 128;
    int temporal_kernel = 3;

    // data supply
    std::vector<int> frame_set = {1, 4, 8};
    std::vector<double> frame_ratios = {1, 1, 5};
    std::vector<int> fps_set = {1, 2, 4};
    std::vector<double> fps_ratios = {1, 2, 4};
    int native_fps = 4;
    int native_frames = 16;

    // diffusion training
    double lr = 8e-5;
    double gamma = 0.2;  // spatial learning-rate factor
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    int t_refine = 600;  // refinement starts at this noise scale
    int steps = 2000;
    int batch_size = 4;
    std::uint64_t seed = 0;
    std::string detail_injection = "every_step";  // or "initial_only"

    // autoencoder training
    int ae_steps = 2500;
    double ae_lr = 1e-3;
    int ae_batch = 8;
    double edge_weight = 0.1;

    // sampling
    int base_steps = 50;
    int refine_steps = 30;
    int sample_frames = 8;
    int sample_fps = 4;
    int text_max_len = 16;
    std::uint64_t semantic_seed = 9001;

    // caption vocabulary (token id = position); checkpoints embed it so a
    // refine model is reconstructible from its header alone
    std::vector<std::string> vocab = caption_vocabulary();

    static Config profile_toy();
    static Config profile_paper();
    static Config named_profile(const std::string& name);

    void validate() const;

    // derived module configs
    NoiseSchedule schedule() const;
    UNetSpec unet_spec() const;
    CodecConfig codec_config() const;
    GlobalEncoderSpec global_spec() const;
    SupplyRatios ratios() const;

    std::string to_json() const;
    static Config from_json(const std::string& json_text);

    // Applies one key/value pair; value is parsed as JSON, falling back to a
    // plain string. Unknown keys and type mismatches raise ConfigError.
    void apply(const std::string& key, const std::string& value);
};

// Precedence: flag overrides > file > defaults. Validates the result.
Config load_config(const Config& defaults, const std::string& file_path,
                   const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace casvid
