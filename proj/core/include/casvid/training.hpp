#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "casvid/codec.hpp"
#include "casvid/config.hpp"
#include "casvid/datasynth.hpp"
#include "casvid/encoders.hpp"
#include "casvid/optimizer.hpp"
#include "casvid/sampler.hpp"
#include "casvid/unet.hpp"

namespace casvid {

struct Checkpoint;

/*=============================== TrainConfig ===============================*/

struct TrainConfig {
    std::string stage = "base";  // base | refine
    double lr = 8e-5;
    double gamma_spatial = 0.2;
    int t_refine = 600;  // refine draws t in [1, t_refine]
    int steps = 0;
    int batch_size = 4;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    std::string detail_injection = "every_step";
    double offset_noise_strength = 0.1;
    int log_every = 10;

    static TrainConfig from(const Config& cfg, const std::string& stage);
    void validate(int T) const;
};

// base -> uniform [1, T]; refine -> uniform [1, T_r].
int draw_timestep(const std::string& stage, int T, int t_refine, Rng& rng);

/*================================ StageModel ===============================*/

// One denoising stage: the UNet plus its conditioning encoders and the
// frozen codec, sharing a parameter registry for checkpointing.
class StageModel : public StagePredictor {
public:
    StageModel(const Config& cfg, const std::string& stage);

    void init(Rng& rng);

    std::string stage() const override { return stage_; }
    const Config& config() const { return cfg_; }
    ParamRegistry& registry() { return reg_; }
    UNet3D& unet() { return unet_; }
    Autoencoder& codec() { return codec_; }
    SemanticEncoder& semantic();
    GlobalEncoder& global_encoder();
    TextEncoder& text_encoder();

    // Fused inference conditioning for an image at base resolution.
    ConditioningBundle build_base_bundle(const VideoTensor& image, int fps);
    ConditioningBundle build_refine_bundle(const std::string& caption, int fps);

    // StagePredictor: z (F,c,h,w), inference mode, detail injected per the
    // configured policy.
    Tensor predict_v(const Tensor& z, int t, const ConditioningBundle& cond) override;

    Checkpoint to_checkpoint(const std::string& seeds_json) const;
    void load(const Checkpoint& ckpt);               // strict, stage-checked
    void init_from_base(const Checkpoint& base_ckpt);  // refine model only

    static std::unique_ptr<StageModel> from_checkpoint(const Checkpoint& ckpt);

private:
    Config cfg_;
    std::string stage_;
    ParamRegistry reg_;
    UNet3D unet_;
    Autoencoder codec_;
    std::optional<SemanticEncoder> semantic_;
    std::optional<GlobalEncoder> global_;
    std::optional<TextEncoder> text_;
};

/*================================ training =================================*/

// Per-sample record for one optimization step. Base-stage records carry the
// frozen semantic vector plus the conditioning-image latents; refine-stage
// records carry caption tokens.
struct TrainSample {
    Tensor z0;  // (F,c,h,w)
    int fps = 1;
    Tensor clip_vec;     // (D)
    Tensor cond_latent;  // (1,c,gh,gw) global-encoder input
    Tensor detail;       // (1,c,h,w) added to frame 0
    std::vector<int> tokens;
};

struct TrainBatch {
    std::vector<TrainSample> samples;
    std::vector<int> ts;
    std::vector<Tensor> noise;
};

// Conditioning assembly for one optimization step: q_sample each clip,
// build v targets, inject detail on frame 0 (base), run the trainable
// encoders (with caches when backprop is intended).
struct PreparedBatch {
    Tensor z_in;      // (B,F,c,h,w), noised input with detail injected
    Tensor v_target;  // (B,F,c,h,w)
    UNetCond cond;
    std::vector<int> ts;
};
PreparedBatch prepare_batch(StageModel& model, const TrainBatch& batch, const NoiseSchedule& sched,
                            bool backprop);

// Mean squared error between the v prediction and the v target; when
// backprop is set, gradients reach the UNet and the trainable encoders.
double compute_loss(StageModel& model, const TrainBatch& batch, const NoiseSchedule& sched,
                    bool backprop);

// Full Eq.-style training loop: batch sampling with dynamic frames/fps,
// encoding, timestep draws, offset noise, loss, gamma-scaled AdamW step.
Checkpoint train_stage(const ClipDataset& dataset, StageModel& model, const TrainConfig& tcfg,
                       TrainCurve* curve = nullptr);

// Clip ingestion shared by training and evaluation: temporal subsampling at
// the requested fps, center-crop to the target aspect, bilinear resize.
VideoTensor ingest_clip(const ClipDataset& ds, std::size_t clip, int frames, int fps, int out_h,
                        int out_w, int native_fps, Rng& rng);
Tensor fit_frame(const Tensor& frame, int out_h, int out_w);  // crop-to-aspect + resize

}  // namespace casvid
