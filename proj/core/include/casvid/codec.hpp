#pragma once

#include <string>
#include <vector>

#include "casvid/nn.hpp"
#include "casvid/video.hpp"

namespace casvid {

class Rng;
struct Checkpoint;
class ClipDataset;

struct CodecConfig {
    int downsample_factor = 4;  // power of two
    int latent_channels = 4;
    int base_channels = 32;
    std::vector<int> stage_channels = {48, 64};  // one entry per 2x downsample

    int num_stages() const;
    void validate() const;
};

// Convolutional autoencoder mapping pixels to a d-times-downsampled latent
// space. Frames are encoded independently, so video clips are processed as
// image batches.
class Autoencoder {
public:
    Autoencoder() = default;
    explicit Autoencoder(const CodecConfig& cfg);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);
    void set_ready() { ready_ = true; }
    bool ready() const { return ready_; }

    // (N,3,H,W) -> (N,c,H/d,W/d) and back; unclamped, training-capable.
    Tensor encode_frames(const Tensor& x, bool training = false);
    Tensor decode_frames(const Tensor& z, bool training = false);
    Tensor encoder_backward(const Tensor& dz);
    Tensor decoder_backward(const Tensor& dx);

    LatentVideo encode(const VideoTensor& x);
    VideoTensor decode(const LatentVideo& z, int fps = 1);

    // The detail-conditioning path: identical to encode() of the one frame.
    LatentVideo detail_features(const VideoTensor& image);

    CodecConfig config;

private:
    void require_ready() const;

    Conv2d enc_in_;
    std::vector<Conv2d> enc_convs_;  // two per stage (down + keep)
    Conv2d enc_out_;
    Conv2d dec_in_;
    std::vector<Conv2d> dec_convs_;  // two per stage (keep + post-upsample)
    Conv2d dec_out_;
    std::vector<SiLU> enc_act_, dec_act_;
    std::vector<Upsample2x> ups_;
    bool ready_ = false;
};

struct CodecTrainConfig {
    int steps = 2500;
    int batch_frames = 8;
    double lr = 1e-3;
    double edge_weight = 0.1;  // gradient-difference sharpness term
    std::uint64_t seed = 0;
    int train_height = 64;
    int train_width = 64;
    int log_every = 50;
};

struct TrainCurve {
    std::vector<int> steps;
    std::vector<double> losses;

    void append(int step, double loss);
    void write_csv(const std::string& path) const;
};

// Reconstruction training (L2 plus edge term). Returns the stage-tagged
// "autoencoder" checkpoint; the codec is left holding the trained weights.
Checkpoint train_autoencoder(const ClipDataset& dataset, Autoencoder& codec,
                             const CodecTrainConfig& cfg, const std::string& config_json,
                             TrainCurve* curve = nullptr);

// L2 + edge-difference loss; accumulates d(loss)/d(pred) into grad if given.
double reconstruction_loss(const Tensor& pred, const Tensor& target, double edge_weight,
                           Tensor* grad);

}  // namespace casvid
