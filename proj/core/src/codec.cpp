#include "casvid/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "casvid/checkpoint.hpp"
#include "casvid/datasynth.hpp"
#include "casvid/errors.hpp"
#include "casvid/optimizer.hpp"
#include "casvid/rng.hpp"

namespace casvid {

int CodecConfig::num_stages() const {
    int d = downsample_factor, n = 0;
    while (d > 1) {
        if (d % 2 != 0) throw ConfigError("codec downsample_factor must be a power of two");
        d /= 2;
        ++n;
    }
    return n;
}

void CodecConfig::validate() const {
    if (downsample_factor < 2) throw ConfigError("codec downsample_factor must be >= 2");
    if (static_cast<int>(stage_channels.size()) != num_stages())
        throw ConfigError("codec stage_channels must have one entry per 2x downsample");
    if (latent_channels < 1) throw ConfigError("codec latent_channels must be >= 1");
}

Autoencoder::Autoencoder(const CodecConfig& cfg) : config(cfg) {
    config.validate();
    const int stages = config.num_stages();
    enc_in_ = Conv2d(3, config.base_channels, 3, 1, 1);
    int prev = config.base_channels;
    for (int i = 0; i < stages; ++i) {
        const int ch = config.stage_channels[static_cast<std::size_t>(i)];
        enc_convs_.emplace_back(prev, ch, 3, 2, 1);
        enc_convs_.emplace_back(ch, ch, 3, 1, 1);
        prev = ch;
    }
    enc_out_ = Conv2d(prev, config.latent_channels, 3, 1, 1);

    dec_in_ = Conv2d(config.latent_channels, prev, 3, 1, 1);
    for (int i = stages - 1; i >= 0; --i) {
        const int ch = config.stage_channels[static_cast<std::size_t>(i)];
        const int next = i > 0 ? config.stage_channels[static_cast<std::size_t>(i - 1)]
                               : config.base_channels;
        dec_convs_.emplace_back(ch, ch, 3, 1, 1);
        dec_convs_.emplace_back(ch, next, 3, 1, 1);  // applied after 2x upsample
    }
    dec_out_ = Conv2d(config.base_channels, 3, 3, 1, 1);

    enc_act_.resize(enc_convs_.size() + 1);
    dec_act_.resize(dec_convs_.size() + 1);
    ups_.resize(static_cast<std::size_t>(stages));
}

void Autoencoder::init(Rng& rng) {
    enc_in_.init_kaiming(rng);
    for (auto& c : enc_convs_) c.init_kaiming(rng);
    enc_out_.init_kaiming(rng);
    dec_in_.init_kaiming(rng);
    for (auto& c : dec_convs_) c.init_kaiming(rng);
    dec_out_.init_kaiming(rng);
    ready_ = true;
}

void Autoencoder::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    enc_in_.register_params(reg, prefix + ".enc.in", tag);
    for (std::size_t i = 0; i < enc_convs_.size(); ++i)
        enc_convs_[i].register_params(reg, prefix + ".enc." + std::to_string(i), tag);
    enc_out_.register_params(reg, prefix + ".enc.out", tag);
    dec_in_.register_params(reg, prefix + ".dec.in", tag);
    for (std::size_t i = 0; i < dec_convs_.size(); ++i)
        dec_convs_[i].register_params(reg, prefix + ".dec." + std::to_string(i), tag);
    dec_out_.register_params(reg, prefix + ".dec.out", tag);
}

void Autoencoder::require_ready() const {
    if (!ready_) throw CheckpointError("codec weights not loaded");
}

Tensor Autoencoder::encode_frames(const Tensor& x, bool training) {
    require_ready();
    if (x.rank() != 4 || x.dim(1) != 3)
        throw DimError("codec encode expects (N,3,H,W), got " + shape_str(x.shape()));
    if (x.dim(2) % config.downsample_factor != 0 || x.dim(3) % config.downsample_factor != 0)
        throw DimError("spatial dims " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                       " not divisible by codec factor " + std::to_string(config.downsample_factor));
    Tensor h = enc_act_[0].forward(enc_in_.forward(x, training), training);
    for (std::size_t i = 0; i < enc_convs_.size(); ++i)
        h = enc_act_[i + 1].forward(enc_convs_[i].forward(h, training), training);
    return enc_out_.forward(h, training);
}

Tensor Autoencoder::encoder_backward(const Tensor& dz) {
    Tensor d = enc_out_.backward(dz);
    for (std::size_t i = enc_convs_.size(); i-- > 0;)
        d = enc_convs_[i].backward(enc_act_[i + 1].backward(d));
    return enc_in_.backward(enc_act_[0].backward(d));
}

Tensor Autoencoder::decode_frames(const Tensor& z, bool training) {
    require_ready();
    if (z.rank() != 4 || z.dim(1) != config.latent_channels)
        throw DimError("codec decode expects (N," + std::to_string(config.latent_channels) +
                       ",h,w), got " + shape_str(z.shape()));
    Tensor h = dec_act_[0].forward(dec_in_.forward(z, training), training);
    for (std::size_t s = 0; s < ups_.size(); ++s) {
        h = dec_act_[2 * s + 1].forward(dec_convs_[2 * s].forward(h, training), training);
        h = ups_[s].forward(h, training);
        h = dec_act_[2 * s + 2].forward(dec_convs_[2 * s + 1].forward(h, training), training);
    }
    return dec_out_.forward(h, training);
}

Tensor Autoencoder::decoder_backward(const Tensor& dx) {
    Tensor d = dec_out_.backward(dx);
    for (std::size_t s = ups_.size(); s-- > 0;) {
        d = dec_convs_[2 * s + 1].backward(dec_act_[2 * s + 2].backward(d));
        d = ups_[s].backward(d);
        d = dec_convs_[2 * s].backward(dec_act_[2 * s + 1].backward(d));
    }
    return dec_in_.backward(dec_act_[0].backward(d));
}

LatentVideo Autoencoder::encode(const VideoTensor& x) {
    Tensor z = encode_frames(x.data, false);
    return LatentVideo(std::move(z), config.downsample_factor);
}

VideoTensor Autoencoder::decode(const LatentVideo& z, int fps) {
    Tensor x = decode_frames(z.data, false);
    return VideoTensor(std::move(x), fps);  // construction clamps to [-1,1]
}

LatentVideo Autoencoder::detail_features(const VideoTensor& image) {
    if (image.frames() != 1)
        throw UsageError("detail_features expects a single frame, got " +
                         std::to_string(image.frames()));
    return encode(image);
}

/*================================ training ================================*/

void TrainCurve::append(int step, double loss) {
    steps.push_back(step);
    losses.push_back(loss);
}

void TrainCurve::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write loss curve: " + path);
    out << "step,loss\n";
    for (std::size_t i = 0; i < steps.size(); ++i) out << steps[i] << "," << losses[i] << "\n";
}

double reconstruction_loss(const Tensor& pred, const Tensor& target, double edge_weight,
                           Tensor* grad) {
    require_same_shape(pred, target, "reconstruction_loss");
    const std::int64_t n = pred.size();
    double loss = 0.0;
    if (grad && !grad->same_shape(pred)) *grad = Tensor(pred.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = pred[i] - target[i];
        loss += d * d;
        if (grad) (*grad)[i] += 2.0 * d / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (edge_weight <= 0.0) return loss;

    // Forward-difference edge term, horizontal and vertical.
    const int N = pred.dim(0), C = pred.dim(1), H = pred.dim(2), W = pred.dim(3);
    const std::int64_t nh = static_cast<std::int64_t>(N) * C * H * (W - 1);
    const std::int64_t nv = static_cast<std::int64_t>(N) * C * (H - 1) * W;
    double lh = 0.0, lv = 0.0;
    for (int nc = 0; nc < N * C; ++nc) {
        const double* p = pred.data() + static_cast<std::int64_t>(nc) * H * W;
        const double* t = target.data() + static_cast<std::int64_t>(nc) * H * W;
        double* g = grad ? grad->data() + static_cast<std::int64_t>(nc) * H * W : nullptr;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x + 1 < W; ++x) {
                const double e = (p[y * W + x + 1] - p[y * W + x]) - (t[y * W + x + 1] - t[y * W + x]);
                lh += e * e;
                if (g) {
                    const double ge = edge_weight * 2.0 * e / static_cast<double>(nh);
                    g[y * W + x + 1] += ge;
                    g[y * W + x] -= ge;
                }
            }
        }
        for (int y = 0; y + 1 < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double e = (p[(y + 1) * W + x] - p[y * W + x]) - (t[(y + 1) * W + x] - t[y * W + x]);
                lv += e * e;
                if (g) {
                    const double ge = edge_weight * 2.0 * e / static_cast<double>(nv);
                    g[(y + 1) * W + x] += ge;
                    g[y * W + x] -= ge;
                }
            }
        }
    }
    return loss + edge_weight * (lh / static_cast<double>(nh) + lv / static_cast<double>(nv));
}

Checkpoint train_autoencoder(const ClipDataset& dataset, Autoencoder& codec,
                             const CodecTrainConfig& cfg, const std::string& config_json,
                             TrainCurve* curve) {
    if (dataset.size() == 0 && cfg.steps > 0) throw DataError("autoencoder training needs clips");

    ParamRegistry reg;
    codec.register_params(reg, "codec", ParamTag::spatial);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    std::vector<ParamGroup> groups = build_param_groups(reg, reg.tag_map(), cfg.lr, 1.0);
    AdamW opt(std::move(groups), opt_cfg);

    Rng batch_rng(Rng::derive(cfg.seed, "ae.batch"));
    for (int step = 0; step < cfg.steps; ++step) {
        // Batch of individual frames, resized to the training resolution.
        Tensor batch({cfg.batch_frames, 3, cfg.train_height, cfg.train_width});
        for (int i = 0; i < cfg.batch_frames; ++i) {
            const int ci = batch_rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
            const ClipRecord& rec = dataset.record(static_cast<std::size_t>(ci));
            const int fi = batch_rng.uniform_int(0, rec.frames - 1);
            Tensor frame = dataset.load_frame(static_cast<std::size_t>(ci), fi);
            frame = resize_bilinear(frame, cfg.train_height, cfg.train_width);
            std::copy(frame.data(), frame.data() + frame.size(),
                      batch.data() + static_cast<std::int64_t>(i) * frame.size());
        }

        opt.zero_grad();
        Tensor z = codec.encode_frames(batch, true);
        Tensor recon = codec.decode_frames(z, true);
        Tensor dx;
        const double loss = reconstruction_loss(recon, batch, cfg.edge_weight, &dx);
        if (!std::isfinite(loss))
            throw TrainingError("autoencoder loss diverged (non-finite) at step " +
                                std::to_string(step));
        Tensor dz = codec.decoder_backward(dx);
        codec.encoder_backward(dz);
        opt.step();
        if (curve && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
            curve->append(step, loss);
    }

    std::string seeds = std::string("{\"seed\":") + std::to_string(cfg.seed) + "}";
    return checkpoint_from_registry(reg, "autoencoder", config_json, seeds);
}

}  // namespace casvid
