#include "casvid/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "casvid/checkpoint.hpp"
#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

/*=============================== TrainConfig ===============================*/

TrainConfig TrainConfig::from(const Config& cfg, const std::string& stage) {
    TrainConfig t;
    t.stage = stage;
    t.lr = cfg.lr;
    t.gamma_spatial = cfg.gamma;
    t.t_refine = cfg.t_refine;
    t.steps = cfg.steps;
    t.batch_size = cfg.batch_size;
    t.seed = cfg.seed;
    t.weight_decay = cfg.weight_decay;
    t.adam_beta1 = cfg.adam_beta1;
    t.adam_beta2 = cfg.adam_beta2;
    t.detail_injection = cfg.detail_injection;
    t.offset_noise_strength = cfg.offset_noise_strength;
    return t;
}

void TrainConfig::validate(int T) const {
    if (stage != "base" && stage != "refine")
        throw ConfigError("train stage must be base or refine, got " + stage);
    if (!(gamma_spatial > 0.0 && gamma_spatial <= 1.0))
        throw ConfigError("gamma must be in (0, 1]");
    if (stage == "refine" && (t_refine < 1 || t_refine > T))
        throw ConfigError("refine stage requires 1 <= t_refine <= T");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
}

int draw_timestep(const std::string& stage, int T, int t_refine, Rng& rng) {
    if (stage == "refine") return rng.uniform_int(1, t_refine);
    return rng.uniform_int(1, T);
}

/*================================ StageModel ===============================*/

StageModel::StageModel(const Config& cfg, const std::string& stage)
    : cfg_(cfg), stage_(stage), unet_(cfg.unet_spec()), codec_(cfg.codec_config()) {
    if (stage_ != "base" && stage_ != "refine")
        throw ConfigError("stage must be base or refine, got " + stage_);
    unet_.register_params(reg_, "unet");
    codec_.register_params(reg_, "codec", ParamTag::frozen);
    if (stage_ == "base") {
        semantic_.emplace(cfg.cond_dim, cfg.semantic_seed);
        semantic_->register_params(reg_, "semantic");
        global_.emplace(cfg.global_spec());
        global_->register_params(reg_, "global", ParamTag::spatial);
    } else {
        text_.emplace(cfg.vocab, cfg.cond_dim, cfg.text_max_len);
        text_->register_params(reg_, "text", ParamTag::spatial);
    }
}

void StageModel::init(Rng& rng) {
    unet_.init(rng);
    if (global_) global_->init(rng);
    if (text_) text_->init(rng);
    // codec weights come from the autoencoder checkpoint; semantic encoder
    // is fixed-seed initialized in its constructor
}

SemanticEncoder& StageModel::semantic() {
    if (!semantic_) throw UsageError("semantic encoder only exists on the base stage");
    return *semantic_;
}

GlobalEncoder& StageModel::global_encoder() {
    if (!global_) throw UsageError("global encoder only exists on the base stage");
    return *global_;
}

TextEncoder& StageModel::text_encoder() {
    if (!text_) throw UsageError("text encoder only exists on the refine stage");
    return *text_;
}

ConditioningBundle StageModel::build_base_bundle(const VideoTensor& image, int fps) {
    if (stage_ != "base") throw UsageError("base bundles are built by the base stage");
    if (image.frames() != 1) throw UsageError("conditioning image must be a single frame");
    LatentVideo detail = codec_.detail_features(image);
    Tensor clip_vec = semantic_->encode_image(image);

    // global-encoder path at its declared latent size
    const int gh = cfg_.global_latent_h * cfg_.latent_factor;
    const int gw = cfg_.global_latent_w * cfg_.latent_factor;
    Tensor gin = image.data;
    if (gin.dim(2) != gh || gin.dim(3) != gw) gin = resize_bilinear(gin, gh, gw);
    Tensor glat = codec_.encode_frames(gin, false);
    Tensor gvec = global_->forward(glat, false).reshaped({cfg_.cond_dim});

    return ConditioningBundle::for_base(fuse_semantic(clip_vec, gvec), std::move(detail), fps);
}

ConditioningBundle StageModel::build_refine_bundle(const std::string& caption, int fps) {
    if (stage_ != "refine") throw UsageError("refine bundles are built by the refine stage");
    return ConditioningBundle::for_refine(text_->encode(caption, false), fps);
}

namespace {

void add_detail_to_frame0(Tensor& z, const Tensor& detail) {
    // z (F,c,h,w), detail (1,c,h,w)
    if (z.dim(1) != detail.dim(1) || z.dim(2) != detail.dim(2) || z.dim(3) != detail.dim(3))
        throw DimError("detail latent shape " + shape_str(detail.shape()) +
                       " does not match latent " + shape_str(z.shape()));
    for (std::int64_t i = 0; i < detail.size(); ++i) z[i] += detail[i];
}

}  // namespace

Tensor StageModel::predict_v(const Tensor& z, int t, const ConditioningBundle& cond) {
    cond.require_stage(stage_);
    if (z.rank() != 4) throw DimError("predict_v expects (F,c,h,w), got " + shape_str(z.shape()));
    const NoiseSchedule sched = cfg_.schedule();
    sched.require_step(t);

    Tensor z_in = z;
    UNetCond ucond;
    if (stage_ == "base") {
        if (cfg_.detail_injection == "every_step") add_detail_to_frame0(z_in, cond.detail->data);
        ucond.ctx.push_back(cond.semantic->reshaped({1, cfg_.cond_dim}));
    } else {
        ucond.ctx.push_back(*cond.text);
    }
    ucond.fps.push_back(cond.fps);

    const int F = z.dim(0);
    Tensor zb = z_in.reshaped({1, F, z.dim(1), z.dim(2), z.dim(3)});
    Tensor v = unet_.forward(zb, {t}, ucond, true, false);
    return v.reshaped(z.shape());
}

Checkpoint StageModel::to_checkpoint(const std::string& seeds_json) const {
    return checkpoint_from_registry(reg_, stage_, cfg_.to_json(), seeds_json);
}

void StageModel::load(const Checkpoint& ckpt) {
    require_stage(ckpt, stage_);
    load_registry(ckpt, reg_);
    codec_.set_ready();
}

void StageModel::init_from_base(const Checkpoint& base_ckpt) {
    if (stage_ != "refine") throw UsageError("init_from_base applies to the refine stage");
    require_stage(base_ckpt, "base");
    load_registry_prefix(base_ckpt, reg_, "unet.");
    load_registry_prefix(base_ckpt, reg_, "codec.");
    codec_.set_ready();
}

std::unique_ptr<StageModel> StageModel::from_checkpoint(const Checkpoint& ckpt) {
    Config cfg = Config::from_json(ckpt.config_json);
    cfg.validate();
    auto model = std::make_unique<StageModel>(cfg, ckpt.stage);
    model->load(ckpt);
    return model;
}

/*================================ training =================================*/

PreparedBatch prepare_batch(StageModel& model, const TrainBatch& batch,
                            const NoiseSchedule& sched, bool backprop) {
    const Config& cfg = model.config();
    const std::size_t B = batch.samples.size();
    if (B == 0 || batch.ts.size() != B || batch.noise.size() != B)
        throw UsageError("training batch must carry z0/t/noise per sample");

    const int F = batch.samples[0].z0.dim(0);
    const int c = batch.samples[0].z0.dim(1), h = batch.samples[0].z0.dim(2),
              w = batch.samples[0].z0.dim(3);
    const std::int64_t clip_sz = batch.samples[0].z0.size();

    PreparedBatch prep;
    prep.ts = batch.ts;
    prep.z_in = Tensor({static_cast<int>(B), F, c, h, w});
    prep.v_target = Tensor({static_cast<int>(B), F, c, h, w});
    prep.cond.fps.resize(B);

    // trainable encoder passes (batched so backward sees the whole batch)
    Tensor gvecs;
    std::vector<Tensor> text_ctx;
    if (model.stage() == "base") {
        Tensor gin({static_cast<int>(B), c, batch.samples[0].cond_latent.dim(2),
                    batch.samples[0].cond_latent.dim(3)});
        for (std::size_t i = 0; i < B; ++i)
            std::copy(batch.samples[i].cond_latent.data(),
                      batch.samples[i].cond_latent.data() + batch.samples[i].cond_latent.size(),
                      gin.data() + static_cast<std::int64_t>(i) * batch.samples[i].cond_latent.size());
        gvecs = model.global_encoder().forward(gin, backprop);  // (B, D)
    } else {
        std::vector<std::vector<int>> all_tokens;
        for (const auto& s : batch.samples) all_tokens.push_back(s.tokens);
        text_ctx = model.text_encoder().encode_batch(all_tokens, backprop);
    }

    for (std::size_t i = 0; i < B; ++i) {
        const TrainSample& s = batch.samples[i];
        const int t = batch.ts[i];
        if (!s.z0.same_shape(batch.noise[i]))
            throw DimError("noise shape mismatch in training batch");
        if (model.stage() == "refine" && t > cfg.t_refine)
            throw Error("refine trainer drew t=" + std::to_string(t) + " beyond t_refine=" +
                        std::to_string(cfg.t_refine));

        Tensor zt = q_sample(s.z0, t, batch.noise[i], sched);
        Tensor v = v_from_eps_x0(s.z0, batch.noise[i], t, sched);
        if (model.stage() == "base") {
            const bool inject = cfg.detail_injection == "every_step" || t == cfg.T;
            if (inject) add_detail_to_frame0(zt, s.detail);
            Tensor ctx({1, cfg.cond_dim});
            for (int j = 0; j < cfg.cond_dim; ++j)
                ctx[j] = s.clip_vec[j] + gvecs[static_cast<std::int64_t>(i) * cfg.cond_dim + j];
            prep.cond.ctx.push_back(std::move(ctx));
        } else {
            prep.cond.ctx.push_back(text_ctx[i]);
        }
        prep.cond.fps[i] = s.fps;
        std::copy(zt.data(), zt.data() + clip_sz,
                  prep.z_in.data() + static_cast<std::int64_t>(i) * clip_sz);
        std::copy(v.data(), v.data() + clip_sz,
                  prep.v_target.data() + static_cast<std::int64_t>(i) * clip_sz);
    }
    return prep;
}

double compute_loss(StageModel& model, const TrainBatch& batch, const NoiseSchedule& sched,
                    bool backprop) {
    const Config& cfg = model.config();
    PreparedBatch prep = prepare_batch(model, batch, sched, backprop);
    const std::size_t B = batch.samples.size();

    Tensor v_pred = model.unet().forward(prep.z_in, prep.ts, prep.cond, true, backprop);
    const double loss = mean_squared_error(v_pred, prep.v_target);
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training loss is not finite (|v_pred|max=" << max_abs(v_pred) << ", t=";
        for (std::size_t i = 0; i < batch.ts.size(); ++i) os << (i ? "," : "") << batch.ts[i];
        os << ")";
        throw TrainingError(os.str());
    }
    if (!backprop) return loss;

    Tensor dv(v_pred.shape());
    const double scale = 2.0 / static_cast<double>(v_pred.size());
    for (std::int64_t i = 0; i < dv.size(); ++i) dv[i] = scale * (v_pred[i] - prep.v_target[i]);

    std::vector<Tensor> dctx;
    model.unet().backward(dv, &dctx);

    if (model.stage() == "base") {
        Tensor dg({static_cast<int>(B), cfg.cond_dim});
        for (std::size_t i = 0; i < B; ++i)
            std::copy(dctx[i].data(), dctx[i].data() + cfg.cond_dim,
                      dg.data() + static_cast<std::int64_t>(i) * cfg.cond_dim);
        model.global_encoder().backward(dg);
    } else {
        model.text_encoder().backward_batch(dctx);
    }
    return loss;
}

/*============================= clip ingestion =============================*/

Tensor fit_frame(const Tensor& frame, int out_h, int out_w) {
    const int H = frame.dim(2), W = frame.dim(3);
    if (H == out_h && W == out_w) return frame;
    // center-crop to the target aspect, then resize
    const double want = static_cast<double>(out_w) / out_h;
    int crop_w = W, crop_h = H;
    if (static_cast<double>(W) / H > want)
        crop_w = std::max(1, static_cast<int>(std::lround(H * want)));
    else
        crop_h = std::max(1, static_cast<int>(std::lround(W / want)));
    Tensor cropped = center_crop(frame, crop_h, crop_w);
    return resize_bilinear(cropped, out_h, out_w);
}

VideoTensor ingest_clip(const ClipDataset& ds, std::size_t clip, int frames, int fps, int out_h,
                        int out_w, int native_fps, Rng& rng) {
    const ClipRecord& rec = ds.record(clip);
    const int stride = std::max(1, native_fps / std::max(1, fps));
    const int available = (rec.frames - 1) / stride + 1;
    const int take = std::min(frames, available);
    const int max_start = rec.frames - 1 - (take - 1) * stride;
    const int start = max_start > 0 ? rng.uniform_int(0, max_start) : 0;

    Tensor out({take, 3, out_h, out_w});
    for (int f = 0; f < take; ++f) {
        Tensor frame = ds.load_frame(clip, start + f * stride);
        frame = fit_frame(frame, out_h, out_w);
        std::copy(frame.data(), frame.data() + frame.size(),
                  out.data() + static_cast<std::int64_t>(f) * frame.size());
    }
    return VideoTensor(std::move(out), fps);
}

/*=============================== train_stage ===============================*/

Checkpoint train_stage(const ClipDataset& dataset, StageModel& model, const TrainConfig& tcfg,
                       TrainCurve* curve) {
    const Config& cfg = model.config();
    tcfg.validate(cfg.T);
    if (tcfg.stage != model.stage())
        throw CheckpointError("train config stage '" + tcfg.stage + "' does not match model stage '" +
                              model.stage() + "'");
    if (dataset.size() == 0 && tcfg.steps > 0) throw DataError("training needs a non-empty dataset");
    if (!model.codec().ready())
        throw CheckpointError("codec weights not loaded; train the autoencoder first");

    const NoiseSchedule sched = cfg.schedule();
    const SupplyRatios ratios = cfg.ratios();
    const bool refine = model.stage() == "refine";
    const int out_h = refine ? cfg.refine_height : cfg.base_height;
    const int out_w = refine ? cfg.refine_width : cfg.base_width;

    AdamWConfig ocfg;
    ocfg.lr = tcfg.lr;
    ocfg.beta1 = tcfg.adam_beta1;
    ocfg.beta2 = tcfg.adam_beta2;
    ocfg.weight_decay = tcfg.weight_decay;
    auto groups =
        build_param_groups(model.registry(), tag_parameters(model.registry()), tcfg.lr, tcfg.gamma_spatial);
    AdamW opt(std::move(groups), ocfg);

    Rng rng_data(Rng::derive(tcfg.seed, "data"));
    Rng rng_t(Rng::derive(tcfg.seed, "t"));
    Rng rng_noise(Rng::derive(tcfg.seed, "noise"));
    const OffsetNoiseConfig noise_cfg{tcfg.offset_noise_strength};

    for (int step = 0; step < tcfg.steps; ++step) {
        auto [frames, fps] = sample_frames_fps(ratios, rng_data);

        TrainBatch batch;
        for (int i = 0; i < tcfg.batch_size; ++i) {
            const std::size_t ci =
                static_cast<std::size_t>(rng_data.uniform_int(0, static_cast<int>(dataset.size()) - 1));
            VideoTensor clip = ingest_clip(dataset, ci, frames, fps, out_h, out_w, cfg.native_fps,
                                           rng_data);
            TrainSample s;
            s.fps = fps;
            s.z0 = model.codec().encode_frames(clip.data, false);
            if (!refine) {
                VideoTensor img = clip.frame(0);
                s.clip_vec = model.semantic().encode_image(img);
                // detail latent is the frame-0 latent (frame-local encoder)
                s.detail = Tensor({1, s.z0.dim(1), s.z0.dim(2), s.z0.dim(3)});
                std::copy(s.z0.data(), s.z0.data() + s.detail.size(), s.detail.data());
                const int gh = cfg.global_latent_h * cfg.latent_factor;
                const int gw = cfg.global_latent_w * cfg.latent_factor;
                if (gh == out_h && gw == out_w) {
                    s.cond_latent = s.detail;
                } else {
                    Tensor gin = resize_bilinear(img.data, gh, gw);
                    s.cond_latent = model.codec().encode_frames(gin, false);
                }
            } else {
                s.tokens = model.text_encoder().tokenize(dataset.record(ci).caption);
            }
            batch.ts.push_back(draw_timestep(model.stage(), cfg.T, tcfg.t_refine, rng_t));
            batch.noise.push_back(sample_offset_noise(s.z0.shape(), noise_cfg, rng_noise));
            batch.samples.push_back(std::move(s));
        }

        opt.zero_grad();
        double loss;
        try {
            loss = compute_loss(model, batch, sched, true);
        } catch (const TrainingError& e) {
            throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step));
        }
        opt.step();
        if (curve && (step % tcfg.log_every == 0 || step + 1 == tcfg.steps))
            curve->append(step, loss);
    }

    std::ostringstream seeds;
    seeds << "{\"seed\":" << tcfg.seed << ",\"semantic_seed\":" << cfg.semantic_seed << "}";
    return model.to_checkpoint(seeds.str());
}

}  // namespace casvid
