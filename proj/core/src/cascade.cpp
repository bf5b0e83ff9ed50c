#include "casvid/cascade.hpp"

#include <sstream>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"
#include "casvid/sampler.hpp"

namespace casvid {

void GenerateTrace::note(const std::string& name, const std::vector<int>& shape) {
    shapes.emplace_back(name, shape);
}

std::string GenerateTrace::to_string() const {
    std::ostringstream os;
    for (const auto& [name, shape] : shapes) os << name << " " << shape_str(shape) << "\n";
    return os.str();
}

void require_compatible(const StageModel& base, const StageModel& refine) {
    const Config& b = base.config();
    const Config& r = refine.config();
    if (b.latent_factor != r.latent_factor || b.latent_channels != r.latent_channels)
        throw ConfigError("base and refine checkpoints disagree on the latent codec");
    if (b.refine_height != r.refine_height || b.refine_width != r.refine_width ||
        b.base_height != r.base_height || b.base_width != r.base_width)
        throw ConfigError("base and refine checkpoints disagree on the resolution profile");
    if (b.T != r.T) throw ConfigError("base and refine checkpoints disagree on T");
}

VideoTensor generate(const VideoTensor& image, const std::string& caption, StageModel& base,
                     StageModel& refine, const GenerateParams& params, GenerateTrace* trace) {
    if (base.stage() != "base") throw CheckpointError("generate needs a base-stage checkpoint");
    if (refine.stage() != "refine") throw CheckpointError("generate needs a refine-stage checkpoint");
    require_compatible(base, refine);
    const Config& cfg = base.config();
    if (params.t_refine < 1 || params.t_refine > cfg.T)
        throw ConfigError("t_refine must be in [1, T], got " + std::to_string(params.t_refine));
    if (params.refine_steps > params.t_refine)
        throw ConfigError("refine_steps cannot exceed t_refine");
    const NoiseSchedule sched = cfg.schedule();

    GenerateTrace local;
    GenerateTrace& tr = trace ? *trace : local;

    // conditioning image at base resolution
    Tensor img = image.data;
    if (img.dim(2) != cfg.base_height || img.dim(3) != cfg.base_width)
        img = fit_frame(img, cfg.base_height, cfg.base_width);
    VideoTensor cond_image(img, 1);
    tr.note("cond_image", cond_image.data.shape());

    ConditioningBundle base_bundle = base.build_base_bundle(cond_image, params.fps);
    tr.base_bundle_has_text = base_bundle.text.has_value();

    Rng rng(Rng::derive(params.seed, "generate"));
    const int c = cfg.latent_channels;
    const int bh = cfg.base_height / cfg.latent_factor, bw = cfg.base_width / cfg.latent_factor;
    Tensor init({params.frames, c, bh, bw});
    init.fill_normal(rng);
    if (cfg.detail_injection == "initial_only") {
        for (std::int64_t i = 0; i < base_bundle.detail->data.size(); ++i)
            init[i] += base_bundle.detail->data[i];
    }
    tr.note("base_init_latent", init.shape());

    Tensor base_latent =
        ddim_sample(base, init, base_bundle, make_step_schedule(params.base_steps, cfg.T), sched);
    tr.note("base_latent", base_latent.shape());

    VideoTensor base_video = base.codec().decode(LatentVideo(base_latent, cfg.latent_factor),
                                                 params.fps);
    tr.note("base_video", base_video.data.shape());

    // pixel-space resize to the refinement resolution, then re-encode
    Tensor resized = resize_bilinear(base_video.data, cfg.refine_height, cfg.refine_width);
    tr.note("resized_video", resized.shape());

    ConditioningBundle refine_bundle = refine.build_refine_bundle(caption, params.fps);
    tr.refine_bundle_has_image =
        refine_bundle.semantic.has_value() || refine_bundle.detail.has_value();

    Tensor z_lr = refine.codec().encode_frames(resized, false);
    tr.note("refine_input_latent", z_lr.shape());
    Tensor eps(z_lr.shape());
    eps.fill_normal(rng);
    Tensor z_start = noise_to_level(z_lr, params.t_refine, eps, sched);
    tr.note("refine_noised_latent", z_start.shape());

    Tensor refined = ddim_sample(refine, z_start, refine_bundle,
                                 make_step_schedule(params.refine_steps, cfg.T, params.t_refine),
                                 sched);
    tr.note("refined_latent", refined.shape());

    VideoTensor out = refine.codec().decode(LatentVideo(refined, cfg.latent_factor), params.fps);
    tr.note("output_video", out.data.shape());
    return out;
}

VideoTensor refine_only(const VideoTensor& low_res, const std::string& caption, StageModel& refine,
                        int t_refine, int steps, std::uint64_t seed, GenerateTrace* trace) {
    if (refine.stage() != "refine") throw CheckpointError("refine_only needs a refine-stage checkpoint");
    const Config& cfg = refine.config();
    if (t_refine < 1 || t_refine > cfg.T)
        throw ConfigError("t_refine must be in [1, T], got " + std::to_string(t_refine));
    if (steps < 1 || steps > t_refine)
        throw ConfigError("refine steps must be in [1, t_refine]");
    const NoiseSchedule sched = cfg.schedule();

    GenerateTrace local;
    GenerateTrace& tr = trace ? *trace : local;

    Tensor resized = low_res.data;
    if (resized.dim(2) != cfg.refine_height || resized.dim(3) != cfg.refine_width)
        resized = fit_frame(resized, cfg.refine_height, cfg.refine_width);
    tr.note("refine_input_video", resized.shape());

    ConditioningBundle bundle = refine.build_refine_bundle(caption, low_res.fps);
    tr.refine_bundle_has_image = bundle.semantic.has_value() || bundle.detail.has_value();

    Tensor z = refine.codec().encode_frames(resized, false);
    Rng rng(Rng::derive(seed, "refine_only"));
    Tensor eps(z.shape());
    eps.fill_normal(rng);
    Tensor z_start = noise_to_level(z, t_refine, eps, sched);
    tr.note("refine_noised_latent", z_start.shape());

    Tensor refined =
        ddim_sample(refine, z_start, bundle, make_step_schedule(steps, cfg.T, t_refine), sched);
    VideoTensor out = refine.codec().decode(LatentVideo(refined, cfg.latent_factor), low_res.fps);
    tr.note("output_video", out.data.shape());
    return out;
}

}  // namespace casvid
