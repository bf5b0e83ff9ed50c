#include "casvid/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "casvid/cascade.hpp"
#include "casvid/checkpoint.hpp"
#include "casvid/config.hpp"
#include "casvid/errors.hpp"
#include "casvid/freqlab.hpp"
#include "casvid/image_io.hpp"
#include "casvid/rng.hpp"
#include "casvid/training.hpp"

namespace fs = std::filesystem;

namespace casvid {

namespace {

struct ConfigCli {
    std::string profile = "toy";
    std::string config_file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> typed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--profile", profile, "named profile: toy | paper");
        cmd->add_option("--config", config_file, "json config file");
        cmd->add_option("--set", sets, "override as key=value (repeatable)")->take_all();
    }

    Config resolve() const {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
        overrides.insert(overrides.end(), typed.begin(), typed.end());
        return load_config(Config::named_profile(profile), config_file, overrides);
    }

    Config resolve_from(const Config& defaults) const {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
        overrides.insert(overrides.end(), typed.begin(), typed.end());
        return load_config(defaults, config_file, overrides);
    }
};

// Registers a typed flag that lands in the config override list when set.
template <typename T>
void config_flag(CLI::App* cmd, ConfigCli& cc, const std::string& flag, const std::string& key,
                 const std::string& help) {
    auto value = std::make_shared<T>();
    cmd->add_option_function<T>(
           flag,
           [&cc, key](const T& v) {
               if constexpr (std::is_same_v<T, std::string>)
                   cc.typed.emplace_back(key, v);
               else
                   cc.typed.emplace_back(key, std::to_string(v));
           },
           help);
}

void write_run_manifest(const std::string& path, const Config& cfg, const nlohmann::json& extra) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(cfg.to_json());
    j["run"] = extra;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write run manifest: " + path);
    out << j.dump(2) << "\n";
}

int cmd_make_data(const ConfigCli& cc, const std::string& out, int clips, std::uint64_t seed) {
    Config cfg = cc.resolve();
    DatasetParams params;
    params.frames = cfg.native_frames;
    params.fps = cfg.native_fps;
    params.native_fps = cfg.native_fps;
    params.height = cfg.refine_height;
    params.width = cfg.refine_width;
    build_dataset(clips, seed, out, params);
    write_run_manifest((fs::path(out) / "run_manifest.json").string(), cfg,
                       {{"command", "make-data"}, {"clips", clips}, {"seed", seed}});
    std::cout << "wrote " << clips << " clips to " << out << "\n";
    return 0;
}

int cmd_train_ae(const ConfigCli& cc, const std::string& data, const std::string& out,
                 std::uint64_t seed_flag, bool seed_set) {
    Config cfg = cc.resolve();
    if (seed_set) cfg.seed = seed_flag;
    ClipDataset dataset(data);

    Autoencoder codec(cfg.codec_config());
    Rng rng(Rng::derive(cfg.seed, "ae.init"));
    codec.init(rng);

    CodecTrainConfig tcfg;
    tcfg.steps = cfg.ae_steps;
    tcfg.batch_frames = cfg.ae_batch;
    tcfg.lr = cfg.ae_lr;
    tcfg.edge_weight = cfg.edge_weight;
    tcfg.seed = cfg.seed;
    tcfg.train_height = cfg.base_height;
    tcfg.train_width = cfg.base_width;

    TrainCurve curve;
    Checkpoint ckpt = train_autoencoder(dataset, codec, tcfg, cfg.to_json(), &curve);
    save_checkpoint(out, ckpt);
    curve.write_csv(out + ".loss.csv");
    write_run_manifest(out + ".manifest.json", cfg,
                       {{"command", "train-ae"}, {"data", data}, {"seed", cfg.seed}});
    std::cout << "autoencoder checkpoint: " << out << "\n";
    return 0;
}

int cmd_train_base(const ConfigCli& cc, const std::string& data, const std::string& codec_path,
                   const std::string& out, std::uint64_t seed_flag, bool seed_set) {
    Config cfg = cc.resolve();
    if (seed_set) cfg.seed = seed_flag;
    ClipDataset dataset(data);

    StageModel model(cfg, "base");
    Rng rng(Rng::derive(cfg.seed, "init"));
    model.init(rng);
    Checkpoint codec_ckpt = load_checkpoint(codec_path);
    require_stage(codec_ckpt, "autoencoder");
    load_registry_prefix(codec_ckpt, model.registry(), "codec.");
    model.codec().set_ready();

    TrainCurve curve;
    Checkpoint ckpt = train_stage(dataset, model, TrainConfig::from(cfg, "base"), &curve);
    save_checkpoint(out, ckpt);
    curve.write_csv(out + ".loss.csv");
    write_run_manifest(out + ".manifest.json", cfg,
                       {{"command", "train-base"}, {"data", data}, {"codec", codec_path}});
    std::cout << "base checkpoint: " << out << "\n";
    return 0;
}

int cmd_train_refine(const ConfigCli& cc, const std::string& data, const std::string& init_path,
                     const std::string& out, std::uint64_t seed_flag, bool seed_set,
                     const std::string& vocab_path) {
    Checkpoint init_ckpt = load_checkpoint(init_path);
    // dims default to the initializing checkpoint so the stages stay compatible
    Config defaults = Config::from_json(init_ckpt.config_json);
    Config cfg = cc.resolve_from(defaults);
    if (seed_set) cfg.seed = seed_flag;
    if (!vocab_path.empty()) {
        cfg.vocab = load_vocabulary(vocab_path);
        cfg.validate();
    }
    ClipDataset dataset(data);

    StageModel model(cfg, "refine");
    Rng rng(Rng::derive(cfg.seed, "init"));
    model.init(rng);
    if (init_ckpt.stage == "base")
        model.init_from_base(init_ckpt);
    else
        model.load(init_ckpt);  // resume

    TrainCurve curve;
    Checkpoint ckpt = train_stage(dataset, model, TrainConfig::from(cfg, "refine"), &curve);
    save_checkpoint(out, ckpt);
    curve.write_csv(out + ".loss.csv");
    write_run_manifest(out + ".manifest.json", cfg,
                       {{"command", "train-refine"}, {"data", data}, {"init", init_path}});
    std::cout << "refine checkpoint: " << out << "\n";
    return 0;
}

void write_video_output(const std::string& out_dir, const VideoTensor& video,
                        const std::string& caption) {
    write_clip_frames(out_dir, video);
    std::ofstream meta(fs::path(out_dir) / "meta");
    meta << "caption = " << caption << "\n";
    meta << "fps = " << video.fps << "\n";
    meta << "frames = " << video.frames() << "\n";
}

int cmd_generate(const std::string& image_path, const std::string& text,
                 const std::string& base_path, const std::string& refine_path,
                 const GenerateParams& params_in, const std::string& out, bool tr_set,
                 bool frames_set, bool fps_set) {
    Checkpoint base_ckpt = load_checkpoint(base_path);
    Checkpoint refine_ckpt = load_checkpoint(refine_path);
    require_stage(base_ckpt, "base");
    require_stage(refine_ckpt, "refine");
    auto base = StageModel::from_checkpoint(base_ckpt);
    auto refine = StageModel::from_checkpoint(refine_ckpt);

    GenerateParams params = params_in;
    const Config& cfg = base->config();
    if (!tr_set) params.t_refine = cfg.t_refine;
    if (!frames_set) params.frames = cfg.sample_frames;
    if (!fps_set) params.fps = cfg.sample_fps;

    VideoTensor image(read_png(image_path), 1);
    GenerateTrace trace;
    VideoTensor video = generate(image, text, *base, *refine, params, &trace);
    write_video_output(out, video, text);

    nlohmann::json extra = {{"command", "generate"}, {"image", image_path},   {"text", text},
                            {"seed", params.seed},   {"tr", params.t_refine}, {"frames", params.frames},
                            {"fps", params.fps},     {"trace", trace.to_string()}};
    write_run_manifest((fs::path(out) / "run_manifest.json").string(), cfg, extra);
    std::cout << "generated " << video.frames() << " frames at " << video.height() << "x"
              << video.width() << " in " << out << "\n";
    return 0;
}

int cmd_refine_only(const std::string& input, const std::string& text,
                    const std::string& refine_path, int tr, int steps, std::uint64_t seed,
                    const std::string& out, bool tr_set, bool steps_set) {
    Checkpoint refine_ckpt = load_checkpoint(refine_path);
    require_stage(refine_ckpt, "refine");
    auto refine = StageModel::from_checkpoint(refine_ckpt);
    const Config& cfg = refine->config();
    if (!tr_set) tr = cfg.t_refine;
    if (!steps_set) steps = cfg.refine_steps;

    int fps = cfg.sample_fps;
    if (fs::exists(fs::path(input) / "meta")) {
        // generated outputs carry only caption/fps/frames in their meta
        std::ifstream meta(fs::path(input) / "meta");
        std::string line;
        while (std::getline(meta, line))
            if (line.rfind("fps = ", 0) == 0) fps = std::stoi(line.substr(6));
    }
    VideoTensor low_res = read_clip_frames(input, fps);

    GenerateTrace trace;
    VideoTensor video = refine_only(low_res, text, *refine, tr, steps, seed, &trace);
    write_video_output(out, video, text);
    write_run_manifest((fs::path(out) / "run_manifest.json").string(), cfg,
                       {{"command", "refine-only"},
                        {"input", input},
                        {"text", text},
                        {"tr", tr},
                        {"steps", steps},
                        {"seed", seed},
                        {"trace", trace.to_string()}});
    std::cout << "refined clip in " << out << "\n";
    return 0;
}

int cmd_analyze(const std::string& before, const std::string& after, int bins,
                const std::string& out) {
    VideoTensor a = read_clip_frames(before, 1);
    VideoTensor b = read_clip_frames(after, 1);
    SpectrumReport report = band_report(a, b, bins);
    write_report_files(report, a, b, out);
    std::cout << "spatial band ratios (B/A, low mid high): " << report.spatial_ratios[0] << " "
              << report.spatial_ratios[1] << " " << report.spatial_ratios[2] << "\n";
    if (a.frames() >= 2)
        std::cout << "temporal band ratios (B/A, low mid high): " << report.temporal_ratios[0]
                  << " " << report.temporal_ratios[1] << " " << report.temporal_ratios[2] << "\n";
    std::cout << "report: " << (fs::path(out) / "report.txt").string() << "\n";
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"cascaded image-to-video latent diffusion, desk scale"};
    app.require_subcommand(1);

    // make-data
    auto* mk = app.add_subcommand("make-data", "render a moving-shapes dataset");
    ConfigCli mk_cc;
    mk_cc.attach(mk);
    std::string mk_out;
    int mk_clips = 500;
    std::uint64_t mk_seed = 0;
    mk->add_option("--out", mk_out, "dataset directory")->required();
    mk->add_option("--clips", mk_clips, "number of clips");
    mk->add_option("--seed", mk_seed, "master seed");

    // train-ae
    auto* ta = app.add_subcommand("train-ae", "train the latent codec");
    ConfigCli ta_cc;
    ta_cc.attach(ta);
    std::string ta_data, ta_out;
    std::uint64_t ta_seed = 0;
    ta->add_option("--data", ta_data, "dataset directory")->required();
    ta->add_option("--out", ta_out, "output checkpoint")->required();
    auto* ta_seed_opt = ta->add_option("--seed", ta_seed, "training seed");
    config_flag<int>(ta, ta_cc, "--steps", "ae_steps", "autoencoder steps");
    config_flag<double>(ta, ta_cc, "--lr", "ae_lr", "autoencoder learning rate");

    // train-base
    auto* tb = app.add_subcommand("train-base", "train the image-conditioned base stage");
    ConfigCli tb_cc;
    tb_cc.attach(tb);
    std::string tb_data, tb_codec, tb_out;
    std::uint64_t tb_seed = 0;
    tb->add_option("--data", tb_data, "dataset directory")->required();
    tb->add_option("--codec", tb_codec, "autoencoder checkpoint")->required();
    tb->add_option("--out", tb_out, "output checkpoint")->required();
    auto* tb_seed_opt = tb->add_option("--seed", tb_seed, "training seed");
    config_flag<int>(tb, tb_cc, "--steps", "steps", "training steps");
    config_flag<double>(tb, tb_cc, "--lr", "lr", "learning rate");
    config_flag<double>(tb, tb_cc, "--gamma", "gamma", "spatial learning-rate factor");
    config_flag<int>(tb, tb_cc, "--batch", "batch_size", "batch size");

    // train-refine
    auto* tr = app.add_subcommand("train-refine", "train the text-conditioned refinement stage");
    ConfigCli tr_cc;
    tr_cc.attach(tr);
    std::string tr_data, tr_init, tr_out, tr_vocab;
    std::uint64_t tr_seed = 0;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--init", tr_init, "base checkpoint to initialize from")->required();
    tr->add_option("--out", tr_out, "output checkpoint")->required();
    tr->add_option("--vocab", tr_vocab, "newline-delimited vocabulary file (token id = line)");
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "training seed");
    config_flag<int>(tr, tr_cc, "--steps", "steps", "training steps");
    config_flag<double>(tr, tr_cc, "--lr", "lr", "learning rate");
    config_flag<double>(tr, tr_cc, "--gamma", "gamma", "spatial learning-rate factor");
    config_flag<int>(tr, tr_cc, "--batch", "batch_size", "batch size");
    config_flag<int>(tr, tr_cc, "--tr", "t_refine", "refinement noise scale cap");

    // generate
    auto* gen = app.add_subcommand("generate", "image + text -> video through both stages");
    std::string g_image, g_text, g_base, g_refine, g_out;
    GenerateParams g_params;
    gen->add_option("--image", g_image, "conditioning image (png)")->required();
    gen->add_option("--text", g_text, "caption for the refinement stage")->required();
    gen->add_option("--base", g_base, "base checkpoint")->required();
    gen->add_option("--refine", g_refine, "refine checkpoint")->required();
    gen->add_option("--out", g_out, "output clip directory")->required();
    auto* g_tr = gen->add_option("--tr", g_params.t_refine, "refinement start noise scale");
    gen->add_option("--seed", g_params.seed, "generation seed");
    auto* g_frames = gen->add_option("--frames", g_params.frames, "frames to generate");
    auto* g_fps = gen->add_option("--fps", g_params.fps, "fps conditioning");
    gen->add_option("--base-steps", g_params.base_steps, "base sampler steps");
    gen->add_option("--refine-steps", g_params.refine_steps, "refine sampler steps");

    // refine-only
    auto* ro = app.add_subcommand("refine-only", "refine an existing clip");
    std::string r_input, r_text, r_refine, r_out;
    int r_tr = 600, r_steps = 30;
    std::uint64_t r_seed = 0;
    ro->add_option("--input", r_input, "input clip directory")->required();
    ro->add_option("--text", r_text, "caption")->required();
    ro->add_option("--refine", r_refine, "refine checkpoint")->required();
    ro->add_option("--out", r_out, "output clip directory")->required();
    auto* r_tr_opt = ro->add_option("--tr", r_tr, "refinement start noise scale");
    auto* r_steps_opt = ro->add_option("--steps", r_steps, "sampler steps");
    ro->add_option("--seed", r_seed, "seed");

    // analyze
    auto* an = app.add_subcommand("analyze", "frequency-band comparison of two clips");
    std::string a_before, a_after, a_out;
    int a_bins = 24;
    an->add_option("--before", a_before, "clip directory A")->required();
    an->add_option("--after", a_after, "clip directory B")->required();
    an->add_option("--out", a_out, "report directory")->required();
    an->add_option("--bins", a_bins, "frequency bins");

    std::vector<const char*> argv;
    argv.push_back("casvid");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (mk->parsed()) return cmd_make_data(mk_cc, mk_out, mk_clips, mk_seed);
        if (ta->parsed()) return cmd_train_ae(ta_cc, ta_data, ta_out, ta_seed, ta_seed_opt->count() > 0);
        if (tb->parsed())
            return cmd_train_base(tb_cc, tb_data, tb_codec, tb_out, tb_seed, tb_seed_opt->count() > 0);
        if (tr->parsed())
            return cmd_train_refine(tr_cc, tr_data, tr_init, tr_out, tr_seed,
                                    tr_seed_opt->count() > 0, tr_vocab);
        if (gen->parsed())
            return cmd_generate(g_image, g_text, g_base, g_refine, g_params, g_out,
                                g_tr->count() > 0, g_frames->count() > 0, g_fps->count() > 0);
        if (ro->parsed())
            return cmd_refine_only(r_input, r_text, r_refine, r_tr, r_steps, r_seed, r_out,
                                   r_tr_opt->count() > 0, r_steps_opt->count() > 0);
        if (an->parsed()) return cmd_analyze(a_before, a_after, a_bins, a_out);
        std::cerr << app.help();
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace casvid
