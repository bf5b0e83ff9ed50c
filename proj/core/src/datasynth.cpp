#include "casvid/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "casvid/errors.hpp"
#include "casvid/image_io.hpp"
#include "casvid/rng.hpp"

namespace fs = std::filesystem;

namespace casvid {

/*============================ scene description ===========================*/

const char* to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::square: return "square";
        case ShapeKind::circle: return "circle";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* to_string(MotionKind m) {
    switch (m) {
        case MotionKind::left: return "left";
        case MotionKind::right: return "right";
        case MotionKind::up: return "up";
        case MotionKind::down: return "down";
        case MotionKind::rotate: return "rotate";
        case MotionKind::grow: return "grow";
    }
    return "?";
}

ShapeKind shape_from_string(const std::string& s) {
    if (s == "square") return ShapeKind::square;
    if (s == "circle") return ShapeKind::circle;
    if (s == "triangle") return ShapeKind::triangle;
    throw DataError("unknown shape: " + s);
}

MotionKind motion_from_string(const std::string& s) {
    if (s == "left") return MotionKind::left;
    if (s == "right") return MotionKind::right;
    if (s == "up") return MotionKind::up;
    if (s == "down") return MotionKind::down;
    if (s == "rotate") return MotionKind::rotate;
    if (s == "grow") return MotionKind::grow;
    throw DataError("unknown motion: " + s);
}

const std::vector<PaletteColor>& palette() {
    static const std::vector<PaletteColor> kPalette = {
        {"red", 1.0, -0.7, -0.7},    {"green", -0.7, 0.9, -0.7}, {"blue", -0.7, -0.6, 1.0},
        {"yellow", 1.0, 0.9, -0.8},  {"cyan", -0.8, 0.9, 1.0},   {"magenta", 1.0, -0.7, 0.9},
        {"orange", 1.0, 0.25, -0.8}, {"white", 1.0, 1.0, 1.0},
    };
    return kPalette;
}

const PaletteColor& palette_color(const std::string& name) {
    for (const auto& c : palette())
        if (name == c.name) return c;
    if (name == "black") {
        static const PaletteColor kBlack{"black", -1.0, -1.0, -1.0};
        return kBlack;
    }
    if (name == "gray") {
        static const PaletteColor kGray{"gray", -0.2, -0.2, -0.2};
        return kGray;
    }
    throw DataError("unknown color: " + name);
}

std::string SceneSpec::caption() const {
    std::string out = color;
    out += " ";
    out += to_string(shape);
    switch (motion) {
        case MotionKind::left: out += " moving left"; break;
        case MotionKind::right: out += " moving right"; break;
        case MotionKind::up: out += " moving up"; break;
        case MotionKind::down: out += " moving down"; break;
        case MotionKind::rotate: out += " rotating"; break;
        case MotionKind::grow: out += " growing"; break;
    }
    return out;
}

SceneSpec parse_caption(const std::string& caption) {
    std::istringstream is(caption);
    std::vector<std::string> words;
    std::string w;
    while (is >> w) words.push_back(w);
    if (words.size() < 3) throw DataError("caption too short: '" + caption + "'");
    SceneSpec spec;
    spec.color = words[0];
    palette_color(spec.color);  // validates
    spec.shape = shape_from_string(words[1]);
    if (words[2] == "moving" && words.size() == 4) {
        spec.motion = motion_from_string(words[3]);
        if (spec.motion == MotionKind::rotate || spec.motion == MotionKind::grow)
            throw DataError("bad caption grammar: '" + caption + "'");
    } else if (words[2] == "rotating" && words.size() == 3) {
        spec.motion = MotionKind::rotate;
    } else if (words[2] == "growing" && words.size() == 3) {
        spec.motion = MotionKind::grow;
    } else {
        throw DataError("bad caption grammar: '" + caption + "'");
    }
    return spec;
}

std::vector<std::string> caption_vocabulary() {
    std::set<std::string> words;
    for (const auto& c : palette()) words.insert(c.name);
    for (ShapeKind s : {ShapeKind::square, ShapeKind::circle, ShapeKind::triangle})
        words.insert(to_string(s));
    words.insert({"moving", "left", "right", "up", "down", "rotating", "growing"});
    return {words.begin(), words.end()};
}

/*================================ rendering ===============================*/

namespace {

struct FrameState {
    double cx, cy, size, angle;
};

FrameState state_at(const SceneSpec& spec, int frame, double step_scale) {
    // step_scale = native_fps / fps
    FrameState st{spec.x0, spec.y0, spec.size, spec.angle0};
    const double t = frame * step_scale;
    switch (spec.motion) {
        case MotionKind::left: st.cx -= spec.speed * t; break;
        case MotionKind::right: st.cx += spec.speed * t; break;
        case MotionKind::up: st.cy -= spec.speed * t; break;
        case MotionKind::down: st.cy += spec.speed * t; break;
        case MotionKind::rotate: st.angle += 0.1 * spec.speed * t; break;
        case MotionKind::grow: st.size += 0.5 * spec.speed * t; break;
    }
    return st;
}

// -1 outside even when grown by margin, +1 inside even when shrunk by
// margin, 0 near the edge (needs supersampling).
int classify_point(ShapeKind kind, double px, double py, const FrameState& st, double margin) {
    const double dx = px - st.cx, dy = py - st.cy;
    const double d = std::sqrt(dx * dx + dy * dy);
    // erosion moves the boundary inward by `margin`; for the triangle the
    // circumradius shrinks twice as fast as the inradius
    const double scale = kind == ShapeKind::triangle ? 2.0 : 1.0;
    const double shrink = st.size - scale * margin;
    const double grow = st.size + scale * margin;
    if (kind == ShapeKind::circle) {
        if (d <= shrink) return 1;
        if (d >= grow) return -1;
        return 0;
    }
    // conservative radial bounds: inradius and circumradius
    const double inr = kind == ShapeKind::square ? st.size : st.size * 0.5;
    const double outr = kind == ShapeKind::square ? st.size * 1.4142135623730951 : st.size;
    if (d <= inr - margin) return 1;
    if (d >= outr + margin) return -1;
    return 0;
}

bool point_in_shape(ShapeKind kind, double px, double py, const FrameState& st) {
    // into shape frame
    const double dx = px - st.cx, dy = py - st.cy;
    const double ca = std::cos(-st.angle), sa = std::sin(-st.angle);
    const double x = dx * ca - dy * sa, y = dx * sa + dy * ca;
    switch (kind) {
        case ShapeKind::square:
            return std::abs(x) <= st.size && std::abs(y) <= st.size;
        case ShapeKind::circle:
            return x * x + y * y <= st.size * st.size;
        case ShapeKind::triangle: {
            // equilateral, apex up, circumradius = size
            const double r = st.size;
            const double ax = 0.0, ay = -r;
            const double bx = r * 0.8660254037844386, by = r * 0.5;
            const double cx2 = -bx, cy2 = by;
            auto side = [&](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
            };
            const double s1 = side(ax, ay, bx, by), s2 = side(bx, by, cx2, cy2),
                         s3 = side(cx2, cy2, ax, ay);
            return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
        }
    }
    return false;
}

// Shape extent needed for the in-frame trajectory check: circumradius style
// bound that covers rotation.
double bounding_radius(ShapeKind kind, double size) {
    switch (kind) {
        case ShapeKind::square: return size * 1.4142135623730951;
        case ShapeKind::circle: return size;
        case ShapeKind::triangle: return size;
    }
    return size;
}

}  // namespace

VideoTensor render_clip(const SceneSpec& spec, int frames, int fps, int H, int W, int native_fps) {
    static const std::vector<int> kFrameCounts = {1, 4, 8, 16, 32};
    if (std::find(kFrameCounts.begin(), kFrameCounts.end(), frames) == kFrameCounts.end())
        throw DataError("unsupported frame count: " + std::to_string(frames));
    if (fps < 1 || native_fps < 1) throw DataError("fps must be positive");
    if (spec.size <= 0.0) throw DataError("scene rejected: non-positive size");

    const double step_scale = static_cast<double>(native_fps) / fps;
    for (int f = 0; f < frames; ++f) {
        const FrameState st = state_at(spec, f, step_scale);
        const double r = bounding_radius(spec.shape, st.size);
        if (st.cx - r < 0 || st.cx + r > W || st.cy - r < 0 || st.cy + r > H) {
            std::ostringstream os;
            os << "scene rejected: trajectory escapes frame at t=" << f << " (center " << st.cx
               << "," << st.cy << ", radius " << r << ", frame " << W << "x" << H << ")";
            throw DataError(os.str());
        }
    }

    const PaletteColor& fg = palette_color(spec.color);
    const PaletteColor& bg = palette_color(spec.background);
    const double fg_rgb[3] = {fg.r, fg.g, fg.b};
    const double bg_rgb[3] = {bg.r, bg.g, bg.b};

    Tensor data({frames, 3, H, W});
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    constexpr int SS = 4;  // supersampling grid per axis
    for (int f = 0; f < frames; ++f) {
        const FrameState st = state_at(spec, f, step_scale);
        double* base = data.data() + static_cast<std::int64_t>(f) * 3 * plane;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double cov;
                const int cls = classify_point(spec.shape, x + 0.5, y + 0.5, st, 0.8);
                if (cls != 0) {
                    cov = cls > 0 ? 1.0 : 0.0;
                } else {
                    int hits = 0;
                    for (int sy = 0; sy < SS; ++sy)
                        for (int sx = 0; sx < SS; ++sx)
                            if (point_in_shape(spec.shape, x + (sx + 0.5) / SS, y + (sy + 0.5) / SS, st))
                                ++hits;
                    cov = hits / static_cast<double>(SS * SS);
                }
                for (int c = 0; c < 3; ++c)
                    base[c * plane + y * W + x] = bg_rgb[c] * (1.0 - cov) + fg_rgb[c] * cov;
            }
        }
    }
    return VideoTensor(std::move(data), fps);
}

SceneSpec random_scene(Rng& rng, int frames, int fps, int H, int W, int native_fps) {
    const auto& colors = palette();
    for (int attempt = 0; attempt < 256; ++attempt) {
        SceneSpec spec;
        spec.shape = static_cast<ShapeKind>(rng.uniform_int(0, 2));
        spec.color = colors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(colors.size()) - 1))].name;
        // rotating circles look static; resample the motion for circles
        do {
            spec.motion = static_cast<MotionKind>(rng.uniform_int(0, 5));
        } while (spec.shape == ShapeKind::circle && spec.motion == MotionKind::rotate);
        spec.background = rng.uniform() < 0.5 ? "black" : "gray";
        if (spec.background == spec.color) spec.color = "white";
        spec.speed = 0.5 + rng.uniform() * 1.5;
        spec.size = H / 10.0 + rng.uniform() * (H / 6.0);
        spec.angle0 = rng.uniform() * 0.5;
        spec.x0 = W * (0.25 + 0.5 * rng.uniform());
        spec.y0 = H * (0.25 + 0.5 * rng.uniform());

        const double step_scale = static_cast<double>(native_fps) / fps;
        bool ok = true;
        for (int f = 0; f < frames && ok; ++f) {
            const FrameState st = state_at(spec, f, step_scale);
            const double r = bounding_radius(spec.shape, st.size);
            ok = st.cx - r >= 1 && st.cx + r <= W - 1 && st.cy - r >= 1 && st.cy + r <= H - 1;
        }
        if (ok) return spec;
    }
    throw DataError("failed to sample an in-frame scene");
}

/*=========================== frame/fps sampling ===========================*/

void SupplyRatios::validate() const {
    if (frame_set.empty() || frame_set.size() != frame_ratios.size())
        throw ConfigError("frame_set and frame_ratios must be non-empty and equal length");
    if (fps_set.empty() || fps_set.size() != fps_ratios.size())
        throw ConfigError("fps_set and fps_ratios must be non-empty and equal length");
    for (double r : frame_ratios)
        if (r < 0) throw ConfigError("frame_ratios must be non-negative");
    for (double r : fps_ratios)
        if (r < 0) throw ConfigError("fps_ratios must be non-negative");
}

namespace {

int draw_weighted(const std::vector<int>& values, const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < values.size(); ++i) {
        u -= weights[i];
        if (u < 0.0) return values[i];
    }
    return values.back();
}

}  // namespace

std::pair<int, int> sample_frames_fps(const SupplyRatios& ratios, Rng& rng) {
    ratios.validate();
    const int fps = draw_weighted(ratios.fps_set, ratios.fps_ratios, rng);
    const int frames = draw_weighted(ratios.frame_set, ratios.frame_ratios, rng);
    if (fps == 1) return {1, 1};  // static image convention
    return {frames, fps};
}

/*=============================== center crop ==============================*/

Tensor center_crop(const Tensor& t, int target_h, int target_w) {
    if (t.rank() < 2) throw DimError("center_crop needs at least 2 axes");
    const int H = t.dim(t.rank() - 2), W = t.dim(t.rank() - 1);
    if (target_h > H || target_w > W)
        throw DataError("crop target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                        " larger than source " + std::to_string(H) + "x" + std::to_string(W));
    if (target_h == H && target_w == W) return t;
    const int off_y = (H - target_h) / 2;
    const int off_x = (W - target_w) / 2;

    std::vector<int> oshape = t.shape();
    oshape[oshape.size() - 2] = target_h;
    oshape[oshape.size() - 1] = target_w;
    Tensor out(oshape);
    const std::int64_t planes = t.size() / (static_cast<std::int64_t>(H) * W);
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* src = t.data() + p * H * W;
        double* dst = out.data() + p * target_h * target_w;
        for (int y = 0; y < target_h; ++y)
            std::copy(src + (y + off_y) * W + off_x, src + (y + off_y) * W + off_x + target_w,
                      dst + static_cast<std::int64_t>(y) * target_w);
    }
    return out;
}

/*============================ dataset on disk =============================*/

namespace {

std::string clip_dirname(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05d", index);
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_clip_meta(const std::string& clip_dir, const ClipRecord& rec) {
    std::ofstream out(fs::path(clip_dir) / "meta");
    if (!out) throw DataError("cannot write meta in " + clip_dir);
    out << "caption = " << rec.caption << "\n";
    out << "fps = " << rec.fps << "\n";
    out << "frames = " << rec.frames << "\n";
    out << "shape = " << to_string(rec.spec.shape) << "\n";
    out << "color = " << rec.spec.color << "\n";
    out << "motion = " << to_string(rec.spec.motion) << "\n";
    out << "speed = " << format_double(rec.spec.speed) << "\n";
    out << "background = " << rec.spec.background << "\n";
    out << "seed = " << rec.spec.seed << "\n";
    out << "x0 = " << format_double(rec.spec.x0) << "\n";
    out << "y0 = " << format_double(rec.spec.y0) << "\n";
    out << "size = " << format_double(rec.spec.size) << "\n";
    out << "angle0 = " << format_double(rec.spec.angle0) << "\n";
}

ClipRecord read_clip_meta(const std::string& clip_dir) {
    std::ifstream in(fs::path(clip_dir) / "meta");
    if (!in) throw DataError("cannot read meta in " + clip_dir);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(std::string("meta missing key '") + key + "' in " + clip_dir);
        return it->second;
    };
    ClipRecord rec;
    rec.caption = need("caption");
    rec.fps = std::stoi(need("fps"));
    rec.frames = std::stoi(need("frames"));
    rec.spec.shape = shape_from_string(need("shape"));
    rec.spec.color = need("color");
    rec.spec.motion = motion_from_string(need("motion"));
    rec.spec.speed = std::stod(need("speed"));
    rec.spec.background = need("background");
    rec.spec.seed = std::stoull(need("seed"));
    rec.spec.x0 = std::stod(need("x0"));
    rec.spec.y0 = std::stod(need("y0"));
    rec.spec.size = std::stod(need("size"));
    rec.spec.angle0 = std::stod(need("angle0"));
    return rec;
}

std::string build_dataset(int n, std::uint64_t seed, const std::string& out_dir,
                          const DatasetParams& params) {
    if (n < 0) throw DataError("clip count must be >= 0");
    fs::create_directories(out_dir);

    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        SceneSpec spec =
            random_scene(rng, params.frames, params.fps, params.height, params.width, params.native_fps);
        spec.seed = Rng::derive(seed, static_cast<std::uint64_t>(i));
        VideoTensor clip = render_clip(spec, params.frames, params.fps, params.height, params.width,
                                       params.native_fps);
        const std::string dir = (fs::path(out_dir) / clip_dirname(i)).string();
        write_clip_frames(dir, clip);
        ClipRecord rec{clip_dirname(i), spec.caption(), params.fps, params.frames, spec};
        write_clip_meta(dir, rec);
    }

    const std::string manifest = (fs::path(out_dir) / "manifest").string();
    std::ofstream mf(manifest);
    if (!mf) throw DataError("cannot write manifest: " + manifest);
    for (int i = 0; i < n; ++i) mf << clip_dirname(i) << "\n";

    std::ofstream vf(fs::path(out_dir) / "vocab.txt");
    for (const auto& word : caption_vocabulary()) vf << word << "\n";
    return manifest;
}

ClipDataset::ClipDataset(const std::string& root) : root_(root) {
    std::ifstream mf(fs::path(root) / "manifest");
    if (!mf) throw DataError("cannot open manifest in " + root);
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        records_.push_back(read_clip_meta((fs::path(root) / line).string()));
        records_.back().rel_dir = line;
    }
}

Tensor ClipDataset::load_frame(std::size_t clip, int frame) const {
    const ClipRecord& rec = records_.at(clip);
    if (frame < 0 || frame >= rec.frames) throw DataError("frame index out of range");
    return read_png((fs::path(root_) / rec.rel_dir / frame_filename(frame)).string());
}

VideoTensor ClipDataset::load_clip(std::size_t clip) const {
    const ClipRecord& rec = records_.at(clip);
    return read_clip_frames((fs::path(root_) / rec.rel_dir).string(), rec.fps);
}

}  // namespace casvid
