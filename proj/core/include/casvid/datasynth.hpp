#pragma once

#include <string>
#include <vector>

#include "casvid/tensor.hpp"
#include "casvid/video.hpp"

namespace casvid {

class Rng;

/*============================ scene description ===========================*/

enum class ShapeKind { square, circle, triangle };
enum class MotionKind { left, right, up, down, rotate, grow };

const char* to_string(ShapeKind s);
const char* to_string(MotionKind m);
ShapeKind shape_from_string(const std::string& s);
MotionKind motion_from_string(const std::string& s);

// Named palette used for both shapes and backgrounds.
struct PaletteColor {
    const char* name;
    double r, g, b;
};
const std::vector<PaletteColor>& palette();
const PaletteColor& palette_color(const std::string& name);

struct SceneSpec {
    ShapeKind shape = ShapeKind::square;
    std::string color = "red";
    MotionKind motion = MotionKind::right;
    double speed = 1.0;  // px per frame at the native fps (translations)
    std::string background = "black";
    std::uint64_t seed = 0;
    // placement, in pixels of the render target
    double x0 = 0.0, y0 = 0.0;  // shape center at frame 0
    double size = 8.0;          // half-extent / radius
    double angle0 = 0.0;        // radians

    std::string caption() const;
};

// Inverts caption() over the template grammar "<color> <shape> <motion...>".
SceneSpec parse_caption(const std::string& caption);

// All words the caption grammar can emit, sorted and deduplicated; the text
// vocabulary is built from this list.
std::vector<std::string> caption_vocabulary();

/*================================ rendering ===============================*/

// Deterministic rasterization (4x4 supersampled coverage). fps rescales the
// per-frame displacement so physical speed is fps-invariant:
// displacement/frame = speed * native_fps / fps.
VideoTensor render_clip(const SceneSpec& spec, int frames, int fps, int H, int W,
                        int native_fps = 4);

// Uniformly samples a renderable scene whose whole trajectory stays in frame.
SceneSpec random_scene(Rng& rng, int frames, int fps, int H, int W, int native_fps = 4);

/*=========================== frame/fps sampling ===========================*/

struct SupplyRatios {
    std::vector<int> frame_set;        // e.g. {1, 8, 16, 32}
    std::vector<double> frame_ratios;  // e.g. {1, 1, 1, 5}
    std::vector<int> fps_set;          // e.g. {1, 4, 8, 16}
    std::vector<double> fps_ratios;    // e.g. {1, 2, 4, 1}

    void validate() const;
};

// Draws (frame count, fps) with the configured supply ratios; fps == 1
// forces a single frame (static image).
std::pair<int, int> sample_frames_fps(const SupplyRatios& ratios, Rng& rng);

/*=============================== center crop ==============================*/

// Spatially centered crop of the last two axes; odd remainders leave the
// extra pixel on the bottom/right.
Tensor center_crop(const Tensor& t, int target_h, int target_w);

/*============================ dataset on disk =============================*/

struct ClipRecord {
    std::string rel_dir;  // relative to the dataset root
    std::string caption;
    int fps = 1;
    int frames = 0;
    SceneSpec spec;
};

struct DatasetParams {
    int frames = 16;
    int fps = 4;
    int native_fps = 4;
    int height = 128;
    int width = 128;
};

// Renders n clips as frame folders plus per-clip metadata and a manifest of
// relative clip paths. Per-clip seeds are derived from (seed, index), so any
// clip can be regenerated alone. Also writes vocab.txt.
std::string build_dataset(int n, std::uint64_t seed, const std::string& out_dir,
                          const DatasetParams& params);

ClipRecord read_clip_meta(const std::string& clip_dir);
void write_clip_meta(const std::string& clip_dir, const ClipRecord& rec);

// Manifest-backed dataset with lazy frame loading.
class ClipDataset {
public:
    ClipDataset() = default;
    explicit ClipDataset(const std::string& root);

    std::size_t size() const { return records_.size(); }
    const ClipRecord& record(std::size_t i) const { return records_[i]; }
    const std::string& root() const { return root_; }

    Tensor load_frame(std::size_t clip, int frame) const;  // (1,3,H,W)
    VideoTensor load_clip(std::size_t clip) const;

private:
    std::string root_;
    std::vector<ClipRecord> records_;
};

}  // namespace casvid
