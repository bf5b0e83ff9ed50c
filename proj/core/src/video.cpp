#include "casvid/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "casvid/errors.hpp"

namespace casvid {

void clamp_unit(Tensor& t) {
    double* d = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) d[i] = std::clamp(d[i], -1.0, 1.0);
}

VideoTensor::VideoTensor(Tensor t, int fps_) : data(std::move(t)), fps(fps_) {
    if (data.rank() != 4 || data.dim(1) != 3)
        throw DimError("VideoTensor expects (F,3,H,W), got " + shape_str(data.shape()));
    if (data.dim(0) < 1) throw DimError("VideoTensor needs at least one frame");
    if (fps < 1) throw DimError("VideoTensor fps must be positive");
    clamp_unit(data);
}

VideoTensor VideoTensor::frame(int f) const {
    if (f < 0 || f >= frames()) throw DimError("frame index out of range");
    const int C = channels(), H = height(), W = width();
    Tensor out({1, C, H, W});
    std::memcpy(out.data(), data.data() + static_cast<std::int64_t>(f) * C * H * W,
                sizeof(double) * static_cast<std::size_t>(C) * H * W);
    return VideoTensor(std::move(out), fps);
}

LatentVideo::LatentVideo(Tensor t, int factor) : data(std::move(t)), downsample_factor(factor) {
    if (data.rank() != 4) throw DimError("LatentVideo expects (F,c,h,w), got " + shape_str(data.shape()));
}

Tensor luminance(const Tensor& video, int frame) {
    if (video.rank() != 4 || video.dim(1) != 3)
        throw DimError("luminance expects (F,3,H,W), got " + shape_str(video.shape()));
    const int H = video.dim(2), W = video.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const double* r = video.data() + (static_cast<std::int64_t>(frame) * 3 + 0) * plane;
    const double* g = video.data() + (static_cast<std::int64_t>(frame) * 3 + 1) * plane;
    const double* b = video.data() + (static_cast<std::int64_t>(frame) * 3 + 2) * plane;
    Tensor out({H, W});
    double* o = out.data();
    for (std::int64_t i = 0; i < plane; ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

namespace {

struct FilterTap {
    int start;
    std::vector<double> weights;
};

// Triangle filter taps for one output coordinate axis. support scales with
// the inverse zoom on downscale so high frequencies are averaged away.
std::vector<FilterTap> build_taps(int in_size, int out_size) {
    std::vector<FilterTap> taps(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    const double support = std::max(1.0, scale);
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        int lo = static_cast<int>(std::ceil(center - support));
        int hi = static_cast<int>(std::floor(center + support));
        lo = std::max(lo, 0);
        hi = std::min(hi, in_size - 1);
        FilterTap tap;
        tap.start = lo;
        double total = 0.0;
        for (int i = lo; i <= hi; ++i) {
            double w = 1.0 - std::abs(i - center) / support;
            w = std::max(w, 0.0);
            tap.weights.push_back(w);
            total += w;
        }
        if (total <= 0.0) {  // degenerate tap, fall back to nearest
            tap.weights.assign(tap.weights.size(), 0.0);
            int nearest = std::clamp(static_cast<int>(std::lround(center)), lo, hi);
            tap.weights[static_cast<std::size_t>(nearest - lo)] = 1.0;
            total = 1.0;
        }
        for (auto& w : tap.weights) w /= total;
        taps[static_cast<std::size_t>(o)] = std::move(tap);
    }
    return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& video, int out_h, int out_w) {
    if (video.rank() != 4) throw DimError("resize expects (F,C,H,W), got " + shape_str(video.shape()));
    const int F = video.dim(0), C = video.dim(1), H = video.dim(2), W = video.dim(3);
    if (out_h < 1 || out_w < 1) throw DimError("resize target must be positive");
    if (out_h == H && out_w == W) return video;

    const auto col_taps = build_taps(W, out_w);
    const auto row_taps = build_taps(H, out_h);

    // Horizontal pass, then vertical.
    Tensor mid({F, C, H, out_w});
    for (int n = 0; n < F * C; ++n) {
        const double* src = video.data() + static_cast<std::int64_t>(n) * H * W;
        double* dst = mid.data() + static_cast<std::int64_t>(n) * H * out_w;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < out_w; ++x) {
                const FilterTap& tap = col_taps[static_cast<std::size_t>(x)];
                double acc = 0.0;
                for (std::size_t k = 0; k < tap.weights.size(); ++k)
                    acc += tap.weights[k] * src[y * W + tap.start + static_cast<int>(k)];
                dst[y * out_w + x] = acc;
            }
        }
    }
    Tensor out({F, C, out_h, out_w});
    for (int n = 0; n < F * C; ++n) {
        const double* src = mid.data() + static_cast<std::int64_t>(n) * H * out_w;
        double* dst = out.data() + static_cast<std::int64_t>(n) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const FilterTap& tap = row_taps[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < tap.weights.size(); ++k)
                    acc += tap.weights[k] * src[(tap.start + static_cast<int>(k)) * out_w + x];
                dst[y * out_w + x] = acc;
            }
        }
    }
    return out;
}

double psnr(const Tensor& a, const Tensor& b) {
    double mse = mean_squared_error(a, b);
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);
}

}  // namespace casvid
