#include "casvid/freqlab.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "casvid/errors.hpp"
#include "casvid/image_io.hpp"

namespace fs = std::filesystem;

namespace casvid {

namespace {

// Full complex 2D DFT of a real (H, W) array. FFTW plans are not reused
// across calls; diagnostics are not on a hot path.
std::vector<std::complex<double>> dft2(const double* x, int H, int W) {
    std::vector<std::complex<double>> in(static_cast<std::size_t>(H) * W),
        out(static_cast<std::size_t>(H) * W);
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = x[i];
    fftw_plan plan = fftw_plan_dft_2d(H, W, reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                      FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

std::vector<std::complex<double>> dft1(const std::vector<std::complex<double>>& x) {
    std::vector<std::complex<double>> in = x, out(x.size());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(x.size()),
                                      reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                      FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

// Signed frequency index: k in [0,N) -> k or k-N, whichever is closer to 0.
int signed_freq(int k, int n) { return k <= n / 2 ? k : k - n; }

int radial_bin(double r, int bins) {
    const int b = static_cast<int>(r * bins);
    return std::min(b, bins - 1);
}

double safe_ratio(double a, double b) { return a == b ? 1.0 : b / a; }

}  // namespace

Tensor spatial_spectrogram(const Tensor& frame) {
    if (frame.rank() != 2) throw DimError("spectrogram expects (H,W), got " + shape_str(frame.shape()));
    const int H = frame.dim(0), W = frame.dim(1);
    auto X = dft2(frame.data(), H, W);
    Tensor out({H, W});
    // fftshift: move DC to the center
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int sy = (y + H / 2) % H, sx = (x + W / 2) % W;
            out[static_cast<std::int64_t>(sy) * W + sx] =
                std::log1p(std::abs(X[static_cast<std::size_t>(y) * W + x]));
        }
    }
    return out;
}

double RadialDistribution::total_power() const {
    double s = 0.0;
    for (std::size_t i = 0; i < mean_power.size(); ++i) s += mean_power[i] * counts[i];
    return s;
}

RadialDistribution radial_spatial_distribution(const VideoTensor& video, int bins) {
    if (bins < 3) throw DimError("radial distribution needs bins >= 3");
    const int F = video.frames(), H = video.height(), W = video.width();
    RadialDistribution dist;
    dist.mean_power.assign(static_cast<std::size_t>(bins), 0.0);
    dist.counts.assign(static_cast<std::size_t>(bins), 0.0);

    std::vector<double> sums(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    const double norm = 1.0 / (static_cast<double>(H) * W);
    for (int f = 0; f < F; ++f) {
        Tensor luma = luminance(video.data, f);
        auto X = dft2(luma.data(), H, W);
        for (int y = 0; y < H; ++y) {
            const double fy = static_cast<double>(signed_freq(y, H)) / (H / 2.0);
            for (int x = 0; x < W; ++x) {
                const double fx = static_cast<double>(signed_freq(x, W)) / (W / 2.0);
                const double r = std::sqrt(fx * fx + fy * fy);
                const double p = std::norm(X[static_cast<std::size_t>(y) * W + x]) * norm;
                const int b = radial_bin(r, bins);
                sums[static_cast<std::size_t>(b)] += p;
                counts[static_cast<std::size_t>(b)] += 1.0;
            }
        }
    }
    // sums and counts both accumulate over frames, so sums/counts is the
    // frame-averaged per-point power; counts are reported per frame.
    for (int b = 0; b < bins; ++b) {
        dist.counts[static_cast<std::size_t>(b)] = counts[static_cast<std::size_t>(b)] / F;
        dist.mean_power[static_cast<std::size_t>(b)] =
            counts[static_cast<std::size_t>(b)] > 0
                ? sums[static_cast<std::size_t>(b)] / counts[static_cast<std::size_t>(b)]
                : 0.0;
    }
    return dist;
}

Tensor temporal_section(const VideoTensor& video, int row) {
    if (row < 0 || row >= video.height())
        throw UsageError("temporal section row " + std::to_string(row) + " out of [0," +
                         std::to_string(video.height()) + ")");
    const int F = video.frames(), W = video.width();
    Tensor out({F, W});
    for (int f = 0; f < F; ++f) {
        Tensor luma = luminance(video.data, f);
        std::copy(luma.data() + static_cast<std::int64_t>(row) * W,
                  luma.data() + static_cast<std::int64_t>(row + 1) * W,
                  out.data() + static_cast<std::int64_t>(f) * W);
    }
    return out;
}

double TemporalDistribution::total_power() const {
    double s = 0.0;
    for (std::size_t i = 0; i < mean_power.size(); ++i) s += mean_power[i] * counts[i];
    return s;
}

TemporalDistribution temporal_distribution(const VideoTensor& video, int bins) {
    const int F = video.frames();
    if (F < 2) throw UsageError("temporal distribution needs at least 2 frames");
    if (bins < 1) throw DimError("temporal distribution needs bins >= 1");
    const int H = video.height(), W = video.width();
    const int nyq = F / 2;

    TemporalDistribution dist;
    dist.mean_power.assign(static_cast<std::size_t>(bins), 0.0);
    dist.counts.assign(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> sums(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);

    std::vector<Tensor> luma(static_cast<std::size_t>(F));
    for (int f = 0; f < F; ++f) luma[static_cast<std::size_t>(f)] = luminance(video.data, f);

    std::vector<std::complex<double>> series(static_cast<std::size_t>(F));
    const double norm = 1.0 / F;
    for (int p = 0; p < H * W; ++p) {
        for (int f = 0; f < F; ++f) series[static_cast<std::size_t>(f)] = luma[static_cast<std::size_t>(f)][p];
        auto X = dft1(series);
        // non-negative frequencies only; fold the conjugate half in
        for (int k = 0; k <= nyq; ++k) {
            double pw = std::norm(X[static_cast<std::size_t>(k)]) * norm;
            if (k != 0 && !(F % 2 == 0 && k == nyq)) pw += std::norm(X[static_cast<std::size_t>(F - k)]) * norm;
            const double fr = nyq > 0 ? static_cast<double>(k) / nyq : 0.0;
            const int b = radial_bin(fr, bins);
            sums[static_cast<std::size_t>(b)] += pw;
            if (p == 0) counts[static_cast<std::size_t>(b)] += 1.0;
        }
    }
    for (int b = 0; b < bins; ++b) {
        dist.counts[static_cast<std::size_t>(b)] = counts[static_cast<std::size_t>(b)];
        dist.mean_power[static_cast<std::size_t>(b)] =
            counts[static_cast<std::size_t>(b)] > 0
                ? sums[static_cast<std::size_t>(b)] / (counts[static_cast<std::size_t>(b)] * H * W)
                : 0.0;
    }
    return dist;
}

/*=============================== band report ===============================*/

namespace {

BandTriple spatial_bands(const VideoTensor& video) {
    const int F = video.frames(), H = video.height(), W = video.width();
    BandTriple bands{0.0, 0.0, 0.0};
    const double norm = 1.0 / (static_cast<double>(H) * W);
    for (int f = 0; f < F; ++f) {
        Tensor luma = luminance(video.data, f);
        auto X = dft2(luma.data(), H, W);
        for (int y = 0; y < H; ++y) {
            const double fy = static_cast<double>(signed_freq(y, H)) / (H / 2.0);
            for (int x = 0; x < W; ++x) {
                const double fx = static_cast<double>(signed_freq(x, W)) / (W / 2.0);
                const double r = std::sqrt(fx * fx + fy * fy);
                const int band = std::min(static_cast<int>(r * 3.0), 2);
                bands[static_cast<std::size_t>(band)] +=
                    std::norm(X[static_cast<std::size_t>(y) * W + x]) * norm;
            }
        }
    }
    for (auto& b : bands) b /= F;
    return bands;
}

BandTriple temporal_bands(const VideoTensor& video) {
    TemporalDistribution d = temporal_distribution(video, 3);
    BandTriple bands{};
    for (int b = 0; b < 3; ++b)
        bands[static_cast<std::size_t>(b)] = d.mean_power[static_cast<std::size_t>(b)] *
                                             d.counts[static_cast<std::size_t>(b)];
    return bands;
}

void write_doubles(std::ostream& os, const char* key, const std::vector<double>& v) {
    os << key << " =";
    for (double x : v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %.17g", x);
        os << buf;
    }
    os << "\n";
}

std::vector<double> parse_doubles(const std::string& line) {
    std::istringstream is(line);
    std::vector<double> out;
    double x;
    while (is >> x) out.push_back(x);
    return out;
}

}  // namespace

SpectrumReport band_report(const VideoTensor& video_a, const VideoTensor& video_b, int bins) {
    if (!video_a.data.same_shape(video_b.data))
        throw UsageError("band_report needs same-shape videos, got " +
                         shape_str(video_a.data.shape()) + " vs " + shape_str(video_b.data.shape()));
    SpectrumReport rep;
    rep.bins = bins;
    rep.radial_a = radial_spatial_distribution(video_a, bins).mean_power;
    rep.radial_b = radial_spatial_distribution(video_b, bins).mean_power;
    if (video_a.frames() >= 2) {
        rep.temporal_a = temporal_distribution(video_a, bins).mean_power;
        rep.temporal_b = temporal_distribution(video_b, bins).mean_power;
        rep.temporal_bands_a = temporal_bands(video_a);
        rep.temporal_bands_b = temporal_bands(video_b);
    }
    rep.spatial_bands_a = spatial_bands(video_a);
    rep.spatial_bands_b = spatial_bands(video_b);
    for (int i = 0; i < 3; ++i) {
        rep.spatial_ratios[static_cast<std::size_t>(i)] =
            safe_ratio(rep.spatial_bands_a[static_cast<std::size_t>(i)],
                       rep.spatial_bands_b[static_cast<std::size_t>(i)]);
        rep.temporal_ratios[static_cast<std::size_t>(i)] =
            safe_ratio(rep.temporal_bands_a[static_cast<std::size_t>(i)],
                       rep.temporal_bands_b[static_cast<std::size_t>(i)]);
    }
    return rep;
}

std::string SpectrumReport::serialize() const {
    std::ostringstream os;
    os << "bins = " << bins << "\n";
    write_doubles(os, "radial_a", radial_a);
    write_doubles(os, "radial_b", radial_b);
    write_doubles(os, "temporal_a", temporal_a);
    write_doubles(os, "temporal_b", temporal_b);
    auto triple = [&](const char* key, const BandTriple& t) {
        write_doubles(os, key, {t[0], t[1], t[2]});
    };
    triple("spatial_bands_a", spatial_bands_a);
    triple("spatial_bands_b", spatial_bands_b);
    triple("temporal_bands_a", temporal_bands_a);
    triple("temporal_bands_b", temporal_bands_b);
    triple("spatial_ratios", spatial_ratios);
    triple("temporal_ratios", temporal_ratios);
    return os.str();
}

SpectrumReport SpectrumReport::deserialize(const std::string& text) {
    SpectrumReport rep;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" =");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string rest = line.substr(eq + 2);
        if (key == "bins") {
            rep.bins = std::stoi(rest);
            continue;
        }
        std::vector<double> v = parse_doubles(rest);
        auto triple = [&](BandTriple& t) {
            if (v.size() != 3) throw DataError("report triple '" + key + "' needs 3 values");
            t = {v[0], v[1], v[2]};
        };
        if (key == "radial_a") rep.radial_a = v;
        else if (key == "radial_b") rep.radial_b = v;
        else if (key == "temporal_a") rep.temporal_a = v;
        else if (key == "temporal_b") rep.temporal_b = v;
        else if (key == "spatial_bands_a") triple(rep.spatial_bands_a);
        else if (key == "spatial_bands_b") triple(rep.spatial_bands_b);
        else if (key == "temporal_bands_a") triple(rep.temporal_bands_a);
        else if (key == "temporal_bands_b") triple(rep.temporal_bands_b);
        else if (key == "spatial_ratios") triple(rep.spatial_ratios);
        else if (key == "temporal_ratios") triple(rep.temporal_ratios);
        else throw DataError("unknown report key: " + key);
    }
    return rep;
}

/*================================ plotting =================================*/

Tensor render_curves(const std::vector<std::vector<double>>& series, int height, int width,
                     bool log_scale) {
    Tensor img({3, height, width});
    img.fill(-0.9);
    if (series.empty()) return img;
    double lo = 1e300, hi = -1e300;
    for (const auto& s : series)
        for (double v : s) {
            const double y = log_scale ? std::log10(std::max(v, 1e-12)) : v;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    if (!(hi > lo)) hi = lo + 1.0;

    const double colors[4][3] = {
        {1.0, 0.4, 0.2}, {0.2, 0.7, 1.0}, {0.3, 1.0, 0.4}, {1.0, 1.0, 0.3}};
    const std::int64_t plane = static_cast<std::int64_t>(height) * width;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.size() < 2) continue;
        const double* col = colors[si % 4];
        int prev_y = -1;
        for (int x = 0; x < width; ++x) {
            const double pos = static_cast<double>(x) * (s.size() - 1) / (width - 1);
            const std::size_t i0 = static_cast<std::size_t>(pos);
            const std::size_t i1 = std::min(i0 + 1, s.size() - 1);
            double v = s[i0] + (pos - i0) * (s[i1] - s[i0]);
            if (log_scale) v = std::log10(std::max(v, 1e-12));
            int y = height - 1 - static_cast<int>((v - lo) / (hi - lo) * (height - 1));
            y = std::clamp(y, 0, height - 1);
            const int y_from = prev_y < 0 ? y : prev_y;
            for (int yy = std::min(y_from, y); yy <= std::max(y_from, y); ++yy)
                for (int c = 0; c < 3; ++c) img[c * plane + yy * width + x] = col[c] * 2.0 - 1.0;
            prev_y = y;
        }
    }
    return img;
}

Tensor grayscale_to_rgb(const Tensor& img) {
    if (img.rank() != 2) throw DimError("grayscale_to_rgb expects (H,W)");
    const int H = img.dim(0), W = img.dim(1);
    double lo = 1e300, hi = -1e300;
    for (std::int64_t i = 0; i < img.size(); ++i) {
        lo = std::min(lo, img[i]);
        hi = std::max(hi, img[i]);
    }
    if (!(hi > lo)) hi = lo + 1.0;
    Tensor out({3, H, W});
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double v = (img[i] - lo) / (hi - lo) * 2.0 - 1.0;
        out[i] = v;
        out[img.size() + i] = v;
        out[2 * img.size() + i] = v;
    }
    return out;
}

void write_report_files(const SpectrumReport& report, const VideoTensor& video_a,
                        const VideoTensor& video_b, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream txt(fs::path(out_dir) / "report.txt");
    if (!txt) throw DataError("cannot write report in " + out_dir);
    txt << report.serialize();

    write_png((fs::path(out_dir) / "radial_distribution.png").string(),
              render_curves({report.radial_a, report.radial_b}, 256, 384, true));
    if (!report.temporal_a.empty())
        write_png((fs::path(out_dir) / "temporal_distribution.png").string(),
                  render_curves({report.temporal_a, report.temporal_b}, 256, 384, true));

    write_png((fs::path(out_dir) / "spectrogram_a.png").string(),
              grayscale_to_rgb(spatial_spectrogram(luminance(video_a.data, 0))));
    write_png((fs::path(out_dir) / "spectrogram_b.png").string(),
              grayscale_to_rgb(spatial_spectrogram(luminance(video_b.data, 0))));
    write_png((fs::path(out_dir) / "temporal_section_a.png").string(),
              grayscale_to_rgb(temporal_section(video_a, video_a.height() / 2)));
    write_png((fs::path(out_dir) / "temporal_section_b.png").string(),
              grayscale_to_rgb(temporal_section(video_b, video_b.height() / 2)));
}

}  // namespace casvid
