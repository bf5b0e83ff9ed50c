#pragma once

#include <array>
#include <string>
#include <vector>

#include "casvid/tensor.hpp"
#include "casvid/video.hpp"

namespace casvid {

/*============================ basic diagnostics ===========================*/

// Centered 2D DFT log-magnitude, log(1 + |X|), of a (H, W) array.
Tensor spatial_spectrogram(const Tensor& frame);

// Per-frame 2D power spectra radially averaged into `bins` annuli of
// normalized radius r in [0, 1] (corner frequencies beyond the Nyquist
// circle land in the top bin), then averaged over frames. Power is
// normalized as |X|^2 / (H*W) so summed bin power matches signal power.
struct RadialDistribution {
    std::vector<double> mean_power;  // per bin
    std::vector<double> counts;     // spectrum points per bin (per frame)

    double total_power() const;  // sum(mean_power * counts)
};
RadialDistribution radial_spatial_distribution(const VideoTensor& video, int bins);

// Luminance x-t slice at a fixed row -> (F, W).
Tensor temporal_section(const VideoTensor& video, int row);

// Per-pixel temporal power spectrum (normalized |X|^2 / F), averaged over
// pixels, binned over [0, Nyquist].
struct TemporalDistribution {
    std::vector<double> mean_power;
    std::vector<double> counts;  // frequency indices per bin

    double total_power() const;
};
TemporalDistribution temporal_distribution(const VideoTensor& video, int bins);

/*=============================== band report ===============================*/

// low / mid / high thirds of [0, Nyquist].
using BandTriple = std::array<double, 3>;

struct SpectrumReport {
    int bins = 0;
    std::vector<double> radial_a, radial_b;      // mean power per radial bin
    std::vector<double> temporal_a, temporal_b;  // mean power per temporal bin
    BandTriple spatial_bands_a{}, spatial_bands_b{};
    BandTriple temporal_bands_a{}, temporal_bands_b{};
    BandTriple spatial_ratios{}, temporal_ratios{};  // B / A, exactly 1 when equal

    std::string serialize() const;
    static SpectrumReport deserialize(const std::string& text);
    bool operator==(const SpectrumReport&) const = default;
};

// A = before refinement, B = after. Band energies are total power in each
// third of the (radial / temporal) frequency range; DC sits in the low band.
SpectrumReport band_report(const VideoTensor& video_a, const VideoTensor& video_b, int bins);

// Writes report.txt, distribution plots and spectrogram/section images.
void write_report_files(const SpectrumReport& report, const VideoTensor& video_a,
                        const VideoTensor& video_b, const std::string& out_dir);

/*================================ plotting =================================*/

// Minimal plot rendering used by the report: curves on a dark canvas.
Tensor render_curves(const std::vector<std::vector<double>>& series, int height, int width,
                     bool log_scale);
Tensor grayscale_to_rgb(const Tensor& img);  // (H,W) -> (3,H,W), normalized

}  // namespace casvid
