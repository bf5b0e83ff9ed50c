#pragma once

#include "casvid/tensor.hpp"

namespace casvid {

// Pixel-space clip, (F, 3, H, W), values in [-1, 1]. Construction clamps.
struct VideoTensor {
    Tensor data;
    int fps = 1;

    VideoTensor() = default;
    VideoTensor(Tensor t, int fps_);

    int frames() const { return data.dim(0); }
    int channels() const { return data.dim(1); }
    int height() const { return data.dim(2); }
    int width() const { return data.dim(3); }

    // Single frame as an (1, 3, H, W) video.
    VideoTensor frame(int f) const;
};

// Latent-space clip, (F, c, h, w).
struct LatentVideo {
    Tensor data;
    int downsample_factor = 4;

    LatentVideo() = default;
    LatentVideo(Tensor t, int factor);

    int frames() const { return data.dim(0); }
    int channels() const { return data.dim(1); }
    int height() const { return data.dim(2); }
    int width() const { return data.dim(3); }
};

// Rec. 601 luma of one frame of a (F, 3, H, W) tensor -> (H, W).
Tensor luminance(const Tensor& video, int frame);

// Separable bilinear resize of (F, C, H, W) to (F, C, out_h, out_w).
// Downscaling widens the triangle filter (antialiasing).
Tensor resize_bilinear(const Tensor& video, int out_h, int out_w);

// PSNR in dB for signals with peak-to-peak range 2 ([-1, 1] pixels).
double psnr(const Tensor& a, const Tensor& b);

void clamp_unit(Tensor& t);

}  // namespace casvid
