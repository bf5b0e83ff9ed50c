#pragma once

#include <string>
#include <vector>

#include "casvid/tensor.hpp"
#include "casvid/video.hpp"

namespace casvid {

// 8-bit RGB PNG <-> [-1,1] tensors. u8 = round((v+1)/2*255), v = u8/255*2-1.
void write_png(const std::string& path, const Tensor& frame);  // (1or3,H,W) or (1,3,H,W)
Tensor read_png(const std::string& path);                      // -> (1,3,H,W)

// Frame-folder clips: frame_000.png, frame_001.png, ...
void write_clip_frames(const std::string& dir, const VideoTensor& clip);
VideoTensor read_clip_frames(const std::string& dir, int fps);

std::string frame_filename(int index);

}  // namespace casvid
