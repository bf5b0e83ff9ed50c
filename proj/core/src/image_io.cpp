#include "casvid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "casvid/errors.hpp"

namespace fs = std::filesystem;

namespace casvid {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_u8(double v) {
    const double x = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0;
    return static_cast<unsigned char>(std::lround(x));
}

double from_u8(unsigned char u) { return static_cast<double>(u) / 255.0 * 2.0 - 1.0; }

}  // namespace

void write_png(const std::string& path, const Tensor& frame) {
    Tensor img = frame;
    if (img.rank() == 4 && img.dim(0) == 1) img = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
    if (img.rank() != 3 || img.dim(0) != 3)
        throw DataError("write_png expects a (3,H,W) frame, got " + shape_str(frame.shape()));
    const int H = img.dim(1), W = img.dim(2);

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
                    to_u8(img[c * plane + y * W + x]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt png: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit RGB.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int W = static_cast<int>(png_get_image_width(png, info));
    const int H = static_cast<int>(png_get_image_height(png, info));
    std::vector<unsigned char> rows(static_cast<std::size_t>(H) * W * 3);
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(H));
    for (int y = 0; y < H; ++y)
        row_ptrs[static_cast<std::size_t>(y)] = rows.data() + static_cast<std::size_t>(y) * W * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out({1, 3, H, W});
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                out[c * plane + y * W + x] =
                    from_u8(rows[(static_cast<std::size_t>(y) * W + x) * 3 + static_cast<std::size_t>(c)]);
    return out;
}

std::string frame_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%03d.png", index);
    return buf;
}

void write_clip_frames(const std::string& dir, const VideoTensor& clip) {
    fs::create_directories(dir);
    const int C = clip.channels(), H = clip.height(), W = clip.width();
    for (int f = 0; f < clip.frames(); ++f) {
        Tensor frame({C, H, W});
        std::copy(clip.data.data() + static_cast<std::int64_t>(f) * C * H * W,
                  clip.data.data() + static_cast<std::int64_t>(f + 1) * C * H * W, frame.data());
        write_png((fs::path(dir) / frame_filename(f)).string(), frame);
    }
}

VideoTensor read_clip_frames(const std::string& dir, int fps) {
    std::vector<std::string> paths;
    for (int f = 0;; ++f) {
        fs::path p = fs::path(dir) / frame_filename(f);
        if (!fs::exists(p)) break;
        paths.push_back(p.string());
    }
    if (paths.empty()) throw DataError("no frames found in " + dir);
    Tensor first = read_png(paths[0]);
    const int H = first.dim(2), W = first.dim(3);
    Tensor all({static_cast<int>(paths.size()), 3, H, W});
    std::copy(first.data(), first.data() + first.size(), all.data());
    for (std::size_t f = 1; f < paths.size(); ++f) {
        Tensor frame = read_png(paths[f]);
        if (frame.dim(2) != H || frame.dim(3) != W)
            throw DataError("frame size mismatch in " + dir);
        std::copy(frame.data(), frame.data() + frame.size(),
                  all.data() + static_cast<std::int64_t>(f) * frame.size());
    }
    return VideoTensor(std::move(all), fps);
}

}  // namespace casvid
