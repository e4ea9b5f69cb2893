#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tetrec {

/// Dense row-major image, double precision in memory.
///
/// On disk images use either the raw f32 container (exact pipeline data,
/// extension .imgf) or 8-bit PNG (previews only).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data; // height * width * channels

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Raw f32 little-endian container: magic "IMGF", u32 version, u32 h/w/c,
/// then h*w*c f32 values.
void save_image_raw(const Image& img, const std::string& path);
Image load_image_raw(const std::string& path);

/// 8-bit PNG preview. Values are clamped to [0,1]. 1 channel = gray,
/// 3 = RGB, 4 = RGBA.
void save_image_png(const Image& img, const std::string& path);

} // namespace tetrec
