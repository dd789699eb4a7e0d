#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lutdn {

// 8-bit image, planar layout (all of channel 0, then channel 1, ...).
// Planar keeps the per-channel LUT loops and the rotation ensemble simple.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;

    ImageU8() = default;
    ImageU8(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, 0) {}

    size_t plane() const { return static_cast<size_t>(width) * height; }
    size_t idx(int c, int y, int x) const {
        return plane() * c + static_cast<size_t>(y) * width + x;
    }
    uint8_t& at(int c, int y, int x) { return data[idx(c, y, x)]; }
    uint8_t at(int c, int y, int x) const { return data[idx(c, y, x)]; }

    bool same_shape(const ImageU8& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Clockwise rotation by 90*turns degrees. turns is taken mod 4.
ImageU8 rotate_cw(const ImageU8& img, int turns);

// PNG I/O. Files are read as 8-bit RGB (gray and palette inputs are expanded,
// alpha is stripped). Throws IoError with the path on any failure.
ImageU8 load_png(const std::string& path);
void save_png(const std::string& path, const ImageU8& img);

}  // namespace lutdn
