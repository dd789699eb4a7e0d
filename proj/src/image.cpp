#include "lutdn/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "lutdn/errors.hpp"

namespace lutdn {

ImageU8 rotate_cw(const ImageU8& img, int turns) {
    turns = ((turns % 4) + 4) % 4;
    if (turns == 0) return img;
    const int w = img.width, h = img.height;
    // Clockwise: (y, x) of the source lands at (x, h-1-y) of the result.
    ImageU8 out(turns == 2 ? w : h, turns == 2 ? h : w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int oy = 0, ox = 0;
                switch (turns) {
                    case 1: oy = x; ox = h - 1 - y; break;
                    case 2: oy = h - 1 - y; ox = w - 1 - x; break;
                    case 3: oy = w - 1 - x; ox = y; break;
                }
                out.at(c, oy, ox) = img.at(c, y, x);
            }
    return out;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png read init failed for " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png info init failed for " + path);
    }
    std::vector<uint8_t> interleaved;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const size_t stride = png_get_rowbytes(png, info);
    interleaved.resize(stride * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = interleaved.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (stride != static_cast<size_t>(w) * 3)
        throw IoError("unexpected decode stride for " + path);

    ImageU8 img(static_cast<int>(w), static_cast<int>(h), 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = interleaved[static_cast<size_t>(y) * stride + 3 * x + c];
    return img;
}

void save_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 3 && img.channels != 1)
        throw IoError("save_png: only 1- or 3-channel images, got " +
                      std::to_string(img.channels));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot create " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png write init failed for " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png info init failed for " + path);
    }
    std::vector<uint8_t> interleaved;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode " + path);
    }
    png_init_io(png, fp.get());
    const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const size_t stride = static_cast<size_t>(img.width) * img.channels;
    interleaved.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                interleaved[static_cast<size_t>(y) * stride + img.channels * x + c] =
                    img.at(c, y, x);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = interleaved.data() + stride * y;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace lutdn
