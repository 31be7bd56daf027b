#include "pano360/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace pano360 {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

void put_u32le(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    std::fwrite(b, 1, 4, f);
}

std::uint32_t get_u32le(std::FILE* f, const std::string& path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) fail("raw grid: truncated header", path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

PixelGrid read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open PNG", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_read_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("PNG decode error", path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("unsupported PNG channel count", path);
    }

    std::vector<png_byte> rowbuf(static_cast<std::size_t>(width) * channels);
    PixelGrid out(width, height, channels);
    for (int v = 0; v < height; ++v) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (std::size_t i = 0; i < rowbuf.size(); ++i)
            out.data[static_cast<std::size_t>(v) * rowbuf.size() + i] = rowbuf[i] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

ErpImage read_png_erp(const std::string& path) { return erp_from_grid(read_png(path)); }

namespace {

void write_png_impl(const std::string& path, int width, int height, int channels,
                    const std::vector<double>& data) {
    if (channels != 1 && channels != 3)
        throw std::domain_error("write_png: only 1- or 3-channel images");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot create PNG", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_write_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("PNG encode error", path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> rowbuf(static_cast<std::size_t>(width) * channels);
    for (int v = 0; v < height; ++v) {
        for (std::size_t i = 0; i < rowbuf.size(); ++i) {
            const double x = data[static_cast<std::size_t>(v) * rowbuf.size() + i];
            rowbuf[i] = static_cast<png_byte>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
        }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::string& path, const PixelGrid& img) {
    write_png_impl(path, img.width, img.height, img.channels, img.data);
}
void write_png(const std::string& path, const ErpImage& img) {
    write_png_impl(path, img.width, img.height, img.channels, img.data);
}

static constexpr char kRawMagic[4] = {'P', 'F', '3', '2'};

void write_raw_grid(const std::string& path, int width, int height, int channels,
                    const std::vector<double>& interleaved) {
    if (interleaved.size() != static_cast<std::size_t>(width) * height * channels)
        throw std::domain_error("write_raw_grid: data size mismatch");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("cannot create raw grid", path);
    std::fwrite(kRawMagic, 1, 4, fp.get());
    put_u32le(fp.get(), static_cast<std::uint32_t>(width));
    put_u32le(fp.get(), static_cast<std::uint32_t>(height));
    put_u32le(fp.get(), static_cast<std::uint32_t>(channels));
    // planar: one float32 plane per channel, row-major within the plane
    std::vector<float> plane(static_cast<std::size_t>(width) * height);
    for (int c = 0; c < channels; ++c) {
        for (int v = 0; v < height; ++v)
            for (int u = 0; u < width; ++u)
                plane[static_cast<std::size_t>(v) * width + u] = static_cast<float>(
                    interleaved[(static_cast<std::size_t>(v) * width + u) * channels + c]);
        std::fwrite(plane.data(), sizeof(float), plane.size(), fp.get());
    }
}

void read_raw_grid(const std::string& path, int& width, int& height, int& channels,
                   std::vector<double>& interleaved) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("cannot open raw grid", path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, kRawMagic, 4) != 0)
        fail("raw grid: bad magic", path);
    width = static_cast<int>(get_u32le(fp.get(), path));
    height = static_cast<int>(get_u32le(fp.get(), path));
    channels = static_cast<int>(get_u32le(fp.get(), path));
    if (width <= 0 || height <= 0 || channels <= 0) fail("raw grid: bad header", path);
    const std::size_t plane_n = static_cast<std::size_t>(width) * height;
    interleaved.assign(plane_n * channels, 0.0);
    std::vector<float> plane(plane_n);
    for (int c = 0; c < channels; ++c) {
        if (std::fread(plane.data(), sizeof(float), plane_n, fp.get()) != plane_n)
            fail("raw grid: truncated payload", path);
        for (int v = 0; v < height; ++v)
            for (int u = 0; u < width; ++u)
                interleaved[(static_cast<std::size_t>(v) * width + u) * channels + c] =
                    plane[static_cast<std::size_t>(v) * width + u];
    }
}

}  // namespace pano360
