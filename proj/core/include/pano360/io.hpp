#pragma once

#include <string>

#include "pano360/image.hpp"

namespace pano360 {

// 8-bit PNG in, values scaled to [0,1]. Gray stays 1-channel, everything
// else is expanded to RGB; alpha is dropped.
PixelGrid read_png(const std::string& path);
ErpImage read_png_erp(const std::string& path);

// Values are clamped to [0,1] and quantized to 8 bits. 1- and 3-channel only.
void write_png(const std::string& path, const PixelGrid& img);
void write_png(const std::string& path, const ErpImage& img);

// Planar little-endian float32 dump with a small header (width, height,
// channels), for latent-shaped grids.
void write_raw_grid(const std::string& path, int width, int height, int channels,
                    const std::vector<double>& interleaved);
void read_raw_grid(const std::string& path, int& width, int& height, int& channels,
                   std::vector<double>& interleaved);

inline void write_raw_grid(const std::string& path, const PixelGrid& img) {
    write_raw_grid(path, img.width, img.height, img.channels, img.data);
}
inline void write_raw_grid(const std::string& path, const ErpImage& img) {
    write_raw_grid(path, img.width, img.height, img.channels, img.data);
}
inline PixelGrid read_raw_grid(const std::string& path) {
    int w = 0, h = 0, c = 0;
    std::vector<double> data;
    read_raw_grid(path, w, h, c, data);
    PixelGrid img(w, h, c);
    img.data = std::move(data);
    return img;
}

}  // namespace pano360
