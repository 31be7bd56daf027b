#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pano360 {

// Interleaved row-major pixel grid. Values are [0,1] for pixel images and
// unbounded for latent- or noise-shaped grids that reuse the layout.
struct PixelGrid {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    PixelGrid() = default;
    PixelGrid(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w <= 0 || h <= 0 || c <= 0)
            throw std::domain_error("PixelGrid: dimensions must be positive");
    }

    double& at(int v, int u, int c) {
        return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
    double at(int v, int u, int c) const {
        return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
    bool same_shape(const PixelGrid& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Equirectangular panorama: width is always twice the height, and column u
// and column (u + width) mod width denote the same longitude.
struct ErpImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    ErpImage() = default;
    ErpImage(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w != 2 * h)
            throw std::domain_error("ErpImage: width must equal 2*height");
        if (h <= 0 || c <= 0)
            throw std::domain_error("ErpImage: dimensions must be positive");
    }

    double& at(int v, int u, int c) {
        return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
    double at(int v, int u, int c) const {
        return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
    bool same_shape(const ErpImage& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

inline ErpImage erp_from_grid(const PixelGrid& g) {
    if (g.width != 2 * g.height)
        throw std::domain_error("erp_from_grid: width must equal 2*height");
    ErpImage out(g.width, g.height, g.channels);
    out.data = g.data;
    return out;
}

inline PixelGrid grid_from_erp(const ErpImage& img) {
    PixelGrid out(img.width, img.height, img.channels);
    out.data = img.data;
    return out;
}

enum class CubeFace : int { Front = 0, Right = 1, Back = 2, Left = 3, Top = 4, Bottom = 5 };

inline const char* cube_face_name(CubeFace f) {
    switch (f) {
        case CubeFace::Front: return "front";
        case CubeFace::Right: return "right";
        case CubeFace::Back: return "back";
        case CubeFace::Left: return "left";
        case CubeFace::Top: return "top";
        case CubeFace::Bottom: return "bottom";
    }
    return "?";
}

// Six square 90-degree-FoV faces. Face order is front, right, back, left,
// top, bottom; the front face center looks along +z (longitude 0, latitude 0).
struct CubeFaceSet {
    int face_size = 0;
    int channels = 0;
    std::array<PixelGrid, 6> faces;

    CubeFaceSet() = default;
    CubeFaceSet(int size, int c) : face_size(size), channels(c) {
        if (size < 2)
            throw std::domain_error("CubeFaceSet: face_size must be >= 2");
        for (auto& f : faces) f = PixelGrid(size, size, c);
    }

    PixelGrid& face(CubeFace f) { return faces[static_cast<int>(f)]; }
    const PixelGrid& face(CubeFace f) const { return faces[static_cast<int>(f)]; }
};

// Binary {0,1} grid at pixel or token resolution.
struct MaskGrid {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    MaskGrid() = default;
    MaskGrid(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0)
            throw std::domain_error("MaskGrid: dimensions must be positive");
        if (fill > 1)
            throw std::domain_error("MaskGrid: values must be 0 or 1");
    }

    std::uint8_t& at(int v, int u) { return data[static_cast<std::size_t>(v) * width + u]; }
    std::uint8_t at(int v, int u) const { return data[static_cast<std::size_t>(v) * width + u]; }

    std::size_t count_ones() const {
        std::size_t n = 0;
        for (auto m : data) n += m;
        return n;
    }
    void validate() const {
        for (auto m : data)
            if (m > 1) throw std::domain_error("MaskGrid: values must be 0 or 1");
    }
};

// I_mask = I * M + (1 - M) * fill, elementwise over channels.
template <typename ImageT>
ImageT apply_mask(const ImageT& img, const MaskGrid& mask, double fill = 1.0) {
    if (img.width != mask.width || img.height != mask.height)
        throw std::domain_error("apply_mask: image and mask shapes differ");
    ImageT out = img;
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u)
            if (mask.at(v, u) == 0)
                for (int c = 0; c < img.channels; ++c) out.at(v, u, c) = fill;
    return out;
}

}  // namespace pano360
