#pragma once

#include <utility>

#include "pano360/image.hpp"

namespace pano360 {

// Unit direction on the sphere. Convention used throughout: y is up,
// longitude 0 looks along +z, longitude grows toward +x.
struct SphericalDirection {
    double x = 0.0;
    double y = 0.0;
    double z = 1.0;
};

// Yaw rotation about the vertical axis. In quantized mode the angle is an
// exact multiple of one pixel (or token) column, so rotation is a pure
// column permutation.
struct YawAngle {
    double radians = 0.0;
    int pixel_shift = 0;
    bool quantized = true;
};

YawAngle yaw_from_pixels(int pixel_shift, int width);
YawAngle yaw_continuous(double radians);

SphericalDirection dir_from_erp_pixel(int u, int v, int width, int height);
// Continuous variant; u, v are fractional pixel coordinates (pixel centers at
// integer positions).
SphericalDirection dir_from_erp_uv(double u, double v, int width, int height);
std::pair<double, double> erp_pixel_from_dir(const SphericalDirection& d, int width, int height);

// Bilinear sample with horizontal wrap and vertical clamp. `out` must hold
// img.channels values.
void sample_erp(const ErpImage& img, double u, double v, double* out);
// Bilinear sample with clamp on both axes (square faces, perspective images).
void sample_grid_clamped(const PixelGrid& img, double u, double v, double* out);

// Ray through a cube-face pixel; a, b in (-1, 1) span the 90-degree face.
SphericalDirection cube_face_direction(CubeFace face, double a, double b);
// Dominant-axis face selection with the in-face coordinates of d.
CubeFace face_from_direction(const SphericalDirection& d, double& a, double& b);

CubeFaceSet erp_to_cubemap(const ErpImage& img, int face_size);
ErpImage cubemap_to_erp(const CubeFaceSet& faces, int width, int height);

ErpImage yaw_rotate_erp(const ErpImage& img, const YawAngle& a);

// Zero exactly on the central half-extent square, one elsewhere (the
// inpainting region of a polar face).
MaskGrid make_polar_face_mask(int face_size);

// Treats a square image as one 90-degree lateral cube face and reprojects it
// to ERP. The mask is 1 exactly on pixels whose direction falls inside that
// face's footprint; everything else is zero-filled.
std::pair<ErpImage, MaskGrid> perspective_to_erp(const PixelGrid& persp, CubeFace face_index,
                                                 int width, int height);

}  // namespace pano360
