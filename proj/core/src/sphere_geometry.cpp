#include "pano360/sphere_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pano360 {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

int wrap_col(int u, int width) {
    u %= width;
    return u < 0 ? u + width : u;
}
}  // namespace

YawAngle yaw_from_pixels(int pixel_shift, int width) {
    if (width <= 0) throw std::domain_error("yaw_from_pixels: width must be positive");
    const int s = wrap_col(pixel_shift, width);
    return YawAngle{kTwoPi * s / width, s, true};
}

YawAngle yaw_continuous(double radians) {
    double r = std::fmod(radians, kTwoPi);
    if (r < 0) r += kTwoPi;
    return YawAngle{r, 0, false};
}

SphericalDirection dir_from_erp_pixel(int u, int v, int width, int height) {
    if (u < 0 || u >= width || v < 0 || v >= height)
        throw std::domain_error("dir_from_erp_pixel: pixel index out of range");
    return dir_from_erp_uv(u, v, width, height);
}

SphericalDirection dir_from_erp_uv(double u, double v, int width, int height) {
    const double lam = (u + 0.5) / width * kTwoPi - kPi;
    const double phi = kPi / 2.0 - (v + 0.5) / height * kPi;
    const double cp = std::cos(phi);
    return SphericalDirection{cp * std::sin(lam), std::sin(phi), cp * std::cos(lam)};
}

std::pair<double, double> erp_pixel_from_dir(const SphericalDirection& d, int width, int height) {
    const double n2 = d.x * d.x + d.y * d.y + d.z * d.z;
    if (n2 < 1e-12) throw std::domain_error("erp_pixel_from_dir: zero direction");
    const double n = std::sqrt(n2);
    const double y = std::clamp(d.y / n, -1.0, 1.0);
    const double phi = std::asin(y);
    const double v = (kPi / 2.0 - phi) / kPi * height - 0.5;
    // canonical u at the pole singularity
    if (d.x * d.x + d.z * d.z < 1e-24) return {width / 2.0 - 0.5, v};
    const double lam = std::atan2(d.x, d.z);
    return {(lam + kPi) / kTwoPi * width - 0.5, v};
}

void sample_erp(const ErpImage& img, double u, double v, double* out) {
    const int W = img.width, H = img.height, C = img.channels;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const double du = u - fu;
    const double dv = v - fv;
    const int u0 = wrap_col(static_cast<int>(fu), W);
    const int u1 = wrap_col(u0 + 1, W);
    int v0 = static_cast<int>(fv);
    int v1 = v0 + 1;
    v0 = std::clamp(v0, 0, H - 1);
    v1 = std::clamp(v1, 0, H - 1);
    const double w00 = (1 - du) * (1 - dv), w10 = du * (1 - dv);
    const double w01 = (1 - du) * dv, w11 = du * dv;
    for (int c = 0; c < C; ++c)
        out[c] = w00 * img.at(v0, u0, c) + w10 * img.at(v0, u1, c) + w01 * img.at(v1, u0, c) +
                 w11 * img.at(v1, u1, c);
}

void sample_grid_clamped(const PixelGrid& img, double u, double v, double* out) {
    const int W = img.width, H = img.height, C = img.channels;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const double du = u - fu;
    const double dv = v - fv;
    const int u0 = std::clamp(static_cast<int>(fu), 0, W - 1);
    const int u1 = std::clamp(static_cast<int>(fu) + 1, 0, W - 1);
    const int v0 = std::clamp(static_cast<int>(fv), 0, H - 1);
    const int v1 = std::clamp(static_cast<int>(fv) + 1, 0, H - 1);
    const double w00 = (1 - du) * (1 - dv), w10 = du * (1 - dv);
    const double w01 = (1 - du) * dv, w11 = du * dv;
    for (int c = 0; c < C; ++c)
        out[c] = w00 * img.at(v0, u0, c) + w10 * img.at(v0, u1, c) + w01 * img.at(v1, u0, c) +
                 w11 * img.at(v1, u1, c);
}

SphericalDirection cube_face_direction(CubeFace face, double a, double b) {
    double x, y, z;
    switch (face) {
        case CubeFace::Front:  x = a;  y = -b; z = 1;  break;
        case CubeFace::Right:  x = 1;  y = -b; z = -a; break;
        case CubeFace::Back:   x = -a; y = -b; z = -1; break;
        case CubeFace::Left:   x = -1; y = -b; z = a;  break;
        case CubeFace::Top:    x = a;  y = 1;  z = b;  break;
        case CubeFace::Bottom: x = a;  y = -1; z = -b; break;
        default: throw std::domain_error("cube_face_direction: bad face");
    }
    const double n = std::sqrt(x * x + y * y + z * z);
    return SphericalDirection{x / n, y / n, z / n};
}

CubeFace face_from_direction(const SphericalDirection& d, double& a, double& b) {
    const double ax = std::fabs(d.x), ay = std::fabs(d.y), az = std::fabs(d.z);
    if (az >= ax && az >= ay) {
        if (d.z > 0) {
            a = d.x / d.z;
            b = -d.y / d.z;
            return CubeFace::Front;
        }
        a = d.x / d.z;  // == -d.x / (-d.z)
        b = d.y / d.z;
        return CubeFace::Back;
    }
    if (ax >= ay) {
        if (d.x > 0) {
            a = -d.z / d.x;
            b = -d.y / d.x;
            return CubeFace::Right;
        }
        a = -d.z / d.x;  // == d.z / (-d.x) mirrored back onto the face
        b = d.y / d.x;
        return CubeFace::Left;
    }
    if (d.y > 0) {
        a = d.x / d.y;
        b = d.z / d.y;
        return CubeFace::Top;
    }
    a = -d.x / d.y;
    b = d.z / d.y;
    return CubeFace::Bottom;
}

CubeFaceSet erp_to_cubemap(const ErpImage& img, int face_size) {
    if (face_size < 2) throw std::domain_error("erp_to_cubemap: face_size must be >= 2");
    CubeFaceSet out(face_size, img.channels);
    for (int f = 0; f < 6; ++f) {
        PixelGrid& face = out.faces[f];
        for (int j = 0; j < face_size; ++j) {
            const double b = (j + 0.5) / face_size * 2.0 - 1.0;
            for (int i = 0; i < face_size; ++i) {
                const double a = (i + 0.5) / face_size * 2.0 - 1.0;
                const SphericalDirection d =
                    cube_face_direction(static_cast<CubeFace>(f), a, b);
                const auto [u, v] = erp_pixel_from_dir(d, img.width, img.height);
                sample_erp(img, u, v, &face.at(j, i, 0));
            }
        }
    }
    return out;
}

ErpImage cubemap_to_erp(const CubeFaceSet& faces, int width, int height) {
    if (width != 2 * height) throw std::domain_error("cubemap_to_erp: width must equal 2*height");
    ErpImage out(width, height, faces.channels);
    const int F = faces.face_size;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const SphericalDirection d = dir_from_erp_pixel(u, v, width, height);
            double a, b;
            const CubeFace f = face_from_direction(d, a, b);
            const double fu = (a + 1.0) / 2.0 * F - 0.5;
            const double fv = (b + 1.0) / 2.0 * F - 0.5;
            sample_grid_clamped(faces.face(f), fu, fv, &out.at(v, u, 0));
        }
    }
    return out;
}

ErpImage yaw_rotate_erp(const ErpImage& img, const YawAngle& a) {
    ErpImage out(img.width, img.height, img.channels);
    const int W = img.width, C = img.channels;
    if (a.quantized) {
        // exact column roll: content moves toward +longitude by pixel_shift
        const int s = wrap_col(a.pixel_shift, W);
        for (int v = 0; v < img.height; ++v)
            for (int u = 0; u < W; ++u) {
                const int src = wrap_col(u - s, W);
                for (int c = 0; c < C; ++c) out.at(v, u, c) = img.at(v, src, c);
            }
        return out;
    }
    const double s = a.radians / kTwoPi * W;
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < W; ++u)
            sample_erp(img, u - s, static_cast<double>(v), &out.at(v, u, 0));
    return out;
}

MaskGrid make_polar_face_mask(int face_size) {
    if (face_size <= 0 || face_size % 4 != 0)
        throw std::domain_error("make_polar_face_mask: face_size must be divisible by 4");
    MaskGrid m(face_size, face_size, 1);
    const int lo = face_size / 4, hi = 3 * face_size / 4;
    for (int v = lo; v < hi; ++v)
        for (int u = lo; u < hi; ++u) m.at(v, u) = 0;
    return m;
}

std::pair<ErpImage, MaskGrid> perspective_to_erp(const PixelGrid& persp, CubeFace face_index,
                                                 int width, int height) {
    if (persp.width != persp.height)
        throw std::domain_error("perspective_to_erp: input must be square");
    if (face_index == CubeFace::Top || face_index == CubeFace::Bottom)
        throw std::domain_error("perspective_to_erp: lateral faces only");
    ErpImage img(width, height, persp.channels);
    MaskGrid mask(width, height, 0);
    const int F = persp.width;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const SphericalDirection d = dir_from_erp_pixel(u, v, width, height);
            double a, b;
            if (face_from_direction(d, a, b) != face_index) continue;
            mask.at(v, u) = 1;
            const double fu = (a + 1.0) / 2.0 * F - 0.5;
            const double fv = (b + 1.0) / 2.0 * F - 0.5;
            sample_grid_clamped(persp, fu, fv, &img.at(v, u, 0));
        }
    }
    return {std::move(img), std::move(mask)};
}

}  // namespace pano360
