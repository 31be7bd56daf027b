#pragma once

// Brute-force reference implementations used to cross-check the library.
// Everything here is written directly from the coordinate conventions and
// shares no code with core/, so agreement is evidence rather than tautology.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "pano360/image.hpp"
#include "pano360/rng.hpp"

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

inline double wrap_sample_channel(const pano360::ErpImage& img, double u, double v, int c) {
    const int W = img.width, H = img.height;
    const double fu = std::floor(u), fv = std::floor(v);
    const double du = u - fu, dv = v - fv;
    auto px = [&](long uu, long vv) {
        long m = ((uu % W) + W) % W;
        long n = vv < 0 ? 0 : (vv >= H ? H - 1 : vv);
        return img.at(static_cast<int>(n), static_cast<int>(m), c);
    };
    const long u0 = static_cast<long>(fu), v0 = static_cast<long>(fv);
    return (1 - du) * (1 - dv) * px(u0, v0) + du * (1 - dv) * px(u0 + 1, v0) +
           (1 - du) * dv * px(u0, v0 + 1) + du * dv * px(u0 + 1, v0 + 1);
}

inline double clamp_sample_channel(const pano360::PixelGrid& img, double u, double v, int c) {
    const int W = img.width, H = img.height;
    const double fu = std::floor(u), fv = std::floor(v);
    const double du = u - fu, dv = v - fv;
    auto px = [&](long uu, long vv) {
        long m = uu < 0 ? 0 : (uu >= W ? W - 1 : uu);
        long n = vv < 0 ? 0 : (vv >= H ? H - 1 : vv);
        return img.at(static_cast<int>(n), static_cast<int>(m), c);
    };
    const long u0 = static_cast<long>(fu), v0 = static_cast<long>(fv);
    return (1 - du) * (1 - dv) * px(u0, v0) + du * (1 - dv) * px(u0 + 1, v0) +
           (1 - du) * dv * px(u0, v0 + 1) + du * dv * px(u0 + 1, v0 + 1);
}

// Face frames: ray(i,j) = C + a*A + b*B with a,b the centered face coordinates.
// Order matches pano360::CubeFace: front, right, back, left, top, bottom.
inline const double kFaceC[6][3] = {{0, 0, 1}, {1, 0, 0},  {0, 0, -1},
                                    {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
inline const double kFaceA[6][3] = {{1, 0, 0}, {0, 0, -1}, {-1, 0, 0},
                                    {0, 0, 1}, {1, 0, 0},  {1, 0, 0}};
inline const double kFaceB[6][3] = {{0, -1, 0}, {0, -1, 0}, {0, -1, 0},
                                    {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};

inline pano360::CubeFaceSet erp_to_cubemap(const pano360::ErpImage& img, int F) {
    pano360::CubeFaceSet out(F, img.channels);
    for (int f = 0; f < 6; ++f) {
        for (int j = 0; j < F; ++j) {
            for (int i = 0; i < F; ++i) {
                const double a = 2.0 * (i + 0.5) / F - 1.0;
                const double b = 2.0 * (j + 0.5) / F - 1.0;
                const double x = kFaceC[f][0] + a * kFaceA[f][0] + b * kFaceB[f][0];
                const double y = kFaceC[f][1] + a * kFaceA[f][1] + b * kFaceB[f][1];
                const double z = kFaceC[f][2] + a * kFaceA[f][2] + b * kFaceB[f][2];
                const double lon = std::atan2(x, z);
                const double lat = std::atan2(y, std::sqrt(x * x + z * z));
                const double u = (lon + kPi) / (2 * kPi) * img.width - 0.5;
                const double v = (kPi / 2 - lat) / kPi * img.height - 0.5;
                for (int c = 0; c < img.channels; ++c)
                    out.faces[f].at(j, i, c) = wrap_sample_channel(img, u, v, c);
            }
        }
    }
    return out;
}

inline pano360::ErpImage cubemap_to_erp(const pano360::CubeFaceSet& faces, int W, int H) {
    pano360::ErpImage out(W, H, faces.channels);
    const int F = faces.face_size;
    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            const double lon = (u + 0.5) / W * 2 * kPi - kPi;
            const double lat = kPi / 2 - (v + 0.5) / H * kPi;
            const double d[3] = {std::cos(lat) * std::sin(lon), std::sin(lat),
                                 std::cos(lat) * std::cos(lon)};
            int best = 0;
            double best_dot = -2;
            for (int f = 0; f < 6; ++f) {
                const double dot =
                    d[0] * kFaceC[f][0] + d[1] * kFaceC[f][1] + d[2] * kFaceC[f][2];
                if (dot > best_dot) {
                    best_dot = dot;
                    best = f;
                }
            }
            const double t = 1.0 / best_dot;
            const double p[3] = {t * d[0] - kFaceC[best][0], t * d[1] - kFaceC[best][1],
                                 t * d[2] - kFaceC[best][2]};
            const double a = p[0] * kFaceA[best][0] + p[1] * kFaceA[best][1] + p[2] * kFaceA[best][2];
            const double b = p[0] * kFaceB[best][0] + p[1] * kFaceB[best][1] + p[2] * kFaceB[best][2];
            const double fu = (a + 1) / 2 * F - 0.5;
            const double fv = (b + 1) / 2 * F - 0.5;
            for (int c = 0; c < faces.channels; ++c)
                out.at(v, u, c) = clamp_sample_channel(faces.faces[best], fu, fv, c);
        }
    }
    return out;
}

inline pano360::ErpImage roll_columns(const pano360::ErpImage& img, int shift) {
    pano360::ErpImage out(img.width, img.height, img.channels);
    const int W = img.width;
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < W; ++u) {
            const int src = ((u - shift) % W + W) % W;
            for (int c = 0; c < img.channels; ++c) out.at(v, u, c) = img.at(v, src, c);
        }
    return out;
}

inline pano360::ErpImage random_erp(int W, int H, int C, std::uint64_t seed) {
    pano360::ErpImage img(W, H, C);
    pano360::Rng rng(seed);
    for (auto& x : img.data) x = rng.uniform();
    return img;
}

// Smooth band-limited test panorama: low-order spherical harmonics evaluated
// per pixel direction, so resampling error stays small.
inline pano360::ErpImage smooth_erp(int W, int H, int C, std::uint64_t seed) {
    pano360::ErpImage img(W, H, C);
    pano360::Rng rng(seed);
    double w[3][9];
    for (int c = 0; c < C && c < 3; ++c)
        for (auto& x : w[c]) x = rng.uniform() - 0.5;
    for (int v = 0; v < H; ++v) {
        const double lat = kPi / 2 - (v + 0.5) / H * kPi;
        for (int u = 0; u < W; ++u) {
            const double lon = (u + 0.5) / W * 2 * kPi - kPi;
            const double x = std::cos(lat) * std::sin(lon);
            const double y = std::sin(lat);
            const double z = std::cos(lat) * std::cos(lon);
            const double basis[9] = {1.0, x, y, z, x * y, y * z, x * z, x * x - y * y,
                                     3 * z * z - 1};
            for (int c = 0; c < C; ++c) {
                double s = 0;
                const auto& ww = w[c < 3 ? c : 2];
                for (int k = 0; k < 9; ++k) s += ww[k] * basis[k];
                img.at(v, u, c) = 0.5 + 0.35 * s;
            }
        }
    }
    for (auto& x : img.data) x = std::clamp(x, 0.0, 1.0);
    return img;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
    const double m = mse(a, b);
    if (m <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

}  // namespace oracle
