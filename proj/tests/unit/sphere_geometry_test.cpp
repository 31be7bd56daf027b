#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pano360/sphere_geometry.hpp"

using namespace pano360;

TEST_CASE("pixel direction matches hand-computed literal") {
    // 16x8 grid, pixel (3,7): lon = -pi + 3.5/16*2pi, lat = pi/2 - 7.5/8*pi
    const SphericalDirection d = dir_from_erp_pixel(3, 7, 16, 8);
    CHECK(d.x == doctest::Approx(-0.191341716182545).epsilon(1e-12));
    CHECK(d.y == doctest::Approx(-0.980785280403230).epsilon(1e-12));
    CHECK(d.z == doctest::Approx(-0.038060233744357).epsilon(1e-12));
}

TEST_CASE("pixel directions are unit length") {
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 16; ++u) {
            const SphericalDirection d = dir_from_erp_pixel(u, v, 16, 8);
            CHECK(std::fabs(d.x * d.x + d.y * d.y + d.z * d.z - 1.0) < 1e-12);
        }
}

TEST_CASE("erp_pixel_from_dir inverts dir_from_erp_pixel") {
    const int W = 64, H = 32;
    for (int v = 0; v < H; ++v)
        for (int u = 0; u < W; ++u) {
            const auto d = dir_from_erp_pixel(u, v, W, H);
            const auto [pu, pv] = erp_pixel_from_dir(d, W, H);
            CHECK(pu == doctest::Approx(u).epsilon(1e-9));
            CHECK(pv == doctest::Approx(v).epsilon(1e-9));
        }
}

TEST_CASE("pole direction maps to canonical column") {
    const auto [u_n, v_n] = erp_pixel_from_dir({0, 1, 0}, 64, 32);
    CHECK(u_n == doctest::Approx(31.5));
    CHECK(v_n == doctest::Approx(-0.5));
    const auto [u_s, v_s] = erp_pixel_from_dir({0, -1, 0}, 64, 32);
    CHECK(u_s == doctest::Approx(31.5));
    CHECK(v_s == doctest::Approx(31.5));
}

TEST_CASE("erp_pixel_from_dir rejects zero direction") {
    CHECK_THROWS_AS(erp_pixel_from_dir({0, 0, 0}, 64, 32), std::domain_error);
}

TEST_CASE("bilinear sampling hits exact pixels at integer coordinates") {
    const auto img = oracle::random_erp(16, 8, 3, 7);
    double out[3];
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 16; ++u) {
            sample_erp(img, u, v, out);
            for (int c = 0; c < 3; ++c) CHECK(out[c] == img.at(v, u, c));
        }
}

TEST_CASE("horizontal sampling wraps, vertical clamps") {
    const auto img = oracle::random_erp(16, 8, 1, 11);
    double a, b;
    sample_erp(img, -0.25, 3.0, &a);
    const double expect = 0.25 * img.at(3, 15, 0) + 0.75 * img.at(3, 0, 0);
    CHECK(a == doctest::Approx(expect).epsilon(1e-12));
    sample_erp(img, 15.75, 3.0, &b);
    CHECK(b == doctest::Approx(0.25 * img.at(3, 15, 0) + 0.75 * img.at(3, 0, 0)).epsilon(1e-12));
    sample_erp(img, 4.0, -2.0, &a);
    CHECK(a == img.at(0, 4, 0));
    sample_erp(img, 4.0, 9.5, &a);
    CHECK(a == img.at(7, 4, 0));
}

TEST_CASE("face parameterization round-trips") {
    Rng rng(123);
    for (int f = 0; f < 6; ++f)
        for (int k = 0; k < 200; ++k) {
            const double a = rng.uniform() * 1.98 - 0.99;
            const double b = rng.uniform() * 1.98 - 0.99;
            const auto d = cube_face_direction(static_cast<CubeFace>(f), a, b);
            double ra, rb;
            const CubeFace rf = face_from_direction(d, ra, rb);
            CHECK(static_cast<int>(rf) == f);
            CHECK(ra == doctest::Approx(a).epsilon(1e-12));
            CHECK(rb == doctest::Approx(b).epsilon(1e-12));
        }
}

TEST_CASE("face centers point along axes") {
    auto close = [](const SphericalDirection& d, double x, double y, double z) {
        return std::fabs(d.x - x) < 1e-15 && std::fabs(d.y - y) < 1e-15 &&
               std::fabs(d.z - z) < 1e-15;
    };
    CHECK(close(cube_face_direction(CubeFace::Front, 0, 0), 0, 0, 1));
    CHECK(close(cube_face_direction(CubeFace::Right, 0, 0), 1, 0, 0));
    CHECK(close(cube_face_direction(CubeFace::Back, 0, 0), 0, 0, -1));
    CHECK(close(cube_face_direction(CubeFace::Left, 0, 0), -1, 0, 0));
    CHECK(close(cube_face_direction(CubeFace::Top, 0, 0), 0, 1, 0));
    CHECK(close(cube_face_direction(CubeFace::Bottom, 0, 0), 0, -1, 0));
}

TEST_CASE("erp_to_cubemap matches brute-force reference") {
    const auto img = oracle::random_erp(64, 32, 3, 42);
    const auto got = erp_to_cubemap(img, 16);
    const auto want = oracle::erp_to_cubemap(img, 16);
    for (int f = 0; f < 6; ++f)
        CHECK(oracle::max_abs_diff(got.faces[f].data, want.faces[f].data) < 1e-12);
}

TEST_CASE("cubemap_to_erp matches brute-force reference") {
    const auto img = oracle::random_erp(64, 32, 3, 43);
    const auto faces = oracle::erp_to_cubemap(img, 16);
    const auto got = cubemap_to_erp(faces, 64, 32);
    const auto want = oracle::cubemap_to_erp(faces, 64, 32);
    CHECK(oracle::max_abs_diff(got.data, want.data) < 1e-12);
}

TEST_CASE("smooth panorama survives cube round-trip") {
    const auto img = oracle::smooth_erp(128, 64, 3, 5);
    const auto faces = erp_to_cubemap(img, 64);
    const auto back = cubemap_to_erp(faces, 128, 64);
    // exclude two rows at each pole where the cube face resolution is coarsest
    std::vector<double> a, b;
    for (int v = 2; v < 62; ++v)
        for (int u = 0; u < 128; ++u)
            for (int c = 0; c < 3; ++c) {
                a.push_back(img.at(v, u, c));
                b.push_back(back.at(v, u, c));
            }
    CHECK(oracle::psnr(a, b) > 30.0);
}

TEST_CASE("quantized yaw is an exact column roll") {
    const auto img = oracle::random_erp(32, 16, 3, 9);
    const auto got = yaw_rotate_erp(img, yaw_from_pixels(5, 32));
    const auto want = oracle::roll_columns(img, 5);
    CHECK(got.data == want.data);
}

TEST_CASE("yaw by full width is identity") {
    const auto img = oracle::random_erp(32, 16, 1, 10);
    const auto got = yaw_rotate_erp(img, yaw_from_pixels(32, 32));
    CHECK(got.data == img.data);
}

TEST_CASE("quantized yaws compose additively") {
    const auto img = oracle::random_erp(32, 16, 1, 12);
    const auto once = yaw_rotate_erp(yaw_rotate_erp(img, yaw_from_pixels(7, 32)),
                                     yaw_from_pixels(11, 32));
    const auto both = yaw_rotate_erp(img, yaw_from_pixels(18, 32));
    CHECK(once.data == both.data);
}

TEST_CASE("continuous yaw at integer shift equals quantized yaw") {
    const auto img = oracle::random_erp(32, 16, 1, 13);
    const auto q = yaw_rotate_erp(img, yaw_from_pixels(4, 32));
    const auto c = yaw_rotate_erp(img, yaw_continuous(2.0 * oracle::kPi * 4 / 32));
    CHECK(oracle::max_abs_diff(q.data, c.data) < 1e-12);
}

TEST_CASE("negative pixel shift wraps") {
    const YawAngle a = yaw_from_pixels(-3, 32);
    CHECK(a.pixel_shift == 29);
    CHECK(a.quantized);
}

TEST_CASE("polar face mask zeroes the centered half-width square") {
    const MaskGrid m = make_polar_face_mask(8);
    int ones = 0;
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            const bool inside = v >= 2 && v < 6 && u >= 2 && u < 6;
            CHECK(m.at(v, u) == (inside ? 0 : 1));
            ones += m.at(v, u);
        }
    CHECK(ones == 48);
}

TEST_CASE("polar face mask at full resolution") {
    const MaskGrid m = make_polar_face_mask(1024);
    CHECK(m.at(256, 256) == 0);
    CHECK(m.at(767, 767) == 0);
    CHECK(m.at(255, 256) == 1);
    CHECK(m.at(256, 255) == 1);
    CHECK(m.at(768, 767) == 1);
    CHECK(m.at(767, 768) == 1);
    CHECK(static_cast<long>(m.count_ones()) == 1024L * 1024 - 512L * 512);
}

TEST_CASE("polar face mask requires size divisible by four") {
    CHECK_THROWS_AS(make_polar_face_mask(6), std::domain_error);
    CHECK_THROWS_AS(make_polar_face_mask(0), std::domain_error);
}

TEST_CASE("perspective footprint covers exactly one lateral face") {
    PixelGrid persp(16, 16, 3);
    Rng rng(77);
    for (auto& x : persp.data) x = rng.uniform();
    const auto [img, mask] = perspective_to_erp(persp, CubeFace::Front, 64, 32);
    int covered = 0;
    for (int v = 0; v < 32; ++v)
        for (int u = 0; u < 64; ++u) {
            const auto d = dir_from_erp_pixel(u, v, 64, 32);
            double a, b;
            const bool on_face = face_from_direction(d, a, b) == CubeFace::Front;
            CHECK(mask.at(v, u) == (on_face ? 1 : 0));
            if (on_face) {
                covered++;
            } else {
                for (int c = 0; c < 3; ++c) CHECK(img.at(v, u, c) == 0.0);
            }
        }
    CHECK(covered > 0);
    // equator row: one 90-degree face spans a quarter of the columns
    int eq = 0;
    for (int u = 0; u < 64; ++u) eq += mask.at(15, u);
    CHECK(eq == 16);
}

TEST_CASE("perspective footprint area matches sampled solid angle") {
    PixelGrid persp(8, 8, 1, 0.5);
    const int W = 256, H = 128;
    const auto [img, mask] = perspective_to_erp(persp, CubeFace::Left, W, H);
    // row-area weighted mask fraction approximates the face's share of the sphere
    double covered = 0, total = 0;
    for (int v = 0; v < H; ++v) {
        const double lat = oracle::kPi / 2 - (v + 0.5) / H * oracle::kPi;
        const double w = std::cos(lat);
        for (int u = 0; u < W; ++u) {
            total += w;
            if (mask.at(v, u)) covered += w;
        }
    }
    const double weighted_fraction = covered / total;
    // Monte-Carlo estimate of the same solid-angle fraction
    Rng rng(2024);
    int hits = 0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        SphericalDirection d{rng.normal(), rng.normal(), rng.normal()};
        const double len = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
        d.x /= len;
        d.y /= len;
        d.z /= len;
        double a, b;
        if (face_from_direction(d, a, b) == CubeFace::Left) hits++;
    }
    const double mc_fraction = static_cast<double>(hits) / n;
    CHECK(weighted_fraction == doctest::Approx(mc_fraction).epsilon(0.02));
    CHECK(weighted_fraction == doctest::Approx(1.0 / 6.0).epsilon(0.02));
}

TEST_CASE("perspective ingestion rejects polar faces and non-square input") {
    PixelGrid square(8, 8, 1), rect(8, 4, 1);
    CHECK_THROWS_AS(perspective_to_erp(square, CubeFace::Top, 64, 32), std::domain_error);
    CHECK_THROWS_AS(perspective_to_erp(square, CubeFace::Bottom, 64, 32), std::domain_error);
    CHECK_THROWS_AS(perspective_to_erp(rect, CubeFace::Front, 64, 32), std::domain_error);
}

TEST_CASE("panorama type enforces 2:1 aspect") {
    CHECK_THROWS_AS(ErpImage(63, 32, 3), std::domain_error);
    CHECK_NOTHROW(ErpImage(64, 32, 3));
}
