#include "pano360/pano_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pano360 {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kBlobCount = 5;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void normalize3(double& x, double& y, double& z) {
    const double n = std::sqrt(x * x + y * y + z * z);
    if (n < 1e-12) {
        x = 0;
        y = 1;
        z = 0;
        return;
    }
    x /= n;
    y /= n;
    z /= n;
}

void check_spec(const SceneSpec& spec) {
    if (spec.class_id < 0 || spec.class_id >= kSceneFamilies)
        throw std::domain_error("SceneSpec: unknown procedural family");
    if (static_cast<int>(spec.params.size()) != scene_param_count(spec.class_id))
        throw std::domain_error("SceneSpec: wrong parameter count for this family");
}

// clamped bilinear sample of one channel inside [x0, x0+side) x [y0, y0+side)
double crop_sample(const PixelGrid& img, double x, double y, int x0, int y0, int side, int c) {
    const double cx = std::clamp(x, 0.0, side - 1.0);
    const double cy = std::clamp(y, 0.0, side - 1.0);
    const int ix = std::min(static_cast<int>(cx), side - 2 >= 0 ? side - 2 : 0);
    const int iy = std::min(static_cast<int>(cy), side - 2 >= 0 ? side - 2 : 0);
    const double dx = cx - ix, dy = cy - iy;
    const int ix1 = std::min(ix + 1, side - 1), iy1 = std::min(iy + 1, side - 1);
    const double a = img.at(y0 + iy, x0 + ix, c), b = img.at(y0 + iy, x0 + ix1, c);
    const double d = img.at(y0 + iy1, x0 + ix, c), e = img.at(y0 + iy1, x0 + ix1, c);
    return (1 - dx) * (1 - dy) * a + dx * (1 - dy) * b + (1 - dx) * dy * d + dx * dy * e;
}

}  // namespace

int scene_param_count(int class_id) {
    switch (static_cast<SceneFamily>(class_id)) {
        case SceneFamily::GradientSky: return 7;       // top rgb, bottom rgb, sharpness
        case SceneFamily::GreatCircleBands: return 5;  // axis xyz, frequency, phase
        case SceneFamily::CheckerSphere: return 3;     // lon cells, lat cells, contrast
        case SceneFamily::Blobs: return kBlobCount * 7;  // center xyz, width, rgb amplitude
    }
    throw std::domain_error("scene_param_count: unknown procedural family");
}

SceneSpec make_scene(int class_id, std::uint64_t seed) {
    if (class_id < 0 || class_id >= kSceneFamilies)
        throw std::domain_error("make_scene: unknown procedural family");
    SceneSpec spec;
    spec.class_id = class_id;
    spec.seed = seed;
    Rng rng(derive_seed(seed, 10 + static_cast<std::uint64_t>(class_id)));
    switch (static_cast<SceneFamily>(class_id)) {
        case SceneFamily::GradientSky: {
            for (int k = 0; k < 3; ++k) spec.params.push_back(0.55 + 0.4 * rng.uniform());
            for (int k = 0; k < 3; ++k) spec.params.push_back(0.05 + 0.4 * rng.uniform());
            spec.params.push_back(1.5 + 2.5 * rng.uniform());
            break;
        }
        case SceneFamily::GreatCircleBands: {
            double x = rng.normal(), y = rng.normal(), z = rng.normal();
            normalize3(x, y, z);
            spec.params = {x, y, z, 2.0 + 4.0 * rng.uniform(), 2.0 * kPi * rng.uniform()};
            break;
        }
        case SceneFamily::CheckerSphere: {
            spec.params = {static_cast<double>(rng.uniform_int(4, 12)),
                           static_cast<double>(rng.uniform_int(2, 6)),
                           0.5 + 0.4 * rng.uniform()};
            break;
        }
        case SceneFamily::Blobs: {
            for (int i = 0; i < kBlobCount; ++i) {
                double x = rng.normal(), y = rng.normal(), z = rng.normal();
                normalize3(x, y, z);
                spec.params.push_back(x);
                spec.params.push_back(y);
                spec.params.push_back(z);
                spec.params.push_back(0.15 + 0.35 * rng.uniform());
                for (int k = 0; k < 3; ++k) spec.params.push_back(-0.5 + rng.uniform());
            }
            break;
        }
    }
    return spec;
}

void scene_color(const SceneSpec& spec, const SphericalDirection& d, double* rgb) {
    check_spec(spec);
    const auto& p = spec.params;
    switch (static_cast<SceneFamily>(spec.class_id)) {
        case SceneFamily::GradientSky: {
            const double s = 0.5 * (1.0 + std::tanh(p[6] * d.y));
            for (int k = 0; k < 3; ++k) rgb[k] = clamp01(p[3 + k] + (p[k] - p[3 + k]) * s);
            return;
        }
        case SceneFamily::GreatCircleBands: {
            double ax = p[0], ay = p[1], az = p[2];
            normalize3(ax, ay, az);
            const double proj = d.x * ax + d.y * ay + d.z * az;
            for (int k = 0; k < 3; ++k)
                rgb[k] = clamp01(0.5 + 0.45 * std::cos(p[3] * kPi * proj + p[4] + 0.9 * k));
            return;
        }
        case SceneFamily::CheckerSphere: {
            const int nlon = std::max(1, static_cast<int>(std::lround(p[0])));
            const int nlat = std::max(1, static_cast<int>(std::lround(p[1])));
            const double lon = std::atan2(d.x, d.z);
            const double lat = std::asin(std::clamp(d.y, -1.0, 1.0));
            const int cl = std::clamp(
                static_cast<int>(std::floor((lon + kPi) / (2 * kPi) * nlon)), 0, nlon - 1);
            const int cv = std::clamp(
                static_cast<int>(std::floor((kPi / 2 - lat) / kPi * nlat)), 0, nlat - 1);
            const double sign = ((cl + cv) & 1) ? 1.0 : -1.0;
            for (int k = 0; k < 3; ++k)
                rgb[k] = clamp01(0.5 + sign * (p[2] / 2 - 0.03 * k));
            return;
        }
        case SceneFamily::Blobs: {
            for (int k = 0; k < 3; ++k) rgb[k] = 0.5;
            for (int i = 0; i < kBlobCount; ++i) {
                const double* b = &p[static_cast<std::size_t>(i) * 7];
                double cx = b[0], cy = b[1], cz = b[2];
                normalize3(cx, cy, cz);
                const double dot = d.x * cx + d.y * cy + d.z * cz;
                const double w = b[3];
                const double g = std::exp((dot - 1.0) / (w * w));
                for (int k = 0; k < 3; ++k) rgb[k] += b[4 + k] * g;
            }
            for (int k = 0; k < 3; ++k) rgb[k] = clamp01(rgb[k]);
            return;
        }
    }
}

ErpImage gen_procedural_pano(const SceneSpec& spec, int width, int height) {
    check_spec(spec);
    ErpImage img(width, height, 3);
    const int W = width, H = height;
    for (int v = 0; v < H; ++v) {
        const double phi = kPi / 2 - (v + 0.5) / H * kPi;
        const double sy = std::sin(phi), cy = std::cos(phi);
        for (int u = 0; u < W; ++u) {
            // integer column shift before the longitude is computed, so a
            // shifted spec renders the rolled image bit for bit
            const int ue = ((u - spec.yaw_pixels) % W + W) % W;
            const double lam = (ue + 0.5) / W * 2 * kPi - kPi;
            const SphericalDirection d{cy * std::sin(lam), sy, cy * std::cos(lam)};
            scene_color(spec, d, &img.at(v, u, 0));
        }
    }
    return img;
}

PixelGrid render_scene_face(const SceneSpec& spec, CubeFace face, int size) {
    check_spec(spec);
    if (size < 2) throw std::domain_error("render_scene_face: size too small");
    PixelGrid out(size, size, 3);
    for (int j = 0; j < size; ++j) {
        const double b = 2.0 * (j + 0.5) / size - 1.0;
        for (int i = 0; i < size; ++i) {
            const double a = 2.0 * (i + 0.5) / size - 1.0;
            SphericalDirection d = cube_face_direction(face, a, b);
            normalize3(d.x, d.y, d.z);
            scene_color(spec, d, &out.at(j, i, 0));
        }
    }
    return out;
}

PixelGrid ingest_perspective(const PixelGrid& img, int face_size) {
    if (std::min(img.width, img.height) < 8)
        throw std::domain_error("ingest_perspective: image smaller than 8 px");
    if (face_size < 2) throw std::domain_error("ingest_perspective: face size too small");
    const int side = std::min(img.width, img.height);
    const int x0 = (img.width - side) / 2;
    const int y0 = (img.height - side) / 2;
    PixelGrid out(face_size, face_size, img.channels);
    const double scale = static_cast<double>(side) / face_size;
    for (int j = 0; j < face_size; ++j) {
        const double sy = (j + 0.5) * scale - 0.5;
        for (int i = 0; i < face_size; ++i) {
            const double sx = (i + 0.5) * scale - 0.5;
            for (int c = 0; c < img.channels; ++c)
                out.at(j, i, c) = crop_sample(img, sx, sy, x0, y0, side, c);
        }
    }
    return out;
}

PixelGrid fill_inpaint(const PixelGrid& face, const MaskGrid& keep) {
    if (keep.width != face.width || keep.height != face.height)
        throw std::domain_error("fill_inpaint: mask must match the face size");
    keep.validate();
    if (keep.count_ones() == 0)
        throw std::domain_error("fill_inpaint: nothing to anchor an all-masked face");
    if (keep.count_ones() == keep.data.size()) return face;

    PixelGrid cur = face;
    PixelGrid next = face;
    const int W = face.width, H = face.height, C = face.channels;
    for (int iter = 0; iter < 10000; ++iter) {
        double max_update = 0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (keep.at(y, x)) continue;
                for (int c = 0; c < C; ++c) {
                    double s = 0;
                    int n = 0;
                    if (x > 0) s += cur.at(y, x - 1, c), ++n;
                    if (x + 1 < W) s += cur.at(y, x + 1, c), ++n;
                    if (y > 0) s += cur.at(y - 1, x, c), ++n;
                    if (y + 1 < H) s += cur.at(y + 1, x, c), ++n;
                    const double val = s / n;
                    max_update = std::max(max_update, std::abs(val - cur.at(y, x, c)));
                    next.at(y, x, c) = val;
                }
            }
        std::swap(cur, next);
        if (max_update < 1e-4) break;
    }
    return cur;
}

ErpImage refine_poles(const ErpImage& img, int face_size, const Inpainter& inpainter) {
    const int fs = face_size > 0 ? face_size : img.width / 4;
    CubeFaceSet faces = erp_to_cubemap(img, fs);
    const MaskGrid mask = make_polar_face_mask(fs);
    const Inpainter& fill =
        inpainter ? inpainter
                  : Inpainter([](const PixelGrid& f, const MaskGrid& m) { return fill_inpaint(f, m); });
    faces.face(CubeFace::Top) = fill(faces.face(CubeFace::Top), mask);
    faces.face(CubeFace::Bottom) = fill(faces.face(CubeFace::Bottom), mask);
    return cubemap_to_erp(faces, img.width, img.height);
}

void MixPolicy::validate() const {
    if (!(p_pano >= 0.0 && p_pano <= 1.0))
        throw std::domain_error("MixPolicy: p_pano outside [0,1]");
}

BatchItem next_batch(const MixPolicy& policy, Rng& rng) {
    policy.validate();
    BatchItem item;
    item.branch = rng.bernoulli(policy.p_pano) ? BranchTag::Panoramic : BranchTag::Perspective;
    const int class_id = static_cast<int>(rng.uniform_int(0, kSceneFamilies - 1));
    const auto seed = static_cast<std::uint64_t>(rng.uniform_int(0, (1LL << 62)));
    item.scene = make_scene(class_id, seed);
    if (item.branch == BranchTag::Perspective)
        item.face = static_cast<CubeFace>(rng.uniform_int(0, 3));  // lateral faces only
    return item;
}

namespace {

CubeFace face_from_name(const std::string& name) {
    for (int f = 0; f < 6; ++f)
        if (name == cube_face_name(static_cast<CubeFace>(f))) return static_cast<CubeFace>(f);
    throw std::runtime_error("manifest: unknown face name '" + name + "'");
}

std::string format_params(const std::vector<double>& params) {
    std::string out;
    char buf[40];
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", params[i]);
        if (i) out += ',';
        out += buf;
    }
    return out.empty() ? "-" : out;
}

std::vector<double> parse_params(const std::string& csv) {
    std::vector<double> out;
    if (csv == "-") return out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string branch, kind;
        ManifestEntry e;
        if (!(ss >> branch >> kind))
            throw std::runtime_error("manifest: malformed line " + std::to_string(lineno));
        if (branch == "pano")
            e.branch = BranchTag::Panoramic;
        else if (branch == "persp")
            e.branch = BranchTag::Perspective;
        else
            throw std::runtime_error("manifest: unknown branch tag at line " +
                                     std::to_string(lineno));
        if (kind == "scene") {
            std::string params;
            if (!(ss >> e.scene.class_id >> e.scene.seed >> e.scene.yaw_pixels >> params))
                throw std::runtime_error("manifest: malformed scene at line " +
                                         std::to_string(lineno));
            e.scene.params = parse_params(params);
        } else if (kind == "file") {
            e.from_file = true;
            if (!(ss >> e.path >> e.scene.class_id))
                throw std::runtime_error("manifest: malformed file record at line " +
                                         std::to_string(lineno));
        } else {
            throw std::runtime_error("manifest: unknown record kind at line " +
                                     std::to_string(lineno));
        }
        if (e.branch == BranchTag::Perspective) {
            std::string face;
            if (!(ss >> face))
                throw std::runtime_error("manifest: perspective record missing face at line " +
                                         std::to_string(lineno));
            e.face = face_from_name(face);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& e : entries) {
        out << (e.branch == BranchTag::Panoramic ? "pano" : "persp") << ' ';
        if (e.from_file)
            out << "file " << e.path << ' ' << e.scene.class_id;
        else
            out << "scene " << e.scene.class_id << ' ' << e.scene.seed << ' '
                << e.scene.yaw_pixels << ' ' << format_params(e.scene.params);
        if (e.branch == BranchTag::Perspective) out << ' ' << cube_face_name(e.face);
        out << '\n';
    }
}

}  // namespace pano360
