#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pano360/image.hpp"
#include "pano360/rng.hpp"
#include "pano360/sphere_geometry.hpp"

namespace pano360 {

// Procedural scene families. Each renders an analytic function of the view
// direction, so panoramas are seam-free and exactly yaw-equivariant.
enum class SceneFamily : int {
    GradientSky = 0,
    GreatCircleBands = 1,
    CheckerSphere = 2,
    Blobs = 3,
};

constexpr int kSceneFamilies = 4;

// (class_id, seed, params, yaw_pixels) fully determine the rendered image.
// yaw_pixels is a quantized longitude offset: rendering with yaw_pixels + s
// equals rolling the rendered columns by s, bit for bit.
struct SceneSpec {
    int class_id = 0;
    std::uint64_t seed = 0;
    std::vector<double> params;
    int yaw_pixels = 0;
};

int scene_param_count(int class_id);
SceneSpec make_scene(int class_id, std::uint64_t seed);

// Analytic scene color at a unit direction; rgb must hold 3 values.
void scene_color(const SceneSpec& spec, const SphericalDirection& d, double* rgb);

ErpImage gen_procedural_pano(const SceneSpec& spec, int width, int height);

// Renders the scene seen through one 90-degree cube-face camera. This is the
// stand-in for a perspective photograph of the same world.
PixelGrid render_scene_face(const SceneSpec& spec, CubeFace face, int size);

// Center crop to square, then bilinear resize to face_size.
PixelGrid ingest_perspective(const PixelGrid& img, int face_size);

// Iterative harmonic fill: pixels where keep == 0 are repeatedly replaced by
// the mean of their in-bounds 4-neighbors until the largest update drops
// below 1e-4 or 10^4 sweeps pass. keep == 1 pixels are fixed.
PixelGrid fill_inpaint(const PixelGrid& face, const MaskGrid& keep);

using Inpainter = std::function<PixelGrid(const PixelGrid&, const MaskGrid&)>;

// Cubemap round trip with the central square of the top and bottom faces
// re-filled by the inpainter (default: fill_inpaint). Lateral faces pass
// through untouched. face_size 0 means width/4.
ErpImage refine_poles(const ErpImage& img, int face_size = 0, const Inpainter& inpainter = {});

struct MixPolicy {
    double p_pano = 0.7;
    void validate() const;
};

enum class BranchTag { Panoramic, Perspective };

// One training batch: a scene plus, on the perspective branch, the lateral
// face the photograph looks through.
struct BatchItem {
    BranchTag branch = BranchTag::Panoramic;
    SceneSpec scene;
    CubeFace face = CubeFace::Front;
};

// Draws the branch i.i.d. per call and a fresh procedural scene.
BatchItem next_batch(const MixPolicy& policy, Rng& rng);

// Line-oriented dataset manifest: procedural scene records or image paths,
// each tagged with its training branch.
struct ManifestEntry {
    BranchTag branch = BranchTag::Panoramic;
    bool from_file = false;
    std::string path;
    SceneSpec scene;
    CubeFace face = CubeFace::Front;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace pano360
