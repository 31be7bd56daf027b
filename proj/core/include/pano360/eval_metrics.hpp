#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pano360/dit_core.hpp"
#include "pano360/image.hpp"
#include "pano360/sphere_geometry.hpp"

namespace pano360 {

// Scalar quality summary with the number of samples behind each entry.
struct MetricReport {
    double seam_ratio = 0;
    double rotation_psnr = 0;
    double pole_energy = 0;
    double roundtrip_psnr = 0;
    int seam_samples = 0;
    int rotation_samples = 0;
    int pole_samples = 0;
    int roundtrip_samples = 0;
};

// Peak-signal-to-noise ratio in dB for unit-range images, clamped to 99 dB
// so identical inputs stay finite. skip_polar_rows excludes that many rows
// at both the top and the bottom.
double image_psnr(const ErpImage& a, const ErpImage& b, int skip_polar_rows = 0);

// Mean |I[:,0] - I[:,W-1]| over the mean of the interior adjacent-column
// differences; 1.0 means the wrap seam is indistinguishable from the
// interior. Constant images define the ratio as 1.0.
double seam_discrepancy(const ErpImage& img);

// For each quantized angle: PSNR between rotating a sample afterward and
// sampling from rotated noise. Angles must be multiples of the codec patch
// so they act as token-column rolls. Returns the mean PSNR in dB.
double rotation_consistency(const PanoModel& m, const Condition& c,
                            const std::vector<YawAngle>& angles, int steps, double g,
                            std::uint64_t seed);

// Mean squared 4-neighbor Laplacian (horizontal wrap, vertical clamp),
// cos-latitude weighted, over the top and bottom `band` rows.
double pole_energy(const ErpImage& img, int band);

// PSNR of the cubemap round trip, excluding 2 rows at each pole.
// face_size 0 means width/4.
double roundtrip_psnr(const ErpImage& img, int face_size = 0);

// Line-oriented key=value records.
void write_metric_report(std::ostream& out, const MetricReport& rep);

// Simple bar-plot rendering of the report, for PNG emission.
PixelGrid metric_report_plot(const MetricReport& rep);

}  // namespace pano360
