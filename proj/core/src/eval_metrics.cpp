#include "pano360/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "pano360/token_lattice.hpp"

namespace pano360 {

namespace {

constexpr double kPsnrClamp = 99.0;
constexpr double kPi = 3.14159265358979323846;

double psnr_from_mse(double mse) {
    if (mse <= 0) return kPsnrClamp;
    return std::min(kPsnrClamp, 10.0 * std::log10(1.0 / mse));
}

// mean |col u - col u+1 mod W| over rows and channels
double column_pair_diff(const ErpImage& img, int u) {
    const int un = (u + 1) % img.width;
    double s = 0;
    for (int v = 0; v < img.height; ++v)
        for (int c = 0; c < img.channels; ++c) s += std::abs(img.at(v, u, c) - img.at(v, un, c));
    return s / (static_cast<double>(img.height) * img.channels);
}

}  // namespace

double image_psnr(const ErpImage& a, const ErpImage& b, int skip_polar_rows) {
    if (!a.same_shape(b)) throw std::domain_error("image_psnr: shape mismatch");
    if (skip_polar_rows < 0 || 2 * skip_polar_rows >= a.height)
        throw std::domain_error("image_psnr: excluded band swallows the image");
    double s = 0;
    std::size_t n = 0;
    for (int v = skip_polar_rows; v < a.height - skip_polar_rows; ++v)
        for (int u = 0; u < a.width; ++u)
            for (int c = 0; c < a.channels; ++c) {
                const double d = a.at(v, u, c) - b.at(v, u, c);
                s += d * d;
                ++n;
            }
    return psnr_from_mse(s / n);
}

double seam_discrepancy(const ErpImage& img) {
    if (img.width < 4) throw std::domain_error("seam_discrepancy: image too narrow");
    const double seam = column_pair_diff(img, img.width - 1);
    double interior = 0;
    for (int u = 0; u + 1 < img.width; ++u) interior += column_pair_diff(img, u);
    interior /= (img.width - 1);
    constexpr double kEps = 1e-12;
    return (seam + kEps) / (interior + kEps);
}

double rotation_consistency(const PanoModel& m, const Condition& c,
                            const std::vector<YawAngle>& angles, int steps, double g,
                            std::uint64_t seed) {
    if (angles.empty()) throw std::domain_error("rotation_consistency: no angles");
    const int patch = m.config().patch;
    const TokenGrid noise = noise_latent(m.config(), seed);
    const ErpImage base = m.decode(sample_latent_from(m, noise, c, steps, g));
    double acc = 0;
    for (const YawAngle& a : angles) {
        if (!a.quantized)
            throw std::domain_error("rotation_consistency: quantized angles required");
        if (a.pixel_shift % patch != 0)
            throw std::domain_error(
                "rotation_consistency: shift must be a whole number of token columns");
        const ErpImage rotated_after = yaw_rotate_erp(base, a);
        const TokenGrid rolled = roll_token_columns(noise, a.pixel_shift / patch);
        const ErpImage sampled_rotated = m.decode(sample_latent_from(m, rolled, c, steps, g));
        acc += image_psnr(rotated_after, sampled_rotated);
    }
    return acc / angles.size();
}

double pole_energy(const ErpImage& img, int band) {
    if (band < 1 || band >= img.height / 2)
        throw std::domain_error("pole_energy: band must fit above the equator");
    const int H = img.height, W = img.width;
    auto lap_row_energy = [&](int v) {
        const int vu = std::max(v - 1, 0);
        const int vd = std::min(v + 1, H - 1);
        double s = 0;
        for (int u = 0; u < W; ++u) {
            const int ul = (u + W - 1) % W;
            const int ur = (u + 1) % W;
            for (int c = 0; c < img.channels; ++c) {
                // Difference form keeps constants at exactly zero.
                const double x = img.at(v, u, c);
                const double lap = (x - img.at(v, ul, c)) + (x - img.at(v, ur, c)) +
                                   (x - img.at(vu, u, c)) + (x - img.at(vd, u, c));
                s += lap * lap;
            }
        }
        return s / (static_cast<double>(W) * img.channels);
    };
    double num = 0, den = 0;
    for (int v = 0; v < band; ++v) {
        const double lat = kPi / 2 - (v + 0.5) / H * kPi;
        const double w = std::cos(lat);
        num += w * lap_row_energy(v);
        den += w;
        const int vb = H - 1 - v;
        const double latb = kPi / 2 - (vb + 0.5) / H * kPi;
        const double wb = std::cos(latb);
        num += wb * lap_row_energy(vb);
        den += wb;
    }
    return num / den;
}

double roundtrip_psnr(const ErpImage& img, int face_size) {
    const int fs = face_size > 0 ? face_size : img.width / 4;
    const ErpImage back = cubemap_to_erp(erp_to_cubemap(img, fs), img.width, img.height);
    return image_psnr(img, back, 2);
}

void write_metric_report(std::ostream& out, const MetricReport& rep) {
    out << "seam_ratio=" << rep.seam_ratio << "\n";
    out << "seam_samples=" << rep.seam_samples << "\n";
    out << "rotation_psnr=" << rep.rotation_psnr << "\n";
    out << "rotation_samples=" << rep.rotation_samples << "\n";
    out << "pole_energy=" << rep.pole_energy << "\n";
    out << "pole_samples=" << rep.pole_samples << "\n";
    out << "roundtrip_psnr=" << rep.roundtrip_psnr << "\n";
    out << "roundtrip_samples=" << rep.roundtrip_samples << "\n";
}

PixelGrid metric_report_plot(const MetricReport& rep) {
    const int W = 256, H = 128;
    PixelGrid plot(W, H, 3, 1.0);
    const double values[4] = {rep.seam_ratio, rep.rotation_psnr / kPsnrClamp,
                              rep.pole_energy, rep.roundtrip_psnr / kPsnrClamp};
    const double colors[4][3] = {
        {0.85, 0.35, 0.25}, {0.25, 0.55, 0.85}, {0.55, 0.75, 0.3}, {0.7, 0.45, 0.8}};
    double vmax = 1.0;
    for (double v : values) vmax = std::max(vmax, v);
    for (int i = 0; i < 4; ++i) {
        const double frac = std::clamp(values[i] / vmax, 0.0, 1.0);
        const int bar_h = static_cast<int>(std::lround(frac * (H - 8)));
        const int x0 = 8 + i * (W - 16) / 4;
        const int x1 = x0 + (W - 16) / 4 - 8;
        for (int y = H - 4 - bar_h; y < H - 4; ++y)
            for (int x = x0; x < x1; ++x)
                for (int c = 0; c < 3; ++c) plot.at(y, x, c) = colors[i][c];
    }
    return plot;
}

}  // namespace pano360
