#include "pano360/hybrid_losses.hpp"

#include <cmath>
#include <stdexcept>

namespace pano360 {

namespace {

void check_bundle(const NoiseBundle& b) {
    const auto& p = b.eps_pred;
    if (p.rows != b.eps.rows || p.cols != b.eps.cols || p.dim != b.eps.dim ||
        p.rows != b.xt.rows || p.cols != b.xt.cols || p.dim != b.xt.dim)
        throw std::domain_error("loss: bundle grids disagree in shape");
}

// target field the aux losses compare the raw prediction against
TokenGrid aux_target(const NoiseBundle& b, AuxTarget mode) {
    if (mode == AuxTarget::Noise) return b.eps;
    TokenGrid out(b.xt.rows, b.xt.cols, b.xt.dim);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = b.xt.data[i] - b.eps.data[i];
    return out;
}

// Bilinear taps for resampling an H x W equirectangular field onto six
// face_size x face_size cube faces. Tap order matches sample_erp exactly.
struct CubeTaps {
    int outputs = 0;                 // 6 * F * F
    std::vector<std::size_t> idx;    // 4 per output, token index into H*W
    std::vector<double> w;           // 4 per output
};

CubeTaps build_cube_taps(int rows, int cols, int face_size) {
    CubeTaps taps;
    taps.outputs = 6 * face_size * face_size;
    taps.idx.resize(static_cast<std::size_t>(taps.outputs) * 4);
    taps.w.resize(static_cast<std::size_t>(taps.outputs) * 4);
    std::size_t o = 0;
    for (int f = 0; f < 6; ++f) {
        for (int j = 0; j < face_size; ++j) {
            const double bb = (j + 0.5) / face_size * 2.0 - 1.0;
            for (int i = 0; i < face_size; ++i, ++o) {
                const double aa = (i + 0.5) / face_size * 2.0 - 1.0;
                const SphericalDirection d =
                    cube_face_direction(static_cast<CubeFace>(f), aa, bb);
                const auto [u, v] = erp_pixel_from_dir(d, cols, rows);
                const double fu = std::floor(u), fv = std::floor(v);
                const double du = u - fu, dv = v - fv;
                int u0 = static_cast<int>(fu) % cols;
                if (u0 < 0) u0 += cols;
                const int u1 = (u0 + 1) % cols;
                int v0 = static_cast<int>(fv);
                int v1 = v0 + 1;
                v0 = v0 < 0 ? 0 : (v0 >= rows ? rows - 1 : v0);
                v1 = v1 < 0 ? 0 : (v1 >= rows ? rows - 1 : v1);
                taps.idx[4 * o + 0] = static_cast<std::size_t>(v0) * cols + u0;
                taps.idx[4 * o + 1] = static_cast<std::size_t>(v0) * cols + u1;
                taps.idx[4 * o + 2] = static_cast<std::size_t>(v1) * cols + u0;
                taps.idx[4 * o + 3] = static_cast<std::size_t>(v1) * cols + u1;
                taps.w[4 * o + 0] = (1 - du) * (1 - dv);
                taps.w[4 * o + 1] = du * (1 - dv);
                taps.w[4 * o + 2] = (1 - du) * dv;
                taps.w[4 * o + 3] = dv * du;
            }
        }
    }
    return taps;
}

int resolve_face_size(const NoiseBundle& b, int face_size) {
    if (b.eps_pred.cols != 2 * b.eps_pred.rows)
        throw std::domain_error("cube_loss: token grid must be twice as wide as tall");
    const int fs = face_size > 0 ? face_size : b.eps_pred.cols / 4;
    if (fs < 2) throw std::domain_error("cube_loss: face size too small");
    return fs;
}

}  // namespace

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw std::domain_error("LossWeights: negative coefficient");
}

double masked_mse(const TokenGrid& target, const TokenGrid& pred, const MaskGrid* mask) {
    if (target.rows != pred.rows || target.cols != pred.cols || target.dim != pred.dim)
        throw std::domain_error("masked_mse: shape mismatch");
    if (mask && (mask->height != pred.rows || mask->width != pred.cols))
        throw std::domain_error("masked_mse: mask must be at token resolution");
    double sum = 0;
    std::size_t selected = 0;
    for (int r = 0; r < pred.rows; ++r)
        for (int c = 0; c < pred.cols; ++c) {
            if (mask && !mask->at(r, c)) continue;
            selected++;
            const double* tp = target.token(r, c);
            const double* pp = pred.token(r, c);
            for (int k = 0; k < pred.dim; ++k) {
                const double d = pp[k] - tp[k];
                sum += d * d;
            }
        }
    if (selected == 0) throw std::domain_error("masked_mse: empty mask");
    return sum / (static_cast<double>(selected) * pred.dim);
}

TokenGrid masked_mse_grad(const TokenGrid& target, const TokenGrid& pred, const MaskGrid* mask) {
    if (target.rows != pred.rows || target.cols != pred.cols || target.dim != pred.dim)
        throw std::domain_error("masked_mse: shape mismatch");
    if (mask && (mask->height != pred.rows || mask->width != pred.cols))
        throw std::domain_error("masked_mse: mask must be at token resolution");
    std::size_t selected = 0;
    if (mask) {
        selected = mask->count_ones();
    } else {
        selected = static_cast<std::size_t>(pred.rows) * pred.cols;
    }
    if (selected == 0) throw std::domain_error("masked_mse: empty mask");
    const double scale = 2.0 / (static_cast<double>(selected) * pred.dim);
    TokenGrid grad(pred.rows, pred.cols, pred.dim);
    for (int r = 0; r < pred.rows; ++r)
        for (int c = 0; c < pred.cols; ++c) {
            if (mask && !mask->at(r, c)) continue;
            const double* tp = target.token(r, c);
            const double* pp = pred.token(r, c);
            double* gp = grad.token(r, c);
            for (int k = 0; k < pred.dim; ++k) gp[k] = scale * (pp[k] - tp[k]);
        }
    return grad;
}

double yaw_loss(const NoiseBundle& b, const YawAngle& a, AuxTarget mode) {
    check_bundle(b);
    if (!a.quantized)
        throw std::domain_error("yaw_loss: continuous angles are not valid training shifts");
    const TokenGrid tgt = aux_target(b, mode);
    const TokenGrid& p = b.eps_pred;
    const int W = p.cols;
    if (a.pixel_shift < 0 || a.pixel_shift >= W)
        throw std::domain_error("yaw_loss: shift outside the column range");
    // Rotate both fields by a, then take the mean squared difference. The
    // rotation is a column permutation, so iterating source columns visits
    // the same residuals in a shift-independent order.
    double sum = 0;
    for (int r = 0; r < p.rows; ++r)
        for (int src = 0; src < W; ++src) {
            const double* pp = p.token(r, src);
            const double* tp = tgt.token(r, src);
            for (int k = 0; k < p.dim; ++k) {
                const double d = pp[k] - tp[k];
                sum += d * d;
            }
        }
    return sum / (static_cast<double>(p.rows) * W * p.dim);
}

TokenGrid yaw_loss_grad(const NoiseBundle& b, const YawAngle& a, AuxTarget mode) {
    check_bundle(b);
    if (!a.quantized)
        throw std::domain_error("yaw_loss: continuous angles are not valid training shifts");
    const TokenGrid tgt = aux_target(b, mode);
    const TokenGrid& p = b.eps_pred;
    const double scale = 2.0 / (static_cast<double>(p.rows) * p.cols * p.dim);
    TokenGrid grad(p.rows, p.cols, p.dim);
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
            const double* pp = p.token(r, c);
            const double* tp = tgt.token(r, c);
            double* gp = grad.token(r, c);
            for (int k = 0; k < p.dim; ++k) gp[k] = scale * (pp[k] - tp[k]);
        }
    return grad;
}

double cube_loss(const NoiseBundle& b, int face_size, AuxTarget mode) {
    check_bundle(b);
    const int fs = resolve_face_size(b, face_size);
    const TokenGrid tgt = aux_target(b, mode);
    const TokenGrid& p = b.eps_pred;
    const CubeTaps taps = build_cube_taps(p.rows, p.cols, fs);
    const int d = p.dim;
    double sum = 0;
    for (int o = 0; o < taps.outputs; ++o) {
        const std::size_t* idx = &taps.idx[4 * static_cast<std::size_t>(o)];
        const double* w = &taps.w[4 * static_cast<std::size_t>(o)];
        for (int k = 0; k < d; ++k) {
            double rp = 0, rt = 0;
            for (int tap = 0; tap < 4; ++tap) {
                rp += w[tap] * p.data[idx[tap] * d + k];
                rt += w[tap] * tgt.data[idx[tap] * d + k];
            }
            const double diff = rp - rt;
            sum += diff * diff;
        }
    }
    return sum / (static_cast<double>(taps.outputs) * d);
}

TokenGrid cube_loss_grad(const NoiseBundle& b, int face_size, AuxTarget mode) {
    check_bundle(b);
    const int fs = resolve_face_size(b, face_size);
    const TokenGrid tgt = aux_target(b, mode);
    const TokenGrid& p = b.eps_pred;
    const CubeTaps taps = build_cube_taps(p.rows, p.cols, fs);
    const int d = p.dim;
    const double scale = 2.0 / (static_cast<double>(taps.outputs) * d);
    TokenGrid grad(p.rows, p.cols, p.dim);
    for (int o = 0; o < taps.outputs; ++o) {
        const std::size_t* idx = &taps.idx[4 * static_cast<std::size_t>(o)];
        const double* w = &taps.w[4 * static_cast<std::size_t>(o)];
        for (int k = 0; k < d; ++k) {
            double rp = 0, rt = 0;
            for (int tap = 0; tap < 4; ++tap) {
                rp += w[tap] * p.data[idx[tap] * d + k];
                rt += w[tap] * tgt.data[idx[tap] * d + k];
            }
            const double res = scale * (rp - rt);
            for (int tap = 0; tap < 4; ++tap) grad.data[idx[tap] * d + k] += w[tap] * res;
        }
    }
    return grad;
}

LossReport pano_loss(const NoiseBundle& b, const YawAngle& a, const LossWeights& w, int face_size,
                     AuxTarget mode) {
    w.validate();
    LossReport rep;
    rep.mse = masked_mse(b.eps, b.eps_pred);
    rep.cube = cube_loss(b, face_size, mode);
    rep.yaw = yaw_loss(b, a, mode);
    rep.total = rep.mse + w.lambda1 * rep.cube + w.lambda2 * rep.yaw;
    return rep;
}

TokenGrid pano_loss_grad(const NoiseBundle& b, const YawAngle& a, const LossWeights& w,
                         int face_size, AuxTarget mode) {
    w.validate();
    TokenGrid grad = masked_mse_grad(b.eps, b.eps_pred);
    if (w.lambda1 > 0) {
        const TokenGrid g = cube_loss_grad(b, face_size, mode);
        for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += w.lambda1 * g.data[i];
    }
    if (w.lambda2 > 0) {
        const TokenGrid g = yaw_loss_grad(b, a, mode);
        for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += w.lambda2 * g.data[i];
    }
    return grad;
}

double perspective_loss(const NoiseBundle& b, const MaskGrid& token_mask) {
    check_bundle(b);
    return masked_mse(b.eps, b.eps_pred, &token_mask);
}

TokenGrid perspective_loss_grad(const NoiseBundle& b, const MaskGrid& token_mask) {
    check_bundle(b);
    return masked_mse_grad(b.eps, b.eps_pred, &token_mask);
}

MaskGrid token_mask_from_pixels(const MaskGrid& pixel_mask, int patch) {
    if (patch <= 0) throw std::domain_error("token_mask_from_pixels: bad patch size");
    if (pixel_mask.width % patch != 0 || pixel_mask.height % patch != 0)
        throw std::domain_error("token_mask_from_pixels: mask dims must be divisible by patch");
    const int H = pixel_mask.height / patch, W = pixel_mask.width / patch;
    MaskGrid out(W, H, 0);
    const int half = patch * patch;  // threshold: 2*count >= patch^2
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            int count = 0;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    count += pixel_mask.at(r * patch + py, c * patch + px);
            out.at(r, c) = 2 * count >= half ? 1 : 0;
        }
    return out;
}

}  // namespace pano360
