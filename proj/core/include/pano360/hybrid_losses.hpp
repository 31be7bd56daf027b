#pragma once

#include "pano360/dit_core.hpp"
#include "pano360/image.hpp"
#include "pano360/sphere_geometry.hpp"
#include "pano360/token_lattice.hpp"

namespace pano360 {

struct LossWeights {
    double lambda1 = 0.5;  // cube
    double lambda2 = 0.5;  // yaw
    void validate() const;
};

struct LossReport {
    double total = 0;
    double mse = 0;
    double cube = 0;
    double yaw = 0;
    double perspective = 0;
};

// What the auxiliary (cube/yaw) losses compare the raw prediction against.
// Residual is the literal xt - eps target; Noise uses the sampled eps so both
// sides live in the same space as the principal objective.
enum class AuxTarget { Residual, Noise };

// Mean squared difference over mask-selected tokens (all d entries of each),
// normalized by selected count x d. Null mask means all tokens.
double masked_mse(const TokenGrid& target, const TokenGrid& pred,
                  const MaskGrid* mask = nullptr);
// d masked_mse / d pred.
TokenGrid masked_mse_grad(const TokenGrid& target, const TokenGrid& pred,
                          const MaskGrid* mask = nullptr);

// MSE( Rotate(eps_pred, a), Rotate(target, a) ) on token columns. Quantized
// yaw only. The reduction iterates source columns in a fixed order, so the
// value is bit-identical for every shift.
double yaw_loss(const NoiseBundle& b, const YawAngle& a, AuxTarget mode = AuxTarget::Residual);
TokenGrid yaw_loss_grad(const NoiseBundle& b, const YawAngle& a,
                        AuxTarget mode = AuxTarget::Residual);

// MSE( CubeMap(eps_pred), CubeMap(target) ): the token grid is treated as an
// equirectangular field with d channels, so it must be twice as wide as tall.
// face_size 0 means cols/4.
double cube_loss(const NoiseBundle& b, int face_size = 0, AuxTarget mode = AuxTarget::Residual);
TokenGrid cube_loss_grad(const NoiseBundle& b, int face_size = 0,
                         AuxTarget mode = AuxTarget::Residual);

// mse + lambda1*cube + lambda2*yaw, itemized. The principal mse compares
// eps_pred against the sampled noise.
LossReport pano_loss(const NoiseBundle& b, const YawAngle& a, const LossWeights& w,
                     int face_size = 0, AuxTarget mode = AuxTarget::Residual);
TokenGrid pano_loss_grad(const NoiseBundle& b, const YawAngle& a, const LossWeights& w,
                         int face_size = 0, AuxTarget mode = AuxTarget::Residual);

// masked_mse against the sampled noise on the token-resolution footprint mask.
double perspective_loss(const NoiseBundle& b, const MaskGrid& token_mask);
TokenGrid perspective_loss_grad(const NoiseBundle& b, const MaskGrid& token_mask);

// Pixel mask to token mask: a token is selected iff at least half of its
// patch pixels are selected.
MaskGrid token_mask_from_pixels(const MaskGrid& pixel_mask, int patch);

}  // namespace pano360
