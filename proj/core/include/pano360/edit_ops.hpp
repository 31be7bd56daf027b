#pragma once

#include <cstdint>

#include "pano360/dit_core.hpp"
#include "pano360/image.hpp"

namespace pano360 {

// Training-free edit request. mask is at source pixel resolution:
// 1 = keep/reference, 0 = regenerate.
struct EditRequest {
    ErpImage source;
    MaskGrid mask;
    Condition c;
    double replace_until = 0.4;  // fraction of denoising steps using replacement
};

// out = mask (*) reference + (1 - mask) (*) current, token positions untouched.
TokenGrid token_replace_step(const TokenGrid& current, const TokenGrid& reference,
                             const MaskGrid& token_mask);

// Inverts the source to a noise trajectory, then denoises fresh seeded noise
// while substituting kept tokens with the trajectory tokens at matching
// nodes during the first ceil(replace_until * steps) steps. With an empty
// replacement window (or an all-zero mask) this is exactly plain sampling
// with the same seed.
ErpImage inpaint(const PanoModel& m, const EditRequest& req, int steps, double g,
                 std::uint64_t seed);

// Same mechanism with the keep mask given directly as the footprint of a
// partial image already placed in ERP coordinates.
ErpImage outpaint(const PanoModel& m, const ErpImage& partial, const MaskGrid& footprint,
                  const Condition& c, int steps, double g, std::uint64_t seed,
                  double replace_until = 0.4);

}  // namespace pano360
