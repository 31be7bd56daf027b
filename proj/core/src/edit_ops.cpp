#include "pano360/edit_ops.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pano360/hybrid_losses.hpp"

namespace pano360 {

TokenGrid token_replace_step(const TokenGrid& current, const TokenGrid& reference,
                             const MaskGrid& token_mask) {
    if (current.rows != reference.rows || current.cols != reference.cols ||
        current.dim != reference.dim)
        throw std::domain_error("token_replace_step: grid shapes differ");
    if (token_mask.width != current.cols || token_mask.height != current.rows)
        throw std::domain_error("token_replace_step: mask must be at token resolution");
    TokenGrid out = current;
    for (int r = 0; r < current.rows; ++r)
        for (int c = 0; c < current.cols; ++c)
            if (token_mask.at(r, c))
                std::copy(reference.token(r, c), reference.token(r, c) + current.dim,
                          out.token(r, c));
    return out;
}

ErpImage inpaint(const PanoModel& m, const EditRequest& req, int steps, double g,
                 std::uint64_t seed) {
    if (!(req.replace_until >= 0.0 && req.replace_until <= 1.0))
        throw std::domain_error("inpaint: replace_until outside [0,1]");
    const ModelConfig& cfg = m.config();
    if (req.source.width != cfg.width || req.source.height != cfg.height)
        throw std::domain_error("inpaint: source resolution does not match the model");
    if (req.mask.width != cfg.width || req.mask.height != cfg.height)
        throw std::domain_error("inpaint: mask must be at source pixel resolution");

    const MaskGrid token_mask = token_mask_from_pixels(req.mask, cfg.patch);
    std::vector<TokenGrid> trajectory;
    invert_latent(m, m.encode(req.source), req.c, steps, g, &trajectory);

    const int replace_steps = static_cast<int>(std::ceil(req.replace_until * steps));
    const bool any_kept = token_mask.count_ones() > 0;

    TokenGrid start = noise_latent(cfg, seed);
    if (any_kept && replace_steps >= 1)
        start = token_replace_step(start, trajectory[static_cast<std::size_t>(steps)],
                                   token_mask);
    const TokenGrid out = sample_latent_from(
        m, std::move(start), req.c, steps, g,
        [&](int node, double, TokenGrid& x) {
            if (!any_kept || node == steps) return;
            // nodes steps-1 .. steps-replace_steps form the replacement window
            if (node >= steps - replace_steps)
                x = token_replace_step(x, trajectory[static_cast<std::size_t>(node)],
                                       token_mask);
        });
    return m.decode(out);
}

ErpImage outpaint(const PanoModel& m, const ErpImage& partial, const MaskGrid& footprint,
                  const Condition& c, int steps, double g, std::uint64_t seed,
                  double replace_until) {
    EditRequest req;
    req.source = partial;
    req.mask = footprint;
    req.c = c;
    req.replace_until = replace_until;
    return inpaint(m, req, steps, g, seed);
}

}  // namespace pano360
