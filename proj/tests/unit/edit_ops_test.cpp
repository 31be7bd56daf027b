#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "pano360/edit_ops.hpp"
#include "pano360/eval_metrics.hpp"
#include "pano360/hybrid_losses.hpp"
#include "pano360/rng.hpp"

using namespace pano360;

namespace {

ModelConfig micro_config() {
    ModelConfig c;
    c.blocks = 2;
    c.heads = 1;
    c.dim = 8;
    c.patch = 2;
    c.cond_classes = 3;
    c.channels = 1;
    c.height = 8;
    c.width = 16;
    c.mlp_mult = 2;
    return c;
}

PanoModel perturbed_model(std::uint64_t seed) {
    PanoModel m(micro_config(), seed);
    Rng rng(derive_seed(seed, 90));
    for (auto& [name, tensor] : m.params())
        for (double& v : tensor.v) v += 0.1 * rng.normal();
    return m;
}

ErpImage smooth_source() {
    ErpImage img(16, 8, 1);
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 16; ++u)
            img.at(v, u, 0) =
                0.5 + 0.3 * std::sin(2.0 * 3.14159265358979323846 * u / 16.0) *
                          std::cos(3.14159265358979323846 * v / 8.0);
    return img;
}

}  // namespace

TEST_CASE("token replacement is a masked copy") {
    TokenGrid cur(2, 4, 3, 1.0);
    TokenGrid ref(2, 4, 3, 2.0);
    MaskGrid ones(4, 2, 1);
    MaskGrid zeros(4, 2, 0);
    MaskGrid half(4, 2, 0);
    half.at(0, 1) = 1;
    half.at(1, 2) = 1;

    CHECK(token_replace_step(cur, ref, ones).data == ref.data);
    CHECK(token_replace_step(cur, ref, zeros).data == cur.data);

    TokenGrid mixed = token_replace_step(cur, ref, half);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c)
            for (int k = 0; k < 3; ++k)
                CHECK(mixed.at(r, c, k) == (half.at(r, c) ? 2.0 : 1.0));
    // Applying the same replacement twice changes nothing further.
    CHECK(token_replace_step(mixed, ref, half).data == mixed.data);

    TokenGrid wrong(2, 4, 2, 0.0);
    CHECK_THROWS_AS(token_replace_step(cur, wrong, ones), std::domain_error);
    MaskGrid pixel_res(8, 4, 1);
    CHECK_THROWS_AS(token_replace_step(cur, ref, pixel_res), std::domain_error);
}

TEST_CASE("all-regenerate inpainting is plain sampling") {
    PanoModel m = perturbed_model(5);
    EditRequest req;
    req.source = smooth_source();
    req.mask = MaskGrid(16, 8, 0);
    req.c = Condition{1, false};

    ErpImage edited = inpaint(m, req, 6, 1.5, 77);
    ErpImage plain = sample(m, req.c, 6, 1.5, 77);
    CHECK(edited.data == plain.data);
}

TEST_CASE("full replacement restores the source exactly") {
    PanoModel m = perturbed_model(6);
    EditRequest req;
    req.source = smooth_source();
    req.mask = MaskGrid(16, 8, 1);
    req.c = Condition{0, false};
    req.replace_until = 1.0;

    ErpImage out = inpaint(m, req, 5, 1.0, 13);
    CHECK(image_psnr(out, req.source) == 99.0);
}

TEST_CASE("partial masks keep the kept region and change the rest") {
    PanoModel m = perturbed_model(7);
    EditRequest req;
    req.source = smooth_source();
    req.mask = MaskGrid(16, 8, 0);
    for (int v = 0; v < 4; ++v)
        for (int u = 0; u < 16; ++u) req.mask.at(v, u) = 1;
    req.c = Condition{2, false};
    req.replace_until = 1.0;

    ErpImage out = inpaint(m, req, 6, 1.0, 21);
    REQUIRE(out.width == 16);

    double kept_max = 0, regen_max = 0;
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 16; ++u) {
            const double d = std::abs(out.at(v, u, 0) - req.source.at(v, u, 0));
            if (v < 4) kept_max = std::max(kept_max, d);
            else regen_max = std::max(regen_max, d);
        }
    CHECK(kept_max <= 1e-9);
    CHECK(regen_max > 0.01);

    // Identical request and seed reproduce the same image bit for bit.
    ErpImage again = inpaint(m, req, 6, 1.0, 21);
    CHECK(again.data == out.data);
}

TEST_CASE("outpainting is inpainting with a footprint mask") {
    PanoModel m = perturbed_model(8);
    ErpImage partial = smooth_source();
    MaskGrid footprint(16, 8, 0);
    for (int v = 2; v < 6; ++v)
        for (int u = 4; u < 12; ++u) footprint.at(v, u) = 1;
    const Condition c{1, false};

    ErpImage a = outpaint(m, partial, footprint, c, 5, 1.2, 33, 0.6);
    EditRequest req;
    req.source = partial;
    req.mask = footprint;
    req.c = c;
    req.replace_until = 0.6;
    ErpImage b = inpaint(m, req, 5, 1.2, 33);
    CHECK(a.data == b.data);
}

TEST_CASE("invalid edit requests are rejected") {
    PanoModel m = perturbed_model(9);
    EditRequest req;
    req.source = smooth_source();
    req.mask = MaskGrid(16, 8, 1);
    req.c = Condition{0, false};

    req.replace_until = -0.1;
    CHECK_THROWS_AS(inpaint(m, req, 4, 1.0, 1), std::domain_error);
    req.replace_until = 1.1;
    CHECK_THROWS_AS(inpaint(m, req, 4, 1.0, 1), std::domain_error);
    req.replace_until = 0.4;

    CHECK_THROWS_AS(inpaint(m, req, 0, 1.0, 1), std::domain_error);

    EditRequest wrong_res = req;
    wrong_res.source = ErpImage(32, 16, 1, 0.5);
    wrong_res.mask = MaskGrid(32, 16, 1);
    CHECK_THROWS_AS(inpaint(m, wrong_res, 4, 1.0, 1), std::domain_error);

    EditRequest wrong_mask = req;
    wrong_mask.mask = MaskGrid(8, 4, 1);
    CHECK_THROWS_AS(inpaint(m, wrong_mask, 4, 1.0, 1), std::domain_error);
}
