#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pano360/image.hpp"
#include "pano360/token_lattice.hpp"

namespace pano360 {

struct ModelConfig {
    int blocks = 6;
    int heads = 4;
    int dim = 64;
    int patch = 4;
    int cond_classes = 5;  // scene classes + 1 null class (last index)
    int channels = 3;
    int height = 64;  // pixel resolution the model is built for
    int width = 128;
    int mlp_mult = 4;
    PadPosition pad_positions = PadPosition::CopySource;

    int lattice_rows() const { return height / patch; }
    int lattice_cols() const { return width / patch; }
    int hidden() const { return mlp_mult * dim; }
    int null_class() const { return cond_classes - 1; }
    void validate() const;
};

// One training example in noise space. xt = (1-t)*x0 + t*eps always.
struct NoiseBundle {
    TokenGrid x0;
    TokenGrid eps;
    double t = 0.0;
    TokenGrid xt;
    TokenGrid eps_pred;
};

struct Condition {
    int class_id = 0;
    bool null_flag = false;
};

struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);
    std::size_t size() const { return v.size(); }
};

using ParamMap = std::map<std::string, Tensor>;

TokenGrid forward_noise(const TokenGrid& x0, const TokenGrid& eps, double t);

// eps_null + g*(eps_cond - eps_null); exact pass-through at g = 1 and g = 0.
TokenGrid cfg_combine(const TokenGrid& eps_cond, const TokenGrid& eps_null, double g);

// Activations of one forward pass, kept so backward can replay the graph.
// All matrices are row-major over the padded token sequence.
struct BlockCache {
    std::vector<double> x_in;                 // N x d, residual stream before LN1
    std::vector<double> ln1_mean, ln1_rstd;   // N
    std::vector<double> y;                    // N x d
    std::vector<double> q, k, v;              // N x d, q and k already rotated
    std::vector<double> attn_probs;           // heads x N x N
    std::vector<double> att_concat;           // N x d, heads merged, before Wo
    std::vector<double> x_mid;                // N x d, residual stream before LN2
    std::vector<double> ln2_mean, ln2_rstd;   // N
    std::vector<double> z;                    // N x d
    std::vector<double> h_pre;                // N x hidden
    std::vector<double> h_act;                // N x hidden
};

struct ForwardCache {
    double t = 0;
    int cond_index = 0;
    std::vector<double> pad_tokens;              // N x d padded model input
    std::vector<int> col_positions;              // per padded column
    std::vector<double> time_feats;              // d
    std::vector<double> time_h_pre, time_h_act;  // d
    std::vector<double> x_final_in;              // N x d
    std::vector<double> lnf_mean, lnf_rstd;      // N
    std::vector<double> f;                       // N x d
    std::vector<BlockCache> blocks;
};

// Fixed-resolution diffusion transformer over codec tokens. The width axis is
// circularly padded (with positions) before the blocks and cropped after the
// output head, so the padded columns never reach the loss.
class PanoModel {
public:
    PanoModel(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const PatchCodec& codec() const { return codec_; }
    const RopeTable& rope() const { return rope_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }
    std::size_t param_count() const;

    TokenGrid predict(const TokenGrid& xt, double t, const Condition& c) const;
    // Same result as predict, but keeps activations for backward.
    TokenGrid predict_cached(const TokenGrid& xt, double t, const Condition& c,
                             ForwardCache& cache) const;
    // Accumulates dLoss/dparams into grads (missing entries are created
    // zeroed), given dLoss/d eps_pred for the forward recorded in cache.
    void backward(const ForwardCache& cache, const TokenGrid& grad_eps_pred,
                  ParamMap& grads) const;

    TokenGrid encode(const ErpImage& img) const { return patchify(img, codec_); }
    ErpImage decode(const TokenGrid& tokens) const { return unpatchify(tokens, codec_); }

    // Replaces parameters and frozen codec with externally restored values
    // (checkpoint loading). Names and shapes must match this configuration.
    void restore_state(ParamMap params, PatchCodec codec);

private:
    int cond_index(const Condition& c) const;

    ModelConfig cfg_;
    ParamMap params_;
    PatchCodec codec_;
    RopeTable rope_;
};

// Called after each integration step with the index of the node just
// reached, its time, and the mutable state (edit hooks replace tokens here).
using StepCallback = std::function<void(int node, double t, TokenGrid& x)>;

// Deterministic sampler on the uniform grid t_k = k/(steps+1), k = steps..0.
// The top node stays strictly below 1 so the eps-to-x0 conversion keeps a
// bounded denominator inside the trained timestep range.
TokenGrid sample_latent_from(const PanoModel& m, TokenGrid x_start, const Condition& c, int steps,
                             double g, const StepCallback& cb = {});
TokenGrid sample_latent(const PanoModel& m, const Condition& c, int steps, double g,
                        std::uint64_t seed, const StepCallback& cb = {});
ErpImage sample(const PanoModel& m, const Condition& c, int steps, double g, std::uint64_t seed);

// Runs the same grid upward from t = 0, returning the noise-end latent.
// With trajectory non-null, records the state at every node (steps+1 grids).
TokenGrid invert_latent(const PanoModel& m, const TokenGrid& x0, const Condition& c, int steps,
                        double g, std::vector<TokenGrid>* trajectory = nullptr);
TokenGrid invert(const PanoModel& m, const ErpImage& img, const Condition& c, int steps,
                 double g = 1.0);

// Seeded standard-normal latent of the model's lattice shape.
TokenGrid noise_latent(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace pano360
