#include "pano360/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pano360/rng.hpp"
#include "pano360/sphere_geometry.hpp"

namespace pano360 {

namespace {

constexpr std::uint64_t kTrainTag = 20;
constexpr double kWeightDecay = 0.01;
constexpr double kNullDropRate = 0.1;
// Sampled timesteps stay strictly inside (0, 1) so both endpoints of the
// interpolation keep nonzero coefficients.
constexpr double kTimeLow = 0.001;
constexpr double kTimeHigh = 0.999;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' needs an integer, got '" + value + "'");
    }
    if (pos != value.size())
        throw std::runtime_error("config: key '" + key + "' needs an integer, got '" + value + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' needs a number, got '" + value + "'");
    }
    if (pos != value.size())
        throw std::runtime_error("config: key '" + key + "' needs a number, got '" + value + "'");
    return v;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

TokenGrid normal_tokens(int rows, int cols, int dim, Rng& rng) {
    TokenGrid g(rows, cols, dim);
    for (double& v : g.data) v = rng.normal();
    return g;
}

}  // namespace

void RunConfig::validate() const {
    if (width != 2 * height || height <= 0)
        throw std::invalid_argument("RunConfig: width must equal 2*height");
    if (patch < 1) throw std::invalid_argument("RunConfig: patch must be >= 1");
    if (steps < 1) throw std::invalid_argument("RunConfig: steps must be >= 1");
    if (epochs < 1) throw std::invalid_argument("RunConfig: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("RunConfig: batch must be >= 1");
    if (grad_accum < 1) throw std::invalid_argument("RunConfig: grad_accum must be >= 1");
    if (sample_steps < 1) throw std::invalid_argument("RunConfig: sample_steps must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("RunConfig: lr must be positive");
    if (guidance_train < 0 || guidance_infer < 0)
        throw std::invalid_argument("RunConfig: guidance must be non-negative");
    weights.validate();
    mix.validate();
}

ModelConfig RunConfig::resolved_model() const {
    ModelConfig m = model;
    m.width = width;
    m.height = height;
    m.patch = patch;
    return m;
}

void apply_config_value(RunConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value) {
    auto unknown = [&]() -> std::runtime_error {
        std::string where = section.empty() ? "top level" : "section [" + section + "]";
        return std::runtime_error("config: unknown key '" + key + "' at " + where);
    };
    if (section.empty()) {
        if (key == "width") cfg.width = static_cast<int>(parse_int(key, value));
        else if (key == "height") cfg.height = static_cast<int>(parse_int(key, value));
        else if (key == "patch") cfg.patch = static_cast<int>(parse_int(key, value));
        else if (key == "steps") cfg.steps = static_cast<int>(parse_int(key, value));
        else if (key == "lr") cfg.lr = parse_double(key, value);
        else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
        else if (key == "batch") cfg.batch = static_cast<int>(parse_int(key, value));
        else if (key == "grad_accum") cfg.grad_accum = static_cast<int>(parse_int(key, value));
        else if (key == "aux_target") {
            if (value == "residual") cfg.aux_target = AuxTarget::Residual;
            else if (value == "noise") cfg.aux_target = AuxTarget::Noise;
            else
                throw std::runtime_error("config: aux_target must be residual or noise, got '" +
                                         value + "'");
        } else if (key == "guidance_train") cfg.guidance_train = parse_double(key, value);
        else if (key == "guidance_infer") cfg.guidance_infer = parse_double(key, value);
        else if (key == "sample_steps") cfg.sample_steps = static_cast<int>(parse_int(key, value));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else throw unknown();
    } else if (section == "model") {
        if (key == "blocks") cfg.model.blocks = static_cast<int>(parse_int(key, value));
        else if (key == "heads") cfg.model.heads = static_cast<int>(parse_int(key, value));
        else if (key == "dim") cfg.model.dim = static_cast<int>(parse_int(key, value));
        else if (key == "patch") cfg.model.patch = static_cast<int>(parse_int(key, value));
        else if (key == "cond_classes")
            cfg.model.cond_classes = static_cast<int>(parse_int(key, value));
        else if (key == "channels") cfg.model.channels = static_cast<int>(parse_int(key, value));
        else if (key == "height") cfg.model.height = static_cast<int>(parse_int(key, value));
        else if (key == "width") cfg.model.width = static_cast<int>(parse_int(key, value));
        else if (key == "mlp_mult") cfg.model.mlp_mult = static_cast<int>(parse_int(key, value));
        else if (key == "pad_positions") {
            if (value == "copy_source") cfg.model.pad_positions = PadPosition::CopySource;
            else if (value == "fresh_index") cfg.model.pad_positions = PadPosition::FreshIndex;
            else
                throw std::runtime_error(
                    "config: pad_positions must be copy_source or fresh_index, got '" + value +
                    "'");
        } else throw unknown();
    } else if (section == "weights") {
        if (key == "lambda1") cfg.weights.lambda1 = parse_double(key, value);
        else if (key == "lambda2") cfg.weights.lambda2 = parse_double(key, value);
        else throw unknown();
    } else if (section == "mix") {
        if (key == "p_pano") cfg.mix.p_pano = parse_double(key, value);
        else throw unknown();
    } else {
        throw std::runtime_error("config: unknown section [" + section + "]");
    }
}

RunConfig read_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open: " + path);
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw std::runtime_error("config: malformed section at line " +
                                         std::to_string(lineno));
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key=value at line " +
                                     std::to_string(lineno));
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        try {
            apply_config_value(cfg, section, key, value);
        } catch (const std::runtime_error& ex) {
            throw std::runtime_error(std::string(ex.what()) + " (line " + std::to_string(lineno) +
                                     " of " + path + ")");
        }
    }
    return cfg;
}

void write_run_config(std::ostream& os, const RunConfig& cfg) {
    os << "width = " << cfg.width << "\n";
    os << "height = " << cfg.height << "\n";
    os << "patch = " << cfg.patch << "\n";
    os << "steps = " << cfg.steps << "\n";
    os << "lr = " << fmt_double(cfg.lr) << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch = " << cfg.batch << "\n";
    os << "grad_accum = " << cfg.grad_accum << "\n";
    os << "aux_target = " << (cfg.aux_target == AuxTarget::Residual ? "residual" : "noise")
       << "\n";
    os << "guidance_train = " << fmt_double(cfg.guidance_train) << "\n";
    os << "guidance_infer = " << fmt_double(cfg.guidance_infer) << "\n";
    os << "sample_steps = " << cfg.sample_steps << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "\n[model]\n";
    os << "blocks = " << cfg.model.blocks << "\n";
    os << "heads = " << cfg.model.heads << "\n";
    os << "dim = " << cfg.model.dim << "\n";
    os << "cond_classes = " << cfg.model.cond_classes << "\n";
    os << "channels = " << cfg.model.channels << "\n";
    os << "mlp_mult = " << cfg.model.mlp_mult << "\n";
    os << "pad_positions = "
       << (cfg.model.pad_positions == PadPosition::CopySource ? "copy_source" : "fresh_index")
       << "\n";
    os << "\n[weights]\n";
    os << "lambda1 = " << fmt_double(cfg.weights.lambda1) << "\n";
    os << "lambda2 = " << fmt_double(cfg.weights.lambda2) << "\n";
    os << "\n[mix]\n";
    os << "p_pano = " << fmt_double(cfg.mix.p_pano) << "\n";
}

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0)) throw std::invalid_argument("AdamW: lr must be positive");
    if (weight_decay < 0) throw std::invalid_argument("AdamW: weight decay must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
}

void AdamW::step(ParamMap& params, const ParamMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (g.v.size() != p.v.size())
            throw std::invalid_argument("AdamW: gradient shape mismatch for " + name);
        Tensor& m = m_.try_emplace(name, Tensor(p.shape)).first->second;
        Tensor& v = v_.try_emplace(name, Tensor(p.shape)).first->second;
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g.v[i];
            v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g.v[i] * g.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p.v[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.v[i]);
        }
    }
}

PanoModel run_train(const RunConfig& cfg, std::ostream& log, TrainStats* stats) {
    cfg.validate();
    const ModelConfig mc = cfg.resolved_model();
    mc.validate();

    PanoModel model(mc, cfg.seed);
    AdamW opt(cfg.lr, kWeightDecay);
    Rng rng(derive_seed(cfg.seed, kTrainTag));

    const int rows = mc.lattice_rows();
    const int cols = mc.lattice_cols();
    const int face = mc.width / 4;
    const long steps_per_epoch = cfg.steps / cfg.batch;
    if (steps_per_epoch < 1)
        throw std::invalid_argument("RunConfig: steps must be >= batch");
    const double micro_scale = 1.0 / (static_cast<double>(cfg.batch) * cfg.grad_accum);

    long step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (long it = 0; it < steps_per_epoch; ++it) {
            ParamMap grads;
            LossReport mean{};
            BranchTag first_branch = BranchTag::Panoramic;
            for (int b = 0; b < cfg.batch; ++b) {
                const BatchItem item = next_batch(cfg.mix, rng);
                if (b == 0) first_branch = item.branch;

                TokenGrid x0;
                MaskGrid token_mask;
                if (item.branch == BranchTag::Panoramic) {
                    ErpImage img = gen_procedural_pano(item.scene, mc.width, mc.height);
                    img = refine_poles(img, face);
                    x0 = model.encode(img);
                } else {
                    PixelGrid photo = render_scene_face(item.scene, item.face, face);
                    auto [img, pixel_mask] =
                        perspective_to_erp(photo, item.face, mc.width, mc.height);
                    token_mask = token_mask_from_pixels(pixel_mask, mc.patch);
                    x0 = model.encode(img);
                }

                for (int micro = 0; micro < cfg.grad_accum; ++micro) {
                    NoiseBundle bundle;
                    bundle.x0 = x0;
                    bundle.t = kTimeLow + (kTimeHigh - kTimeLow) * rng.uniform();
                    bundle.eps = normal_tokens(rows, cols, mc.dim, rng);
                    bundle.xt = forward_noise(bundle.x0, bundle.eps, bundle.t);
                    const bool drop = rng.bernoulli(kNullDropRate);
                    const int yaw_shift = rng.uniform_int(0, cols - 1);
                    Condition c{item.scene.class_id, drop};

                    ForwardCache cache;
                    bundle.eps_pred = model.predict_cached(bundle.xt, bundle.t, c, cache);

                    LossReport rep{};
                    TokenGrid grad_pred;
                    if (item.branch == BranchTag::Panoramic) {
                        const YawAngle a = yaw_from_pixels(yaw_shift, cols);
                        rep = pano_loss(bundle, a, cfg.weights, 0, cfg.aux_target);
                        grad_pred = pano_loss_grad(bundle, a, cfg.weights, 0, cfg.aux_target);
                    } else {
                        rep.perspective = perspective_loss(bundle, token_mask);
                        rep.total = rep.perspective;
                        grad_pred = perspective_loss_grad(bundle, token_mask);
                    }
                    if (!std::isfinite(rep.total)) {
                        log << "abort step=" << step_index << " epoch=" << epoch
                            << " branch="
                            << (item.branch == BranchTag::Panoramic ? "pano" : "persp")
                            << " t=" << fmt_double(bundle.t) << " total=" << fmt_double(rep.total)
                            << " mse=" << fmt_double(rep.mse) << " cube=" << fmt_double(rep.cube)
                            << " yaw=" << fmt_double(rep.yaw)
                            << " perspective=" << fmt_double(rep.perspective) << "\n";
                        log.flush();
                        throw std::runtime_error("training aborted: non-finite loss at step " +
                                                 std::to_string(step_index));
                    }
                    for (double& gv : grad_pred.data) gv *= micro_scale;
                    model.backward(cache, grad_pred, grads);

                    mean.total += micro_scale * rep.total;
                    mean.mse += micro_scale * rep.mse;
                    mean.cube += micro_scale * rep.cube;
                    mean.yaw += micro_scale * rep.yaw;
                    mean.perspective += micro_scale * rep.perspective;
                }
            }
            opt.step(model.params(), grads);
            log << "step=" << step_index << " total=" << mean.total << " mse=" << mean.mse
                << " cube=" << mean.cube << " yaw=" << mean.yaw
                << " perspective=" << mean.perspective << " branch="
                << (first_branch == BranchTag::Panoramic ? "pano" : "persp") << "\n";
            if (stats) {
                if (step_index == 0) stats->first_loss = mean.total;
                stats->last_loss = mean.total;
            }
            ++step_index;
        }
    }
    if (stats) stats->optimizer_steps = step_index;
    return model;
}

}  // namespace pano360
