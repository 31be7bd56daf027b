#include "pano360/dit_core.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pano360/rng.hpp"

namespace pano360 {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using MapConstMat = Eigen::Map<const Mat>;

constexpr double kLnEps = 1e-5;
constexpr std::uint64_t kCodecTag = 1;
constexpr std::uint64_t kParamTag = 2;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_deriv(double x) {
    const double phi = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

// y = g (x - mean) rstd + b rowwise; caches mean and rstd
void layer_norm_fwd(const double* x, int n, int d, const double* g, const double* b, double* y,
                    double* mean, double* rstd) {
    for (int i = 0; i < n; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        double m = 0;
        for (int k = 0; k < d; ++k) m += xi[k];
        m /= d;
        double var = 0;
        for (int k = 0; k < d; ++k) {
            const double c = xi[k] - m;
            var += c * c;
        }
        var /= d;
        const double r = 1.0 / std::sqrt(var + kLnEps);
        mean[i] = m;
        rstd[i] = r;
        double* yi = y + static_cast<std::size_t>(i) * d;
        for (int k = 0; k < d; ++k) yi[k] = g[k] * (xi[k] - m) * r + b[k];
    }
}

// accumulates dx into dx_out (+=); accumulates dg, db
void layer_norm_bwd(const double* x, const double* dy, int n, int d, const double* g,
                    const double* mean, const double* rstd, double* dx_out, double* dg,
                    double* db) {
    for (int i = 0; i < n; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        const double* dyi = dy + static_cast<std::size_t>(i) * d;
        double* dxi = dx_out + static_cast<std::size_t>(i) * d;
        const double m = mean[i], r = rstd[i];
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int k = 0; k < d; ++k) {
            const double xhat = (xi[k] - m) * r;
            const double dxhat = dyi[k] * g[k];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dg[k] += dyi[k] * xhat;
            db[k] += dyi[k];
        }
        const double inv_d = 1.0 / d;
        for (int k = 0; k < d; ++k) {
            const double xhat = (xi[k] - m) * r;
            const double dxhat = dyi[k] * g[k];
            dxi[k] += r * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
}

std::string block_prefix(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "blk%02d.", i);
    return buf;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw std::domain_error("Tensor: non-positive extent");
        n *= static_cast<std::size_t>(e);
    }
    v.assign(n, fill);
}

void ModelConfig::validate() const {
    if (blocks < 1 || heads < 1 || dim < 1 || patch < 1 || mlp_mult < 1)
        throw std::domain_error("ModelConfig: counts must be positive");
    if (dim % heads != 0) throw std::domain_error("ModelConfig: dim must divide across heads");
    if ((dim / heads) % 4 != 0)
        throw std::domain_error("ModelConfig: head dim must split into row and col pairs");
    if (width != 2 * height) throw std::domain_error("ModelConfig: width must equal 2*height");
    if (height % patch != 0 || width % patch != 0)
        throw std::domain_error("ModelConfig: resolution must be divisible by the patch size");
    if (lattice_cols() < 2) throw std::domain_error("ModelConfig: lattice too narrow");
    if (channels < 1) throw std::domain_error("ModelConfig: need at least one channel");
    if (patch * patch * channels > dim)
        throw std::domain_error("ModelConfig: patch values exceed token dim");
    if (cond_classes < 2) throw std::domain_error("ModelConfig: need classes plus a null class");
}

TokenGrid forward_noise(const TokenGrid& x0, const TokenGrid& eps, double t) {
    if (x0.rows != eps.rows || x0.cols != eps.cols || x0.dim != eps.dim)
        throw std::domain_error("forward_noise: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("forward_noise: t outside [0,1]");
    TokenGrid xt(x0.rows, x0.cols, x0.dim);
    for (std::size_t i = 0; i < xt.data.size(); ++i)
        xt.data[i] = (1.0 - t) * x0.data[i] + t * eps.data[i];
    return xt;
}

TokenGrid cfg_combine(const TokenGrid& eps_cond, const TokenGrid& eps_null, double g) {
    if (eps_cond.rows != eps_null.rows || eps_cond.cols != eps_null.cols ||
        eps_cond.dim != eps_null.dim)
        throw std::domain_error("cfg_combine: shape mismatch");
    if (g < 0) throw std::domain_error("cfg_combine: negative guidance");
    if (g == 1.0) return eps_cond;
    if (g == 0.0) return eps_null;
    TokenGrid out(eps_cond.rows, eps_cond.cols, eps_cond.dim);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = eps_null.data[i] + g * (eps_cond.data[i] - eps_null.data[i]);
    return out;
}

PanoModel::PanoModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      codec_(PatchCodec::orthonormal(cfg.patch, cfg.channels, cfg.dim,
                                     derive_seed(seed, kCodecTag))),
      rope_(rope_table(cfg.lattice_rows(), cfg.lattice_cols(), cfg.dim, cfg.heads)) {
    cfg_.validate();
    const int d = cfg_.dim, hidden = cfg_.hidden();
    for (int i = 0; i < cfg_.blocks; ++i) {
        const std::string p = block_prefix(i);
        params_[p + "attn.wq"] = Tensor({d, d});
        params_[p + "attn.wk"] = Tensor({d, d});
        params_[p + "attn.wv"] = Tensor({d, d});
        params_[p + "attn.wo"] = Tensor({d, d});
        params_[p + "attn.bq"] = Tensor({d});
        params_[p + "attn.bk"] = Tensor({d});
        params_[p + "attn.bv"] = Tensor({d});
        params_[p + "attn.bo"] = Tensor({d});
        params_[p + "ln1.g"] = Tensor({d});
        params_[p + "ln1.b"] = Tensor({d});
        params_[p + "ln2.g"] = Tensor({d});
        params_[p + "ln2.b"] = Tensor({d});
        params_[p + "mlp.w1"] = Tensor({hidden, d});
        params_[p + "mlp.b1"] = Tensor({hidden});
        params_[p + "mlp.w2"] = Tensor({d, hidden});
        params_[p + "mlp.b2"] = Tensor({d});
    }
    params_["cond.embed"] = Tensor({cfg_.cond_classes, d});
    params_["final.ln.g"] = Tensor({d});
    params_["final.ln.b"] = Tensor({d});
    params_["final.w"] = Tensor({d, d});
    params_["final.b"] = Tensor({d});
    params_["input.w"] = Tensor({d, d});
    params_["input.b"] = Tensor({d});
    params_["time.w1"] = Tensor({d, d});
    params_["time.b1"] = Tensor({d});
    params_["time.w2"] = Tensor({d, d});
    params_["time.b2"] = Tensor({d});

    Rng rng(derive_seed(seed, kParamTag));
    for (auto& [name, tensor] : params_) {
        const bool is_weight = tensor.shape.size() == 2;
        const bool is_final = name.rfind("final.", 0) == 0 && name.find(".ln.") == std::string::npos;
        const bool is_ln_gain = name.size() >= 2 && name.substr(name.size() - 2) == ".g";
        if (is_final) continue;  // zero-initialized output head
        if (is_ln_gain) {
            for (auto& x : tensor.v) x = 1.0;
        } else if (is_weight) {
            for (auto& x : tensor.v) x = 0.02 * rng.normal();
        }
        // biases stay zero
    }
}

std::size_t PanoModel::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, tensor] : params_) n += tensor.size();
    return n;
}

void PanoModel::restore_state(ParamMap params, PatchCodec codec) {
    if (params.size() != params_.size())
        throw std::invalid_argument("restore_state: parameter set size mismatch");
    for (const auto& [name, tensor] : params_) {
        auto it = params.find(name);
        if (it == params.end())
            throw std::invalid_argument("restore_state: missing parameter " + name);
        if (it->second.shape != tensor.shape)
            throw std::invalid_argument("restore_state: shape mismatch for " + name);
    }
    if (codec.patch != codec_.patch || codec.channels != codec_.channels ||
        codec.dim != codec_.dim || codec.proj.size() != codec_.proj.size() ||
        codec.bias.size() != codec_.bias.size())
        throw std::invalid_argument("restore_state: codec layout mismatch");
    params_ = std::move(params);
    codec_ = std::move(codec);
}

int PanoModel::cond_index(const Condition& c) const {
    if (c.null_flag) return cfg_.null_class();
    if (c.class_id < 0 || c.class_id >= cfg_.cond_classes)
        throw std::domain_error("Condition: class_id outside cond_classes");
    return c.class_id;
}

TokenGrid PanoModel::predict(const TokenGrid& xt, double t, const Condition& c) const {
    ForwardCache cache;
    return predict_cached(xt, t, c, cache);
}

TokenGrid PanoModel::predict_cached(const TokenGrid& xt, double t, const Condition& c,
                                    ForwardCache& cache) const {
    const int H = cfg_.lattice_rows(), W = cfg_.lattice_cols(), d = cfg_.dim;
    if (xt.rows != H || xt.cols != W || xt.dim != d)
        throw std::domain_error("model: input grid does not match the configured lattice");
    const int heads = cfg_.heads, hd = d / heads, hidden = cfg_.hidden();
    const int Wp = W + 2;
    const int N = H * Wp;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    const PaddedTokenGrid padded = circular_pad(xt, cfg_.pad_positions);
    cache.t = t;
    cache.cond_index = cond_index(c);
    cache.pad_tokens = padded.data;
    cache.col_positions = padded.col_positions;

    // conditioning vector: class embedding + MLP over sinusoidal t features
    cache.time_feats.assign(d, 0.0);
    for (int j = 0; j < d / 2; ++j) {
        const double freq = std::pow(10000.0, -2.0 * j / d);
        const double arg = 1000.0 * t * freq;
        cache.time_feats[2 * j] = std::sin(arg);
        cache.time_feats[2 * j + 1] = std::cos(arg);
    }
    const auto& tw1 = params_.at("time.w1").v;
    const auto& tb1 = params_.at("time.b1").v;
    const auto& tw2 = params_.at("time.w2").v;
    const auto& tb2 = params_.at("time.b2").v;
    cache.time_h_pre.assign(d, 0.0);
    cache.time_h_act.assign(d, 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = tb1[i];
        for (int k = 0; k < d; ++k) acc += tw1[static_cast<std::size_t>(i) * d + k] * cache.time_feats[k];
        cache.time_h_pre[i] = acc;
        cache.time_h_act[i] = gelu(acc);
    }
    std::vector<double> cvec(d);
    const auto& embed = params_.at("cond.embed").v;
    for (int i = 0; i < d; ++i) {
        double acc = tb2[i];
        for (int k = 0; k < d; ++k) acc += tw2[static_cast<std::size_t>(i) * d + k] * cache.time_h_act[k];
        cvec[i] = acc + embed[static_cast<std::size_t>(cache.cond_index) * d + i];
    }

    // input projection + conditioning broadcast
    std::vector<double> x(static_cast<std::size_t>(N) * d);
    {
        MapConstMat in(cache.pad_tokens.data(), N, d);
        MapConstMat w(params_.at("input.w").v.data(), d, d);
        MapMat out(x.data(), N, d);
        out.noalias() = in * w.transpose();
        const auto& b = params_.at("input.b").v;
        for (int i = 0; i < N; ++i) {
            double* xi = x.data() + static_cast<std::size_t>(i) * d;
            for (int k = 0; k < d; ++k) xi[k] += b[k] + cvec[k];
        }
    }

    cache.blocks.assign(cfg_.blocks, BlockCache{});
    for (int bi = 0; bi < cfg_.blocks; ++bi) {
        BlockCache& bc = cache.blocks[bi];
        const std::string p = block_prefix(bi);
        bc.x_in = x;
        bc.ln1_mean.resize(N);
        bc.ln1_rstd.resize(N);
        bc.y.resize(static_cast<std::size_t>(N) * d);
        layer_norm_fwd(bc.x_in.data(), N, d, params_.at(p + "ln1.g").v.data(),
                       params_.at(p + "ln1.b").v.data(), bc.y.data(), bc.ln1_mean.data(),
                       bc.ln1_rstd.data());

        bc.q.resize(static_cast<std::size_t>(N) * d);
        bc.k.resize(static_cast<std::size_t>(N) * d);
        bc.v.resize(static_cast<std::size_t>(N) * d);
        {
            MapConstMat y(bc.y.data(), N, d);
            MapMat q(bc.q.data(), N, d), k(bc.k.data(), N, d), v(bc.v.data(), N, d);
            q.noalias() = y * MapConstMat(params_.at(p + "attn.wq").v.data(), d, d).transpose();
            k.noalias() = y * MapConstMat(params_.at(p + "attn.wk").v.data(), d, d).transpose();
            v.noalias() = y * MapConstMat(params_.at(p + "attn.wv").v.data(), d, d).transpose();
            const auto& bq = params_.at(p + "attn.bq").v;
            const auto& bk = params_.at(p + "attn.bk").v;
            const auto& bv = params_.at(p + "attn.bv").v;
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) {
                    bc.q[static_cast<std::size_t>(i) * d + kk] += bq[kk];
                    bc.k[static_cast<std::size_t>(i) * d + kk] += bk[kk];
                    bc.v[static_cast<std::size_t>(i) * d + kk] += bv[kk];
                }
        }
        for (int i = 0; i < N; ++i) {
            const int row = i / Wp;
            const int colpos = cache.col_positions[i % Wp];
            rope_rotate(bc.q.data() + static_cast<std::size_t>(i) * d, rope_, row, colpos);
            rope_rotate(bc.k.data() + static_cast<std::size_t>(i) * d, rope_, row, colpos);
        }

        bc.attn_probs.resize(static_cast<std::size_t>(heads) * N * N);
        bc.att_concat.assign(static_cast<std::size_t>(N) * d, 0.0);
        for (int h = 0; h < heads; ++h) {
            // strided head views: token i, dims [h*hd, (h+1)*hd)
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> qh(bc.q.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> kh(bc.k.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> vh(bc.v.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            MapMat probs(bc.attn_probs.data() + static_cast<std::size_t>(h) * N * N, N, N);
            probs.noalias() = qh * kh.transpose() * scale;
            for (int i = 0; i < N; ++i) {
                double* row = probs.data() + static_cast<std::size_t>(i) * N;
                double mx = row[0];
                for (int j = 1; j < N; ++j) mx = std::max(mx, row[j]);
                double sum = 0;
                for (int j = 0; j < N; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const double inv = 1.0 / sum;
                for (int j = 0; j < N; ++j) row[j] *= inv;
            }
            Eigen::Map<Mat, 0, Eigen::OuterStride<>> ah(bc.att_concat.data() + h * hd, N, hd,
                                                        Eigen::OuterStride<>(d));
            ah.noalias() = probs * vh;
        }

        // attention output projection + residual
        {
            MapConstMat a(bc.att_concat.data(), N, d);
            MapConstMat wo(params_.at(p + "attn.wo").v.data(), d, d);
            MapMat xm(x.data(), N, d);
            xm.noalias() += a * wo.transpose();
            const auto& bo = params_.at(p + "attn.bo").v;
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) x[static_cast<std::size_t>(i) * d + kk] += bo[kk];
        }

        bc.x_mid = x;
        bc.ln2_mean.resize(N);
        bc.ln2_rstd.resize(N);
        bc.z.resize(static_cast<std::size_t>(N) * d);
        layer_norm_fwd(bc.x_mid.data(), N, d, params_.at(p + "ln2.g").v.data(),
                       params_.at(p + "ln2.b").v.data(), bc.z.data(), bc.ln2_mean.data(),
                       bc.ln2_rstd.data());

        bc.h_pre.resize(static_cast<std::size_t>(N) * hidden);
        bc.h_act.resize(static_cast<std::size_t>(N) * hidden);
        {
            MapConstMat z(bc.z.data(), N, d);
            MapMat hp(bc.h_pre.data(), N, hidden);
            hp.noalias() = z * MapConstMat(params_.at(p + "mlp.w1").v.data(), hidden, d).transpose();
            const auto& b1 = params_.at(p + "mlp.b1").v;
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < hidden; ++kk) {
                    double& val = bc.h_pre[static_cast<std::size_t>(i) * hidden + kk];
                    val += b1[kk];
                    bc.h_act[static_cast<std::size_t>(i) * hidden + kk] = gelu(val);
                }
            MapConstMat ha(bc.h_act.data(), N, hidden);
            MapMat xm(x.data(), N, d);
            xm.noalias() += ha * MapConstMat(params_.at(p + "mlp.w2").v.data(), d, hidden).transpose();
            const auto& b2 = params_.at(p + "mlp.b2").v;
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) x[static_cast<std::size_t>(i) * d + kk] += b2[kk];
        }
    }

    cache.x_final_in = x;
    cache.lnf_mean.resize(N);
    cache.lnf_rstd.resize(N);
    cache.f.resize(static_cast<std::size_t>(N) * d);
    layer_norm_fwd(cache.x_final_in.data(), N, d, params_.at("final.ln.g").v.data(),
                   params_.at("final.ln.b").v.data(), cache.f.data(), cache.lnf_mean.data(),
                   cache.lnf_rstd.data());

    std::vector<double> out(static_cast<std::size_t>(N) * d);
    {
        MapConstMat f(cache.f.data(), N, d);
        MapMat o(out.data(), N, d);
        o.noalias() = f * MapConstMat(params_.at("final.w").v.data(), d, d).transpose();
        const auto& b = params_.at("final.b").v;
        for (int i = 0; i < N; ++i)
            for (int kk = 0; kk < d; ++kk) out[static_cast<std::size_t>(i) * d + kk] += b[kk];
    }

    TokenGrid eps_pred(H, W, d);
    for (int r = 0; r < H; ++r)
        std::copy(out.begin() + (static_cast<std::size_t>(r) * Wp + 1) * d,
                  out.begin() + (static_cast<std::size_t>(r) * Wp + 1 + W) * d,
                  eps_pred.token(r, 0));
    return eps_pred;
}

void PanoModel::backward(const ForwardCache& cache, const TokenGrid& grad_eps_pred,
                         ParamMap& grads) const {
    const int H = cfg_.lattice_rows(), W = cfg_.lattice_cols(), d = cfg_.dim;
    if (grad_eps_pred.rows != H || grad_eps_pred.cols != W || grad_eps_pred.dim != d)
        throw std::domain_error("backward: gradient grid does not match the lattice");
    if (static_cast<int>(cache.blocks.size()) != cfg_.blocks)
        throw std::domain_error("backward: cache does not match this model");
    const int heads = cfg_.heads, hd = d / heads, hidden = cfg_.hidden();
    const int Wp = W + 2;
    const int N = H * Wp;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    auto grad_of = [&](const std::string& name) -> std::vector<double>& {
        auto it = grads.find(name);
        if (it == grads.end()) {
            const Tensor& ref = params_.at(name);
            it = grads.emplace(name, Tensor(ref.shape)).first;
        }
        return it->second.v;
    };

    // crop adjoint: dropped padded columns receive zero gradient
    std::vector<double> dout(static_cast<std::size_t>(N) * d, 0.0);
    for (int r = 0; r < H; ++r)
        std::copy(grad_eps_pred.token(r, 0), grad_eps_pred.token(r, 0) + static_cast<std::size_t>(W) * d,
                  dout.begin() + (static_cast<std::size_t>(r) * Wp + 1) * d);

    // final linear
    std::vector<double> df(static_cast<std::size_t>(N) * d);
    {
        MapConstMat dom(dout.data(), N, d);
        MapConstMat w(params_.at("final.w").v.data(), d, d);
        MapMat dfm(df.data(), N, d);
        dfm.noalias() = dom * w;
        MapConstMat f(cache.f.data(), N, d);
        MapMat dw(grad_of("final.w").data(), d, d);
        dw.noalias() += dom.transpose() * f;
        auto& db = grad_of("final.b");
        for (int i = 0; i < N; ++i)
            for (int kk = 0; kk < d; ++kk) db[kk] += dout[static_cast<std::size_t>(i) * d + kk];
    }

    // final layer norm
    std::vector<double> dx(static_cast<std::size_t>(N) * d, 0.0);
    layer_norm_bwd(cache.x_final_in.data(), df.data(), N, d, params_.at("final.ln.g").v.data(),
                   cache.lnf_mean.data(), cache.lnf_rstd.data(), dx.data(),
                   grad_of("final.ln.g").data(), grad_of("final.ln.b").data());

    std::vector<double> dz(static_cast<std::size_t>(N) * d);
    std::vector<double> dhact(static_cast<std::size_t>(N) * hidden);
    std::vector<double> dhpre(static_cast<std::size_t>(N) * hidden);
    std::vector<double> dy(static_cast<std::size_t>(N) * d);
    std::vector<double> dq(static_cast<std::size_t>(N) * d);
    std::vector<double> dk(static_cast<std::size_t>(N) * d);
    std::vector<double> dv(static_cast<std::size_t>(N) * d);
    std::vector<double> datt(static_cast<std::size_t>(N) * d);
    std::vector<double> dprobs(static_cast<std::size_t>(N) * N);

    for (int bi = cfg_.blocks - 1; bi >= 0; --bi) {
        const BlockCache& bc = cache.blocks[bi];
        const std::string p = block_prefix(bi);

        // mlp second linear: x += h_act * w2^T + b2
        {
            MapConstMat dxm(dx.data(), N, d);
            MapMat dha(dhact.data(), N, hidden);
            dha.noalias() = dxm * MapConstMat(params_.at(p + "mlp.w2").v.data(), d, hidden);
            MapMat dw2(grad_of(p + "mlp.w2").data(), d, hidden);
            dw2.noalias() += dxm.transpose() * MapConstMat(bc.h_act.data(), N, hidden);
            auto& db2 = grad_of(p + "mlp.b2");
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) db2[kk] += dx[static_cast<std::size_t>(i) * d + kk];
        }
        // gelu
        for (std::size_t i = 0; i < dhpre.size(); ++i)
            dhpre[i] = dhact[i] * gelu_deriv(bc.h_pre[i]);
        // mlp first linear
        {
            MapConstMat dhp(dhpre.data(), N, hidden);
            MapMat dzm(dz.data(), N, d);
            dzm.noalias() = dhp * MapConstMat(params_.at(p + "mlp.w1").v.data(), hidden, d);
            MapMat dw1(grad_of(p + "mlp.w1").data(), hidden, d);
            dw1.noalias() += dhp.transpose() * MapConstMat(bc.z.data(), N, d);
            auto& db1 = grad_of(p + "mlp.b1");
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < hidden; ++kk)
                    db1[kk] += dhpre[static_cast<std::size_t>(i) * hidden + kk];
        }
        // ln2: dx stays as residual gradient and gains the ln path
        layer_norm_bwd(bc.x_mid.data(), dz.data(), N, d, params_.at(p + "ln2.g").v.data(),
                       bc.ln2_mean.data(), bc.ln2_rstd.data(), dx.data(),
                       grad_of(p + "ln2.g").data(), grad_of(p + "ln2.b").data());

        // attention output projection: x += att_concat * wo^T + bo
        {
            MapConstMat dxm(dx.data(), N, d);
            MapMat da(datt.data(), N, d);
            da.noalias() = dxm * MapConstMat(params_.at(p + "attn.wo").v.data(), d, d);
            MapMat dwo(grad_of(p + "attn.wo").data(), d, d);
            dwo.noalias() += dxm.transpose() * MapConstMat(bc.att_concat.data(), N, d);
            auto& dbo = grad_of(p + "attn.bo");
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) dbo[kk] += dx[static_cast<std::size_t>(i) * d + kk];
        }

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int h = 0; h < heads; ++h) {
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> qh(bc.q.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> kh(bc.k.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> vh(bc.v.data() + h * hd, N, hd,
                                                              Eigen::OuterStride<>(d));
            Eigen::Map<const Mat, 0, Eigen::OuterStride<>> dah(datt.data() + h * hd, N, hd,
                                                               Eigen::OuterStride<>(d));
            MapConstMat probs(bc.attn_probs.data() + static_cast<std::size_t>(h) * N * N, N, N);
            MapMat dp(dprobs.data(), N, N);
            dp.noalias() = dah * vh.transpose();
            Eigen::Map<Mat, 0, Eigen::OuterStride<>> dvh(dv.data() + h * hd, N, hd,
                                                         Eigen::OuterStride<>(d));
            dvh.noalias() += probs.transpose() * dah;
            // softmax backward in place on dp
            for (int i = 0; i < N; ++i) {
                const double* pr = probs.data() + static_cast<std::size_t>(i) * N;
                double* dpr = dprobs.data() + static_cast<std::size_t>(i) * N;
                double dot = 0;
                for (int j = 0; j < N; ++j) dot += dpr[j] * pr[j];
                for (int j = 0; j < N; ++j) dpr[j] = pr[j] * (dpr[j] - dot);
            }
            Eigen::Map<Mat, 0, Eigen::OuterStride<>> dqh(dq.data() + h * hd, N, hd,
                                                         Eigen::OuterStride<>(d));
            Eigen::Map<Mat, 0, Eigen::OuterStride<>> dkh(dk.data() + h * hd, N, hd,
                                                         Eigen::OuterStride<>(d));
            dqh.noalias() += dp * kh * scale;
            dkh.noalias() += dp.transpose() * qh * scale;
        }

        // rope adjoint on dq, dk
        for (int i = 0; i < N; ++i) {
            const int row = i / Wp;
            const int colpos = cache.col_positions[i % Wp];
            rope_rotate_inverse(dq.data() + static_cast<std::size_t>(i) * d, rope_, row, colpos);
            rope_rotate_inverse(dk.data() + static_cast<std::size_t>(i) * d, rope_, row, colpos);
        }

        // qkv projections back to y
        {
            MapConstMat dqm(dq.data(), N, d), dkm(dk.data(), N, d), dvm(dv.data(), N, d);
            MapMat dym(dy.data(), N, d);
            dym.noalias() = dqm * MapConstMat(params_.at(p + "attn.wq").v.data(), d, d);
            dym.noalias() += dkm * MapConstMat(params_.at(p + "attn.wk").v.data(), d, d);
            dym.noalias() += dvm * MapConstMat(params_.at(p + "attn.wv").v.data(), d, d);
            MapConstMat y(bc.y.data(), N, d);
            MapMat dwq(grad_of(p + "attn.wq").data(), d, d);
            MapMat dwk(grad_of(p + "attn.wk").data(), d, d);
            MapMat dwv(grad_of(p + "attn.wv").data(), d, d);
            dwq.noalias() += dqm.transpose() * y;
            dwk.noalias() += dkm.transpose() * y;
            dwv.noalias() += dvm.transpose() * y;
            auto& dbq = grad_of(p + "attn.bq");
            auto& dbk = grad_of(p + "attn.bk");
            auto& dbv = grad_of(p + "attn.bv");
            for (int i = 0; i < N; ++i)
                for (int kk = 0; kk < d; ++kk) {
                    dbq[kk] += dq[static_cast<std::size_t>(i) * d + kk];
                    dbk[kk] += dk[static_cast<std::size_t>(i) * d + kk];
                    dbv[kk] += dv[static_cast<std::size_t>(i) * d + kk];
                }
        }

        // ln1
        layer_norm_bwd(bc.x_in.data(), dy.data(), N, d, params_.at(p + "ln1.g").v.data(),
                       bc.ln1_mean.data(), bc.ln1_rstd.data(), dx.data(),
                       grad_of(p + "ln1.g").data(), grad_of(p + "ln1.b").data());
    }

    // input projection and conditioning
    {
        MapConstMat dxm(dx.data(), N, d);
        MapConstMat in(cache.pad_tokens.data(), N, d);
        MapMat dw(grad_of("input.w").data(), d, d);
        dw.noalias() += dxm.transpose() * in;
        auto& db = grad_of("input.b");
        std::vector<double> dcvec(d, 0.0);
        for (int i = 0; i < N; ++i)
            for (int kk = 0; kk < d; ++kk) {
                db[kk] += dx[static_cast<std::size_t>(i) * d + kk];
                dcvec[kk] += dx[static_cast<std::size_t>(i) * d + kk];
            }
        auto& demb = grad_of("cond.embed");
        for (int kk = 0; kk < d; ++kk)
            demb[static_cast<std::size_t>(cache.cond_index) * d + kk] += dcvec[kk];
        // time mlp
        auto& dw2 = grad_of("time.w2");
        auto& db2 = grad_of("time.b2");
        std::vector<double> dhact_t(d, 0.0);
        const auto& tw2 = params_.at("time.w2").v;
        for (int i = 0; i < d; ++i) {
            db2[i] += dcvec[i];
            for (int kk = 0; kk < d; ++kk) {
                dw2[static_cast<std::size_t>(i) * d + kk] += dcvec[i] * cache.time_h_act[kk];
                dhact_t[kk] += dcvec[i] * tw2[static_cast<std::size_t>(i) * d + kk];
            }
        }
        auto& dw1 = grad_of("time.w1");
        auto& db1 = grad_of("time.b1");
        for (int i = 0; i < d; ++i) {
            const double dpre = dhact_t[i] * gelu_deriv(cache.time_h_pre[i]);
            db1[i] += dpre;
            for (int kk = 0; kk < d; ++kk)
                dw1[static_cast<std::size_t>(i) * d + kk] += dpre * cache.time_feats[kk];
        }
    }
}

namespace {
TokenGrid guided_prediction(const PanoModel& m, const TokenGrid& x, double t, const Condition& c,
                            double g) {
    if (g == 1.0) return m.predict(x, t, c);
    const TokenGrid cond = m.predict(x, t, c);
    Condition null_c = c;
    null_c.null_flag = true;
    const TokenGrid null_p = m.predict(x, t, null_c);
    return cfg_combine(cond, null_p, g);
}
}  // namespace

TokenGrid noise_latent(const ModelConfig& cfg, std::uint64_t seed) {
    TokenGrid x(cfg.lattice_rows(), cfg.lattice_cols(), cfg.dim);
    Rng rng(seed);
    for (auto& v : x.data) v = rng.normal();
    return x;
}

TokenGrid sample_latent_from(const PanoModel& m, TokenGrid x, const Condition& c, int steps,
                             double g, const StepCallback& cb) {
    if (steps < 1) throw std::domain_error("sample: need at least one step");
    const ModelConfig& cfg = m.config();
    if (x.rows != cfg.lattice_rows() || x.cols != cfg.lattice_cols() || x.dim != cfg.dim)
        throw std::domain_error("sample: start latent does not match the lattice");
    const double denom = steps + 1.0;
    if (cb) cb(steps, steps / denom, x);
    for (int k = steps; k >= 1; --k) {
        const double t = k / denom;
        const double s = (k - 1) / denom;
        const TokenGrid eps_p = guided_prediction(m, x, t, c, g);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double x0_est = (x.data[i] - t * eps_p.data[i]) / (1.0 - t);
            x.data[i] = (1.0 - s) * x0_est + s * eps_p.data[i];
        }
        if (cb) cb(k - 1, s, x);
    }
    return x;
}

TokenGrid sample_latent(const PanoModel& m, const Condition& c, int steps, double g,
                        std::uint64_t seed, const StepCallback& cb) {
    return sample_latent_from(m, noise_latent(m.config(), seed), c, steps, g, cb);
}

ErpImage sample(const PanoModel& m, const Condition& c, int steps, double g, std::uint64_t seed) {
    return m.decode(sample_latent(m, c, steps, g, seed));
}

TokenGrid invert_latent(const PanoModel& m, const TokenGrid& x0, const Condition& c, int steps,
                        double g, std::vector<TokenGrid>* trajectory) {
    if (steps < 1) throw std::domain_error("invert: need at least one step");
    const ModelConfig& cfg = m.config();
    if (x0.rows != cfg.lattice_rows() || x0.cols != cfg.lattice_cols() || x0.dim != cfg.dim)
        throw std::domain_error("invert: latent does not match the lattice");
    const double denom = steps + 1.0;
    TokenGrid x = x0;
    if (trajectory) {
        trajectory->clear();
        trajectory->push_back(x);
    }
    for (int k = 0; k < steps; ++k) {
        const double t = k / denom;
        const double s = (k + 1) / denom;
        const TokenGrid eps_p = guided_prediction(m, x, t, c, g);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double x0_est = (x.data[i] - t * eps_p.data[i]) / (1.0 - t);
            x.data[i] = (1.0 - s) * x0_est + s * eps_p.data[i];
        }
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

TokenGrid invert(const PanoModel& m, const ErpImage& img, const Condition& c, int steps,
                 double g) {
    return invert_latent(m, m.encode(img), c, steps, g);
}

}  // namespace pano360
