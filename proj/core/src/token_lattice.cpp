#include "pano360/token_lattice.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "pano360/rng.hpp"

namespace pano360 {

namespace {
using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

PatchCodec PatchCodec::orthonormal(int patch, int channels, int dim, std::uint64_t seed) {
    if (patch <= 0 || channels <= 0 || dim <= 0)
        throw std::domain_error("PatchCodec: sizes must be positive");
    const int m = patch * patch * channels;
    if (m > dim) throw std::domain_error("PatchCodec: patch values exceed token dim");
    Eigen::MatrixXd g(dim, m);
    Rng rng(seed);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < m; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, m);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    for (int j = 0; j < m; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    PatchCodec codec;
    codec.patch = patch;
    codec.channels = channels;
    codec.dim = dim;
    codec.proj.resize(static_cast<std::size_t>(dim) * m);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < m; ++j) codec.proj[static_cast<std::size_t>(i) * m + j] = q(i, j);
    codec.bias.assign(dim, 0.0);
    return codec;
}

TokenGrid patchify(const ErpImage& img, const PatchCodec& codec) {
    const int p = codec.patch;
    if (img.width % p != 0 || img.height % p != 0)
        throw std::domain_error("patchify: image dims must be divisible by the patch size");
    if (img.channels != codec.channels) throw std::domain_error("patchify: channel mismatch");
    const int H = img.height / p, W = img.width / p;
    const int m = codec.patch_values();
    TokenGrid out(H, W, codec.dim);
    Eigen::Map<const RowMajorMat> proj(codec.proj.data(), codec.dim, m);
    Eigen::VectorXd pv(m), tv(codec.dim);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            int k = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < img.channels; ++ch)
                        pv(k++) = img.at(r * p + py, c * p + px, ch);
            tv.noalias() = proj * pv;
            double* t = out.token(r, c);
            for (int i = 0; i < codec.dim; ++i) t[i] = tv(i) + codec.bias[i];
        }
    }
    return out;
}

ErpImage unpatchify(const TokenGrid& tokens, const PatchCodec& codec) {
    if (tokens.dim != codec.dim) throw std::domain_error("unpatchify: token dim mismatch");
    const int p = codec.patch;
    const int m = codec.patch_values();
    ErpImage img(tokens.cols * p, tokens.rows * p, codec.channels);
    Eigen::Map<const RowMajorMat> proj(codec.proj.data(), codec.dim, m);
    Eigen::VectorXd pv(m), tv(codec.dim);
    for (int r = 0; r < tokens.rows; ++r) {
        for (int c = 0; c < tokens.cols; ++c) {
            const double* t = tokens.token(r, c);
            for (int i = 0; i < codec.dim; ++i) tv(i) = t[i] - codec.bias[i];
            pv.noalias() = proj.transpose() * tv;
            int k = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < img.channels; ++ch)
                        img.at(r * p + py, c * p + px, ch) = pv(k++);
        }
    }
    return img;
}

RopeTable rope_table(int rows, int cols, int dim, int heads) {
    if (rows <= 0 || cols <= 0 || heads <= 0) throw std::domain_error("rope_table: bad sizes");
    if (dim % heads != 0) throw std::domain_error("rope_table: dim must divide across heads");
    const int head_dim = dim / heads;
    if (head_dim % 4 != 0)
        throw std::domain_error("rope_table: head dim must split into row and col pairs");
    RopeTable t;
    t.rows = rows;
    t.cols = cols;
    t.dim = dim;
    t.heads = heads;
    t.pairs = head_dim / 4;
    std::vector<double> freq(t.pairs);
    for (int j = 0; j < t.pairs; ++j) freq[j] = std::pow(10000.0, -static_cast<double>(j) / t.pairs);
    t.row_cos.resize(static_cast<std::size_t>(rows) * t.pairs);
    t.row_sin.resize(static_cast<std::size_t>(rows) * t.pairs);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < t.pairs; ++j) {
            t.row_cos[static_cast<std::size_t>(r) * t.pairs + j] = std::cos(r * freq[j]);
            t.row_sin[static_cast<std::size_t>(r) * t.pairs + j] = std::sin(r * freq[j]);
        }
    t.col_cos.resize(static_cast<std::size_t>(cols + 2) * t.pairs);
    t.col_sin.resize(static_cast<std::size_t>(cols + 2) * t.pairs);
    for (int c = -1; c <= cols; ++c)
        for (int j = 0; j < t.pairs; ++j) {
            t.col_cos[static_cast<std::size_t>(c + 1) * t.pairs + j] = std::cos(c * freq[j]);
            t.col_sin[static_cast<std::size_t>(c + 1) * t.pairs + j] = std::sin(c * freq[j]);
        }
    return t;
}

namespace {
inline void rotate_pairs(double* x, int pairs, const double* cs, const double* sn, double sign) {
    for (int j = 0; j < pairs; ++j) {
        const double c = cs[j], s = sign * sn[j];
        const double a = x[2 * j], b = x[2 * j + 1];
        x[2 * j] = a * c - b * s;
        x[2 * j + 1] = a * s + b * c;
    }
}

inline void rope_apply(double* token, const RopeTable& t, int row, int col, double sign) {
    if (row < 0 || row >= t.rows || col < -1 || col > t.cols)
        throw std::domain_error("rope_rotate: position out of table range");
    const int head_dim = 4 * t.pairs;
    const double* rc = &t.row_cos[static_cast<std::size_t>(row) * t.pairs];
    const double* rs = &t.row_sin[static_cast<std::size_t>(row) * t.pairs];
    const double* cc = &t.col_cos[static_cast<std::size_t>(col + 1) * t.pairs];
    const double* cs = &t.col_sin[static_cast<std::size_t>(col + 1) * t.pairs];
    for (int h = 0; h < t.heads; ++h) {
        double* base = token + static_cast<std::size_t>(h) * head_dim;
        rotate_pairs(base, t.pairs, rc, rs, sign);
        rotate_pairs(base + 2 * t.pairs, t.pairs, cc, cs, sign);
    }
}
}  // namespace

void rope_rotate(double* token, const RopeTable& table, int row, int col) {
    rope_apply(token, table, row, col, 1.0);
}

void rope_rotate_inverse(double* token, const RopeTable& table, int row, int col) {
    rope_apply(token, table, row, col, -1.0);
}

PaddedTokenGrid circular_pad(const TokenGrid& tokens, PadPosition mode) {
    if (tokens.cols < 2) throw std::domain_error("circular_pad: need at least two columns");
    const int H = tokens.rows, W = tokens.cols, d = tokens.dim;
    PaddedTokenGrid out;
    out.rows = H;
    out.cols_core = W;
    out.dim = d;
    out.data.resize(static_cast<std::size_t>(H) * (W + 2) * d);
    for (int r = 0; r < H; ++r) {
        std::copy(tokens.token(r, W - 1), tokens.token(r, W - 1) + d, out.token(r, 0));
        std::copy(tokens.token(r, 0), tokens.token(r, 0) + static_cast<std::size_t>(W) * d,
                  out.token(r, 1));
        std::copy(tokens.token(r, 0), tokens.token(r, 0) + d, out.token(r, W + 1));
    }
    out.col_positions.resize(W + 2);
    if (mode == PadPosition::CopySource) {
        out.col_positions[0] = W - 1;
        out.col_positions[W + 1] = 0;
    } else {
        out.col_positions[0] = -1;
        out.col_positions[W + 1] = W;
    }
    for (int c = 0; c < W; ++c) out.col_positions[c + 1] = c;
    return out;
}

TokenGrid crop_pad(const PaddedTokenGrid& padded) {
    const int H = padded.rows, W = padded.cols_core, d = padded.dim;
    TokenGrid out(H, W, d);
    for (int r = 0; r < H; ++r)
        std::copy(padded.token(r, 1), padded.token(r, 1) + static_cast<std::size_t>(W) * d,
                  out.token(r, 0));
    return out;
}

TokenGrid roll_token_columns(const TokenGrid& tokens, int shift) {
    const int W = tokens.cols;
    TokenGrid out(tokens.rows, W, tokens.dim);
    for (int r = 0; r < tokens.rows; ++r)
        for (int c = 0; c < W; ++c) {
            const int src = ((c - shift) % W + W) % W;
            std::copy(tokens.token(r, src), tokens.token(r, src) + tokens.dim, out.token(r, c));
        }
    return out;
}

}  // namespace pano360
