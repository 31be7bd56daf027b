#pragma once

#include <cstdint>
#include <vector>

#include "pano360/image.hpp"

namespace pano360 {

// Dense H x W grid of d-dimensional tokens, row-major, token-contiguous.
struct TokenGrid {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<double> data;

    TokenGrid() = default;
    TokenGrid(int h, int w, int d, double fill = 0.0)
        : rows(h), cols(w), dim(d), data(static_cast<std::size_t>(h) * w * d, fill) {}

    double& at(int r, int c, int k) {
        return data[(static_cast<std::size_t>(r) * cols + c) * dim + k];
    }
    double at(int r, int c, int k) const {
        return data[(static_cast<std::size_t>(r) * cols + c) * dim + k];
    }
    double* token(int r, int c) { return &data[(static_cast<std::size_t>(r) * cols + c) * dim]; }
    const double* token(int r, int c) const {
        return &data[(static_cast<std::size_t>(r) * cols + c) * dim];
    }
    int count() const { return rows * cols; }
};

// Frozen linear codec between pixel patches and tokens. The projection has
// orthonormal columns, so unpatchify(patchify(x)) reproduces x exactly up to
// floating point. Stands in for a pretrained autoencoder.
struct PatchCodec {
    int patch = 0;
    int channels = 0;
    int dim = 0;
    std::vector<double> proj;  // dim x m column-orthonormal, m = patch*patch*channels
    std::vector<double> bias;  // dim, zero by default

    int patch_values() const { return patch * patch * channels; }

    // Q factor of a seeded Gaussian matrix, column signs fixed by the R diagonal.
    static PatchCodec orthonormal(int patch, int channels, int dim, std::uint64_t seed);
};

TokenGrid patchify(const ErpImage& img, const PatchCodec& codec);
ErpImage unpatchify(const TokenGrid& tokens, const PatchCodec& codec);

// Axis-factorized 2-D rotary phase table. Each head's dimensions are split
// in half: the first half rotates with the row index, the second with the
// column index. Column entries cover indices -1..W so padded columns can
// carry either copied or out-of-range positions.
struct RopeTable {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    int heads = 0;
    int pairs = 0;  // rotation pairs per axis per head
    std::vector<double> row_cos, row_sin;  // rows x pairs
    std::vector<double> col_cos, col_sin;  // (cols + 2) x pairs, index c stored at c + 1

    double rc(int r, int j) const { return row_cos[static_cast<std::size_t>(r) * pairs + j]; }
    double rs(int r, int j) const { return row_sin[static_cast<std::size_t>(r) * pairs + j]; }
    double cc(int c, int j) const {
        return col_cos[static_cast<std::size_t>(c + 1) * pairs + j];
    }
    double cs(int c, int j) const {
        return col_sin[static_cast<std::size_t>(c + 1) * pairs + j];
    }
};

RopeTable rope_table(int rows, int cols, int dim, int heads);

// In-place rotation of one token by its (row, col) position. col may be -1..W.
void rope_rotate(double* token, const RopeTable& table, int row, int col);
// Adjoint of rope_rotate (rotation by the negative angles).
void rope_rotate_inverse(double* token, const RopeTable& table, int row, int col);

// How padded columns acquire positional entries: copies of their source
// columns (content and position travel together) or fresh out-of-range
// indices -1 and W.
enum class PadPosition { CopySource, FreshIndex };

// Token grid with one wrapped column on each side. Column position indices
// are stored explicitly; rows keep their own indices.
struct PaddedTokenGrid {
    int rows = 0;
    int cols_core = 0;  // data holds cols_core + 2 columns
    int dim = 0;
    std::vector<double> data;
    std::vector<int> col_positions;  // length cols_core + 2

    int cols_padded() const { return cols_core + 2; }
    double& at(int r, int c, int k) {
        return data[(static_cast<std::size_t>(r) * (cols_core + 2) + c) * dim + k];
    }
    double at(int r, int c, int k) const {
        return data[(static_cast<std::size_t>(r) * (cols_core + 2) + c) * dim + k];
    }
    double* token(int r, int c) {
        return &data[(static_cast<std::size_t>(r) * (cols_core + 2) + c) * dim];
    }
    const double* token(int r, int c) const {
        return &data[(static_cast<std::size_t>(r) * (cols_core + 2) + c) * dim];
    }
};

// [X_{W-1}, X, X_0] along the width axis; positional entries follow `mode`.
PaddedTokenGrid circular_pad(const TokenGrid& tokens, PadPosition mode = PadPosition::CopySource);
// Drops the two padded columns. crop_pad(circular_pad(x)) == x bit-exact.
TokenGrid crop_pad(const PaddedTokenGrid& padded);

// Quantized yaw action on a token lattice: out[:, u] = in[:, (u - shift) mod W].
// Any integer shift is accepted and wrapped.
TokenGrid roll_token_columns(const TokenGrid& tokens, int shift);

}  // namespace pano360
