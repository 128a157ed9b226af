#pragma once

// Tile-layout matrix storage and the dense tile kernels behind the
// right-looking tiled Cholesky factorization.

#include "excursion/runtime.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace excursion {

// Column-major dense block.
using Tile = Eigen::MatrixXd;

struct TileLayout {
    std::size_t n = 0;  // matrix order
    std::size_t m = 0;  // nominal tile size
    std::size_t nt = 0; // tiles per side, ceil(n / m)

    // m is clamped to n; m == 0 or n == 0 is a ParameterError.
    static TileLayout make(std::size_t n, std::size_t m);

    std::size_t offset(std::size_t i) const noexcept { return i * m; }
    // Rows (or columns) of tile index i; the last tile may be ragged.
    std::size_t extent(std::size_t i) const noexcept {
        const std::size_t rest = n - i * m;
        return rest < m ? rest : m;
    }
};

enum class Storage {
    General,         // all nt x nt tiles
    SymmetricLower,  // tiles i >= j; the upper triangle mirrors the lower
    LowerTriangular, // tiles i >= j; the upper triangle is zero
};

class DenseTileMatrix {
public:
    DenseTileMatrix() = default;
    DenseTileMatrix(TileLayout layout, Storage storage);

    static DenseTileMatrix from_dense(const Eigen::MatrixXd& a, std::size_t m, Storage storage);
    Eigen::MatrixXd to_dense() const;

    const TileLayout& layout() const noexcept { return layout_; }
    Storage storage() const noexcept { return storage_; }
    bool materialized(std::size_t i, std::size_t j) const noexcept {
        return storage_ == Storage::General || i >= j;
    }

    Tile& tile(std::size_t i, std::size_t j);
    const Tile& tile(std::size_t i, std::size_t j) const;

    // Element access through the storage convention.
    double at(std::size_t row, std::size_t col) const;

    void set_storage(Storage s) noexcept { storage_ = s; }

private:
    TileLayout layout_;
    Storage storage_ = Storage::General;
    std::vector<Tile> tiles_; // row-major over tile indices
};

struct CholeskyFactor {
    DenseTileMatrix lower;          // Storage::LowerTriangular
    std::uint64_t fingerprint = 0;  // hash of the factored matrix
};

// FNV-1a over the stored bytes of the lower tiles.
std::uint64_t fingerprint(const DenseTileMatrix& a);

// Tile kernels. Loop orders are fixed: every output element accumulates its
// products in ascending inner index, independent of the caller.

// In-place lower Cholesky of a diagonal tile; the strict upper part is
// zeroed. `row0` is the global index of the tile's first row, used in the
// FactorizationError raised on a non-positive (or NaN) pivot.
void tile_potrf(Tile& a, std::size_t row0);

// b <- b * l^{-T} (l lower triangular).
void tile_trsm_right_lower_t(const Tile& l, Tile& b);

// b <- l^{-1} * b (l lower triangular).
void tile_trsm_left_lower(const Tile& l, Tile& b);

// c <- c - a * b^T
void tile_gemm_nt(Tile& c, const Tile& a, const Tile& b);

// a <- a - l * y. Throws ShapeError for non-conformable tiles.
void tile_gemm_update(Tile& a, const Tile& l, const Tile& y);

// Right-looking tiled Cholesky executed as a task graph. Requires
// Storage::SymmetricLower.
CholeskyFactor tiled_cholesky(DenseTileMatrix sigma, const ExecutionPolicy& policy = {},
                              TaskTrace* trace = nullptr);

// Convenience: factor a flat symmetric matrix, return the flat lower factor.
Eigen::MatrixXd dense_cholesky(const Eigen::MatrixXd& sigma, std::size_t m = 256,
                               const ExecutionPolicy& policy = {});

} // namespace excursion
