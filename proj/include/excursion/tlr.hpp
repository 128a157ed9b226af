#pragma once

// Tile low-rank storage: dense diagonal tiles, off-diagonal lower tiles kept
// as truncated U V^T factorizations, plus the TLR Cholesky built on them.

#include "excursion/field.hpp"
#include "excursion/runtime.hpp"
#include "excursion/tiles.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace excursion {

struct TlrConfig {
    double epsilon = 1e-3;    // relative Frobenius accuracy per tile
    std::size_t maxrank = 0;  // 0 means the tile size
    std::size_t tile = 256;
    // Decompress L tiles before the PMVN correction GEMMs instead of using
    // the factored product. Same result up to rounding.
    bool decompress_gemm = false;

    void validate() const;
    std::size_t rank_cap(std::size_t rows, std::size_t cols) const noexcept;
};

struct LowRankTile {
    Eigen::MatrixXd u; // rows x k, singular values folded in
    Eigen::MatrixXd v; // cols x k
    bool rank_capped = false;

    std::size_t rank() const noexcept { return static_cast<std::size_t>(u.cols()); }
    Eigen::MatrixXd dense() const;
};

class TlrMatrix {
public:
    TlrMatrix() = default;
    TlrMatrix(TileLayout layout, TlrConfig cfg);

    const TileLayout& layout() const noexcept { return layout_; }
    const TlrConfig& config() const noexcept { return cfg_; }
    bool factored() const noexcept { return factored_; }
    void set_factored(bool f) noexcept { factored_ = f; }

    Tile& diag(std::size_t i) { return diag_.at(i); }
    const Tile& diag(std::size_t i) const { return diag_.at(i); }
    // Lower tile i > j.
    LowRankTile& low(std::size_t i, std::size_t j);
    const LowRankTile& low(std::size_t i, std::size_t j) const;

    // Symmetric (or lower-triangular once factored) dense reconstruction.
    Eigen::MatrixXd to_dense() const;
    std::size_t capped_tiles() const;

private:
    std::size_t low_index(std::size_t i, std::size_t j) const;

    TileLayout layout_;
    TlrConfig cfg_;
    std::vector<Tile> diag_;
    std::vector<LowRankTile> low_; // packed strictly-lower, row by row
    bool factored_ = false;
};

// Truncated SVD: the smallest k with ||A - U V^T||_F <= eps ||A||_F, capped
// at the configured maximum (the tile is then flagged).
LowRankTile compress_tile(const Eigen::MatrixXd& a, const TlrConfig& cfg);

// Re-truncates the product U V^T of stacked factors: QR of U and of V, SVD
// of the small core R_u R_v^T, truncation at eps relative to the product's
// own norm.
LowRankTile recompress(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const TlrConfig& cfg);

TlrMatrix tlr_from_dense(const Eigen::MatrixXd& sigma, const TlrConfig& cfg,
                         const ExecutionPolicy& policy = {});
// Assembles tile by tile; the dense matrix is never formed.
TlrMatrix tlr_assemble(const Geometry& geom, const MaternParams& p, const TlrConfig& cfg,
                       double nugget = 0.0, const ExecutionPolicy& policy = {});

// Right-looking Cholesky on the TLR format, driven by the same task graph as
// the dense factorization.
TlrMatrix tlr_cholesky(TlrMatrix a, const ExecutionPolicy& policy = {},
                       TaskTrace* trace = nullptr);

// a <- a - U (V^T y)
void lr_gemm_update(Tile& a, const LowRankTile& l, const Tile& y);

struct RankEntry {
    std::size_t i = 0, j = 0, rank = 0;
    bool capped = false;
};

struct RankStats {
    std::vector<RankEntry> tiles; // lower triangle, row by row
    std::size_t min = 0, max = 0;
    double mean = 0.0;
    std::size_t capped = 0;
};

RankStats rank_stats(const TlrMatrix& a);

} // namespace excursion
