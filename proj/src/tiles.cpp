#include "excursion/tiles.hpp"

#include "excursion/error.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace excursion {

TileLayout TileLayout::make(std::size_t n, std::size_t m) {
    if (n == 0)
        throw ParameterError("tile layout: matrix order must be positive");
    if (m == 0)
        throw ParameterError("tile layout: tile size must be positive");
    if (m > n)
        m = n;
    return TileLayout{n, m, (n + m - 1) / m};
}

DenseTileMatrix::DenseTileMatrix(TileLayout layout, Storage storage)
    : layout_(layout), storage_(storage), tiles_(layout.nt * layout.nt) {
    for (std::size_t i = 0; i < layout.nt; ++i)
        for (std::size_t j = 0; j < layout.nt; ++j)
            if (materialized(i, j))
                tiles_[i * layout.nt + j] = Tile::Zero(layout.extent(i), layout.extent(j));
}

DenseTileMatrix DenseTileMatrix::from_dense(const Eigen::MatrixXd& a, std::size_t m,
                                            Storage storage) {
    if (a.rows() != a.cols())
        throw ShapeError("from_dense: matrix must be square");
    DenseTileMatrix t(TileLayout::make(static_cast<std::size_t>(a.rows()), m), storage);
    const auto& L = t.layout_;
    for (std::size_t i = 0; i < L.nt; ++i)
        for (std::size_t j = 0; j < L.nt; ++j)
            if (t.materialized(i, j))
                t.tile(i, j) = a.block(L.offset(i), L.offset(j), L.extent(i), L.extent(j));
    return t;
}

Eigen::MatrixXd DenseTileMatrix::to_dense() const {
    const auto& L = layout_;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(L.n, L.n);
    for (std::size_t i = 0; i < L.nt; ++i)
        for (std::size_t j = 0; j < L.nt; ++j) {
            if (!materialized(i, j))
                continue;
            a.block(L.offset(i), L.offset(j), L.extent(i), L.extent(j)) = tile(i, j);
            if (storage_ == Storage::SymmetricLower && i > j)
                a.block(L.offset(j), L.offset(i), L.extent(j), L.extent(i)) =
                    tile(i, j).transpose();
        }
    if (storage_ == Storage::SymmetricLower) {
        // Diagonal tiles are stored in full; mirror their lower halves.
        for (std::size_t c = 0; c < L.n; ++c)
            for (std::size_t r = c + 1; r < L.n; ++r)
                a(c, r) = a(r, c);
    } else if (storage_ == Storage::LowerTriangular) {
        a.triangularView<Eigen::StrictlyUpper>().setZero();
    }
    return a;
}

Tile& DenseTileMatrix::tile(std::size_t i, std::size_t j) {
    if (!materialized(i, j))
        throw ShapeError("tile (" + std::to_string(i) + "," + std::to_string(j) +
                         ") is not stored");
    return tiles_[i * layout_.nt + j];
}

const Tile& DenseTileMatrix::tile(std::size_t i, std::size_t j) const {
    return const_cast<DenseTileMatrix*>(this)->tile(i, j);
}

double DenseTileMatrix::at(std::size_t row, std::size_t col) const {
    const std::size_t m = layout_.m;
    if (storage_ != Storage::General && row < col) {
        if (storage_ == Storage::LowerTriangular)
            return 0.0;
        std::swap(row, col);
    }
    return tile(row / m, col / m)(row % m, col % m);
}

std::uint64_t fingerprint(const DenseTileMatrix& a) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto& L = a.layout();
    for (std::size_t i = 0; i < L.nt; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const Tile& t = a.tile(i, j);
            const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
            const std::size_t len = static_cast<std::size_t>(t.size()) * sizeof(double);
            for (std::size_t b = 0; b < len; ++b) {
                h ^= bytes[b];
                h *= 1099511628211ULL;
            }
        }
    return h;
}

void tile_potrf(Tile& a, std::size_t row0) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n)
        throw ShapeError("tile_potrf: tile must be square");
    double* p = a.data();
    for (Eigen::Index j = 0; j < n; ++j) {
        double* cj = p + j * n;
        const double d = cj[j];
        if (!(d > 0.0))
            throw FactorizationError(row0 + static_cast<std::size_t>(j),
                                     "Cholesky: matrix is not positive definite");
        const double ljj = std::sqrt(d);
        cj[j] = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i)
            cj[i] /= ljj;
        for (Eigen::Index k = j + 1; k < n; ++k) {
            double* ck = p + k * n;
            const double lkj = cj[k];
            for (Eigen::Index i = k; i < n; ++i)
                ck[i] -= cj[i] * lkj;
        }
    }
    for (Eigen::Index j = 1; j < n; ++j)
        for (Eigen::Index i = 0; i < j; ++i)
            p[j * n + i] = 0.0;
}

void tile_trsm_right_lower_t(const Tile& l, Tile& b) {
    const Eigen::Index n = l.rows();
    const Eigen::Index r = b.rows();
    if (l.cols() != n || b.cols() != n)
        throw ShapeError("tile_trsm_right_lower_t: shape mismatch");
    const double* lp = l.data();
    double* bp = b.data();
    // Column j of X solves X(:,j) l(j,j) = B(:,j) - sum_{t<j} X(:,t) l(j,t).
    for (Eigen::Index j = 0; j < n; ++j) {
        double* xj = bp + j * r;
        for (Eigen::Index t = 0; t < j; ++t) {
            const double ljt = lp[t * n + j];
            const double* xt = bp + t * r;
            for (Eigen::Index i = 0; i < r; ++i)
                xj[i] -= xt[i] * ljt;
        }
        const double ljj = lp[j * n + j];
        for (Eigen::Index i = 0; i < r; ++i)
            xj[i] /= ljj;
    }
}

void tile_trsm_left_lower(const Tile& l, Tile& b) {
    const Eigen::Index n = l.rows();
    if (l.cols() != n || b.rows() != n)
        throw ShapeError("tile_trsm_left_lower: shape mismatch");
    const double* lp = l.data();
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
        double* x = b.data() + c * n;
        for (Eigen::Index j = 0; j < n; ++j) {
            x[j] /= lp[j * n + j];
            const double xj = x[j];
            const double* lj = lp + j * n;
            for (Eigen::Index i = j + 1; i < n; ++i)
                x[i] -= lj[i] * xj;
        }
    }
}

namespace {

// c(p,q) -= sum_t a(p,t) * b(t,q) with b addressed through (t,q) -> b[t*bs_t + q*bs_q].
// Four output columns share each pass over a column of a; every element
// still accumulates in ascending t.
void gemm_minus(double* c, Eigen::Index ldc, const double* a, Eigen::Index lda,
                const double* b, Eigen::Index bs_t, Eigen::Index bs_q, Eigen::Index rows,
                Eigen::Index cols, Eigen::Index inner) {
    Eigen::Index q = 0;
    for (; q + 4 <= cols; q += 4) {
        double* c0 = c + q * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        for (Eigen::Index t = 0; t < inner; ++t) {
            const double* at = a + t * lda;
            const double b0 = b[t * bs_t + q * bs_q];
            const double b1 = b[t * bs_t + (q + 1) * bs_q];
            const double b2 = b[t * bs_t + (q + 2) * bs_q];
            const double b3 = b[t * bs_t + (q + 3) * bs_q];
            for (Eigen::Index p = 0; p < rows; ++p) {
                const double ap = at[p];
                c0[p] -= ap * b0;
                c1[p] -= ap * b1;
                c2[p] -= ap * b2;
                c3[p] -= ap * b3;
            }
        }
    }
    for (; q < cols; ++q) {
        double* cq = c + q * ldc;
        for (Eigen::Index t = 0; t < inner; ++t) {
            const double* at = a + t * lda;
            const double bt = b[t * bs_t + q * bs_q];
            for (Eigen::Index p = 0; p < rows; ++p)
                cq[p] -= at[p] * bt;
        }
    }
}

} // namespace

void tile_gemm_nt(Tile& c, const Tile& a, const Tile& b) {
    if (c.rows() != a.rows() || c.cols() != b.rows() || a.cols() != b.cols())
        throw ShapeError("tile_gemm_nt: shape mismatch");
    // b^T(t,q) = b(q,t) = b[q + t*ldb]
    gemm_minus(c.data(), c.rows(), a.data(), a.rows(), b.data(), b.rows(), 1, c.rows(),
               c.cols(), a.cols());
}

void tile_gemm_update(Tile& a, const Tile& l, const Tile& y) {
    if (a.rows() != l.rows() || l.cols() != y.rows() || a.cols() != y.cols())
        throw ShapeError("tile_gemm_update: shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " -= " + std::to_string(l.rows()) + "x" +
                         std::to_string(l.cols()) + " * " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()) + ")");
    gemm_minus(a.data(), a.rows(), l.data(), l.rows(), y.data(), 1, y.rows(), a.rows(),
               a.cols(), l.cols());
}

CholeskyFactor tiled_cholesky(DenseTileMatrix sigma, const ExecutionPolicy& policy,
                              TaskTrace* trace) {
    if (sigma.storage() != Storage::SymmetricLower)
        throw ParameterError("tiled_cholesky: expects symmetric lower storage");
    const std::uint64_t fp = fingerprint(sigma);
    const TileLayout layout = sigma.layout();
    const TaskGraph graph = build_cholesky_dag(layout.nt, Backend::Dense);
    auto kernel = [&](const Task& t) {
        switch (t.kernel) {
        case Kernel::Potrf:
            tile_potrf(sigma.tile(t.k, t.k), layout.offset(t.k));
            break;
        case Kernel::Trsm:
            tile_trsm_right_lower_t(sigma.tile(t.k, t.k), sigma.tile(t.i, t.k));
            break;
        case Kernel::Syrk: {
            const Tile& l = sigma.tile(t.i, t.k);
            tile_gemm_nt(sigma.tile(t.i, t.i), l, l);
            break;
        }
        case Kernel::Gemm:
            tile_gemm_nt(sigma.tile(t.i, t.j), sigma.tile(t.i, t.k), sigma.tile(t.j, t.k));
            break;
        default:
            throw GraphError("tiled_cholesky: unexpected kernel");
        }
    };
    TaskTrace tr = execute(graph, kernel, policy);
    if (trace)
        *trace = std::move(tr);
    sigma.set_storage(Storage::LowerTriangular);
    return CholeskyFactor{std::move(sigma), fp};
}

Eigen::MatrixXd dense_cholesky(const Eigen::MatrixXd& sigma, std::size_t m,
                               const ExecutionPolicy& policy) {
    return tiled_cholesky(DenseTileMatrix::from_dense(sigma, m, Storage::SymmetricLower), policy)
        .lower.to_dense();
}

} // namespace excursion
