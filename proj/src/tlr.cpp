#include "excursion/tlr.hpp"

#include "excursion/error.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace excursion {

void TlrConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ParameterError("TLR epsilon must lie in (0, 1), got " + std::to_string(epsilon));
    if (tile == 0)
        throw ParameterError("TLR tile size must be at least 1");
    if (maxrank > tile)
        throw ParameterError("TLR maxrank " + std::to_string(maxrank) + " exceeds tile size " +
                             std::to_string(tile));
}

std::size_t TlrConfig::rank_cap(std::size_t rows, std::size_t cols) const noexcept {
    std::size_t cap = std::min(rows, cols);
    if (maxrank > 0)
        cap = std::min(cap, maxrank);
    return cap;
}

Eigen::MatrixXd LowRankTile::dense() const {
    if (u.cols() == 0)
        return Eigen::MatrixXd::Zero(u.rows(), v.rows());
    return u * v.transpose();
}

TlrMatrix::TlrMatrix(TileLayout layout, TlrConfig cfg)
    : layout_(layout), cfg_(cfg), diag_(layout.nt),
      low_(layout.nt * (layout.nt > 0 ? layout.nt - 1 : 0) / 2) {
    for (std::size_t i = 0; i < layout_.nt; ++i) {
        const auto ri = static_cast<Eigen::Index>(layout_.extent(i));
        diag_[i] = Tile::Zero(ri, ri);
        for (std::size_t j = 0; j < i; ++j) {
            const auto cj = static_cast<Eigen::Index>(layout_.extent(j));
            low(i, j) = LowRankTile{Eigen::MatrixXd(ri, 0), Eigen::MatrixXd(cj, 0), false};
        }
    }
}

std::size_t TlrMatrix::low_index(std::size_t i, std::size_t j) const {
    if (!(i > j && i < layout_.nt))
        throw ShapeError("TLR low-rank tile (" + std::to_string(i) + "," + std::to_string(j) +
                         ") is not in the strict lower triangle");
    return i * (i - 1) / 2 + j;
}

LowRankTile& TlrMatrix::low(std::size_t i, std::size_t j) { return low_[low_index(i, j)]; }
const LowRankTile& TlrMatrix::low(std::size_t i, std::size_t j) const {
    return low_[low_index(i, j)];
}

Eigen::MatrixXd TlrMatrix::to_dense() const {
    const auto n = static_cast<Eigen::Index>(layout_.n);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < layout_.nt; ++i) {
        const auto oi = static_cast<Eigen::Index>(layout_.offset(i));
        const auto ri = static_cast<Eigen::Index>(layout_.extent(i));
        out.block(oi, oi, ri, ri) = diag_[i];
        for (std::size_t j = 0; j < i; ++j) {
            const auto oj = static_cast<Eigen::Index>(layout_.offset(j));
            const auto cj = static_cast<Eigen::Index>(layout_.extent(j));
            const Eigen::MatrixXd d = low(i, j).dense();
            out.block(oi, oj, ri, cj) = d;
            if (!factored_)
                out.block(oj, oi, cj, ri) = d.transpose();
        }
    }
    if (factored_)
        out.triangularView<Eigen::StrictlyUpper>().setZero();
    return out;
}

std::size_t TlrMatrix::capped_tiles() const {
    return static_cast<std::size_t>(
        std::count_if(low_.begin(), low_.end(), [](const LowRankTile& t) { return t.rank_capped; }));
}

namespace {

// Smallest k whose discarded tail satisfies the relative tolerance.
std::size_t truncation_rank(const Eigen::VectorXd& s, double eps) {
    const Eigen::Index r = s.size();
    double total = 0.0;
    for (Eigen::Index i = r - 1; i >= 0; --i)
        total += s(i) * s(i);
    if (total == 0.0)
        return 0;
    const double budget = eps * eps * total;
    double tail = 0.0;
    Eigen::Index k = r;
    while (k > 0 && tail + s(k - 1) * s(k - 1) <= budget) {
        tail += s(k - 1) * s(k - 1);
        --k;
    }
    return static_cast<std::size_t>(k);
}

LowRankTile truncate(const Eigen::MatrixXd& left, const Eigen::VectorXd& s,
                     const Eigen::MatrixXd& right, const TlrConfig& cfg, std::size_t cap) {
    std::size_t k = truncation_rank(s, cfg.epsilon);
    bool capped = false;
    if (k > cap) {
        k = cap;
        capped = true;
    }
    const auto kk = static_cast<Eigen::Index>(k);
    LowRankTile out;
    out.u = left.leftCols(kk) * s.head(kk).asDiagonal();
    out.v = right.leftCols(kk);
    out.rank_capped = capped;
    return out;
}

LowRankTile empty_tile(Eigen::Index rows, Eigen::Index cols) {
    return LowRankTile{Eigen::MatrixXd(rows, 0), Eigen::MatrixXd(cols, 0), false};
}

} // namespace

LowRankTile compress_tile(const Eigen::MatrixXd& a, const TlrConfig& cfg) {
    if (!a.allFinite())
        throw DomainError("compress_tile: tile has non-finite entries");
    if (a.size() == 0 || a.squaredNorm() == 0.0)
        return empty_tile(a.rows(), a.cols());
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return truncate(svd.matrixU(), svd.singularValues(), svd.matrixV(), cfg,
                    cfg.rank_cap(static_cast<std::size_t>(a.rows()),
                                 static_cast<std::size_t>(a.cols())));
}

LowRankTile recompress(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const TlrConfig& cfg) {
    if (u.cols() != v.cols())
        throw ShapeError("recompress: factor ranks differ");
    if (u.cols() == 0)
        return empty_tile(u.rows(), v.rows());
    const Eigen::Index ku = std::min(u.rows(), u.cols());
    const Eigen::Index kv = std::min(v.rows(), v.cols());
    Eigen::HouseholderQR<Eigen::MatrixXd> qu(u), qv(v);
    const Eigen::MatrixXd ru = qu.matrixQR().topRows(ku).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rv = qv.matrixQR().topRows(kv).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd core = ru * rv.transpose();
    if (core.squaredNorm() == 0.0)
        return empty_tile(u.rows(), v.rows());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd q_u = qu.householderQ() * Eigen::MatrixXd::Identity(u.rows(), ku);
    const Eigen::MatrixXd q_v = qv.householderQ() * Eigen::MatrixXd::Identity(v.rows(), kv);
    const std::size_t cap = std::min(
        cfg.rank_cap(static_cast<std::size_t>(u.rows()), static_cast<std::size_t>(v.rows())),
        static_cast<std::size_t>(u.cols()));
    return truncate(q_u * svd.matrixU(), svd.singularValues(), q_v * svd.matrixV(), cfg, cap);
}

namespace {

TlrMatrix compress_all(TlrMatrix out, const std::vector<Eigen::MatrixXd>& dense_low,
                       const ExecutionPolicy& policy) {
    parallel_for(
        dense_low.size(),
        [&](std::size_t idx) {
            // packed index -> (i, j), i > j
            std::size_t i = 1;
            while (i * (i + 1) / 2 <= idx)
                ++i;
            const std::size_t j = idx - i * (i - 1) / 2;
            out.low(i, j) = compress_tile(dense_low[idx], out.config());
        },
        policy);
    return out;
}

} // namespace

TlrMatrix tlr_from_dense(const Eigen::MatrixXd& sigma, const TlrConfig& cfg,
                         const ExecutionPolicy& policy) {
    cfg.validate();
    if (sigma.rows() != sigma.cols())
        throw ShapeError("tlr_from_dense: matrix is not square");
    const TileLayout layout = TileLayout::make(static_cast<std::size_t>(sigma.rows()), cfg.tile);
    TlrMatrix out(layout, cfg);
    std::vector<Eigen::MatrixXd> blocks;
    for (std::size_t i = 0; i < layout.nt; ++i) {
        const auto oi = static_cast<Eigen::Index>(layout.offset(i));
        const auto ri = static_cast<Eigen::Index>(layout.extent(i));
        out.diag(i) = sigma.block(oi, oi, ri, ri);
        for (std::size_t j = 0; j < i; ++j)
            blocks.emplace_back(sigma.block(oi, static_cast<Eigen::Index>(layout.offset(j)), ri,
                                            static_cast<Eigen::Index>(layout.extent(j))));
    }
    return compress_all(std::move(out), blocks, policy);
}

TlrMatrix tlr_assemble(const Geometry& geom, const MaternParams& p, const TlrConfig& cfg,
                       double nugget, const ExecutionPolicy& policy) {
    geom.validate();
    p.validate();
    cfg.validate();
    if (!std::isfinite(nugget) || nugget < 0.0)
        throw ParameterError("nugget must be finite and non-negative");
    if (const auto dups = duplicate_points(geom); !dups.empty())
        warn("tlr_assemble: " + std::to_string(dups.size()) +
             " duplicate location pair(s); covariance will be singular");
    const TileLayout layout = TileLayout::make(geom.size(), cfg.tile);
    TlrMatrix out(layout, cfg);
    auto fill = [&](std::size_t ti, std::size_t tj) {
        const std::size_t oi = layout.offset(ti), oj = layout.offset(tj);
        const auto ri = static_cast<Eigen::Index>(layout.extent(ti));
        const auto cj = static_cast<Eigen::Index>(layout.extent(tj));
        Eigen::MatrixXd t(ri, cj);
        for (Eigen::Index c = 0; c < cj; ++c)
            for (Eigen::Index r = 0; r < ri; ++r) {
                const std::size_t gi = oi + static_cast<std::size_t>(r);
                const std::size_t gj = oj + static_cast<std::size_t>(c);
                if (gi == gj)
                    t(r, c) = p.sigma2 + nugget;
                else if (gi > gj)
                    t(r, c) = matern_cov(distance(geom.points[gi], geom.points[gj]), p);
                else
                    t(r, c) = 0.0;
            }
        if (ti == tj)
            t.triangularView<Eigen::StrictlyUpper>() = t.transpose();
        return t;
    };
    for (std::size_t i = 0; i < layout.nt; ++i)
        out.diag(i) = fill(i, i);
    std::vector<Eigen::MatrixXd> blocks(layout.nt * (layout.nt - 1) / 2);
    parallel_for(
        blocks.size(),
        [&](std::size_t idx) {
            std::size_t i = 1;
            while (i * (i + 1) / 2 <= idx)
                ++i;
            blocks[idx] = fill(i, idx - i * (i - 1) / 2);
        },
        policy);
    return compress_all(std::move(out), blocks, policy);
}

void lr_gemm_update(Tile& a, const LowRankTile& l, const Tile& y) {
    if (a.rows() != l.u.rows() || l.v.rows() != y.rows() || a.cols() != y.cols())
        throw ShapeError("lr_gemm_update: shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " -= [" + std::to_string(l.u.rows()) + "x" +
                         std::to_string(l.v.rows()) + ", rank " + std::to_string(l.rank()) +
                         "] * " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()) + ")");
    if (l.rank() == 0)
        return;
    const Eigen::MatrixXd w = l.v.transpose() * y;
    a.noalias() -= l.u * w;
}

TlrMatrix tlr_cholesky(TlrMatrix a, const ExecutionPolicy& policy, TaskTrace* trace) {
    if (a.factored())
        throw ParameterError("tlr_cholesky: matrix is already factored");
    const TileLayout layout = a.layout();
    const TlrConfig cfg = a.config();
    const TaskGraph graph = build_cholesky_dag(layout.nt, Backend::Tlr);
    auto kernel = [&](const Task& t) {
        switch (t.kernel) {
        case Kernel::Potrf:
            tile_potrf(a.diag(t.k), layout.offset(t.k));
            break;
        case Kernel::Trsm: {
            LowRankTile& lik = a.low(t.i, t.k);
            if (lik.rank() > 0)
                tile_trsm_left_lower(a.diag(t.k), lik.v);
            break;
        }
        case Kernel::Syrk: {
            const LowRankTile& l = a.low(t.i, t.k);
            if (l.rank() == 0)
                break;
            const Eigen::MatrixXd w = l.u * (l.v.transpose() * l.v);
            tile_gemm_nt(a.diag(t.i), w, l.u);
            break;
        }
        case Kernel::Gemm: {
            const LowRankTile& lik = a.low(t.i, t.k);
            const LowRankTile& ljk = a.low(t.j, t.k);
            if (lik.rank() == 0 || ljk.rank() == 0)
                break;
            LowRankTile& aij = a.low(t.i, t.j);
            const Eigen::Index k0 = aij.u.cols();
            const Eigen::Index k1 = ljk.u.cols();
            Eigen::MatrixXd u(aij.u.rows(), k0 + k1), v(aij.v.rows(), k0 + k1);
            u.leftCols(k0) = aij.u;
            u.rightCols(k1).noalias() = -(lik.u * (lik.v.transpose() * ljk.v));
            v.leftCols(k0) = aij.v;
            v.rightCols(k1) = ljk.u;
            const bool was_capped = aij.rank_capped;
            aij = recompress(u, v, cfg);
            aij.rank_capped = aij.rank_capped || was_capped;
            break;
        }
        default:
            throw GraphError("tlr_cholesky: unexpected kernel");
        }
    };
    TaskTrace tr = execute(graph, kernel, policy);
    if (trace)
        *trace = std::move(tr);
    a.set_factored(true);
    return a;
}

RankStats rank_stats(const TlrMatrix& a) {
    RankStats s;
    const std::size_t nt = a.layout().nt;
    double sum = 0.0;
    for (std::size_t i = 1; i < nt; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const LowRankTile& t = a.low(i, j);
            s.tiles.push_back({i, j, t.rank(), t.rank_capped});
            sum += static_cast<double>(t.rank());
            s.capped += t.rank_capped ? 1 : 0;
        }
    if (!s.tiles.empty()) {
        auto cmp = [](const RankEntry& x, const RankEntry& y) { return x.rank < y.rank; };
        s.min = std::min_element(s.tiles.begin(), s.tiles.end(), cmp)->rank;
        s.max = std::max_element(s.tiles.begin(), s.tiles.end(), cmp)->rank;
        s.mean = sum / static_cast<double>(s.tiles.size());
    }
    return s;
}

} // namespace excursion
