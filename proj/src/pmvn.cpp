#include "excursion/pmvn.hpp"

#include "excursion/error.hpp"
#include "excursion/normdist.hpp"
#include "excursion/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace excursion {

void IntegrationLimits::validate() const {
    if (a.size() != b.size())
        throw ShapeError("integration limits: a has " + std::to_string(a.size()) +
                         " entries, b has " + std::to_string(b.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (std::isnan(a(i)) || std::isnan(b(i)))
            throw DomainError("integration limits: NaN at index " + std::to_string(i));
        if (a(i) > b(i))
            throw ParameterError("integration limits: a > b at index " + std::to_string(i));
    }
}

IntegrationLimits IntegrationLimits::centered(const Eigen::VectorXd& mu) const {
    if (mu.size() != a.size())
        throw ShapeError("integration limits: mean length differs from limits");
    return {a - mu, b - mu};
}

void QmcPlan::validate() const {
    if (samples == 0)
        throw ParameterError("QMC plan: at least one sample is required");
    if (chain_block == 0)
        throw ParameterError("QMC plan: chain block must be at least 1");
    if (point_set == PointSet::Lattice && lattice_shifts == 0)
        throw ParameterError("QMC plan: lattice mode needs at least one shift");
}

namespace {

constexpr std::uint64_t stream_base = 1ULL << 32;

std::vector<std::uint64_t> first_primes(std::size_t count) {
    std::vector<std::uint64_t> primes;
    std::size_t limit = 64;
    while (primes.size() < count) {
        limit *= 2;
        std::vector<bool> composite(limit + 1, false);
        primes.clear();
        for (std::size_t p = 2; p <= limit && primes.size() < count; ++p) {
            if (composite[p])
                continue;
            primes.push_back(p);
            for (std::size_t q = p * p; q <= limit; q += p)
                composite[q] = true;
        }
    }
    return primes;
}

double frac(double x) noexcept { return x - std::floor(x); }

} // namespace

UniformSource::UniformSource(const QmcPlan& plan, std::size_t n)
    : mode_(plan.point_set), seed_(plan.seed), stream_(plan.stream + stream_base), n_(n) {
    plan.validate();
    if (mode_ != PointSet::Lattice)
        return;
    groups_ = std::min(plan.lattice_shifts, plan.samples);
    const auto primes = first_primes(n);
    z_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        z_[i] = frac(std::sqrt(static_cast<double>(primes[i])));
    shift_.resize(groups_ * n);
    for (std::size_t g = 0; g < groups_; ++g)
        for (std::size_t i = 0; i < n; ++i)
            shift_[g * n + i] = keyed_uniform(seed_, stream_, g, i);
}

double UniformSource::operator()(std::size_t row, std::size_t chain) const noexcept {
    if (mode_ == PointSet::PseudoRandom)
        return keyed_uniform(seed_, stream_, chain, row);
    const std::size_t g = chain % groups_;
    const auto t = static_cast<double>(chain / groups_);
    const double x = frac(frac(t * z_[row]) + shift_[g * n_ + row]);
    const double baker = 1.0 - std::abs(2.0 * x - 1.0);
    return std::clamp(baker, 0x1.0p-53, 1.0 - 0x1.0p-53);
}

Eigen::MatrixXd gen_uniform_matrix(const QmcPlan& plan, std::size_t n) {
    const UniformSource src(plan, n);
    Eigen::MatrixXd r(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(plan.samples));
    for (std::size_t j = 0; j < plan.samples; ++j)
        for (std::size_t i = 0; i < n; ++i)
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src(i, j);
    return r;
}

double ChainProb::value(std::size_t j) const { return std::ldexp(mant.at(j), exp2.at(j)); }

double ChainProb::log(std::size_t j) const {
    if (mant.at(j) == 0.0)
        return -std::numeric_limits<double>::infinity();
    return std::log(mant[j]) + static_cast<double>(exp2[j]) * std::numbers::ln2;
}

namespace {

// One step of the recursion for standardized limits (ap, bp). Above zero the
// upper tail is used throughout so that far-tail intervals keep their digits;
// q matches interval_prob(ap, bp) bit for bit.
inline void sov_step(double ap, double bp, double r, double& q, double& y) {
    if (ap >= 0.0) {
        const double ca = norm_ccdf(ap);
        const double cb = norm_ccdf(bp);
        q = ca - cb;
        if (!(q > 0.0))
            q = 0.0;
        y = norm_quantile_upper(ca - r * q);
    } else {
        const double fa = norm_cdf(ap);
        const double fb = norm_cdf(bp);
        q = fb - fa;
        if (!(q > 0.0))
            q = 0.0;
        y = norm_quantile(fa + r * q);
    }
}

inline void scale_mult(double& mant, int& ex, double q) {
    int e = 0;
    mant = std::frexp(mant * q, &e);
    ex += e;
}

void check_diagonal(const Tile& l) {
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        if (!(l(i, i) > 0.0))
            throw FactorizationError(static_cast<std::size_t>(i),
                                     "qmc kernel: non-positive diagonal in Cholesky tile");
}

// Row tile sweep for one chain block. With `shared`, `lo`/`hi` hold the raw
// limits per row and `d` the accumulated correction -sum L y from earlier
// row tiles; otherwise `a`/`b` are full corrected tiles. Chains run in
// groups of `lanes`; once row i of Y is known its contribution is pushed
// down to the pending rows, so every pending sum still accumulates in
// ascending column order.
template <bool shared>
void sweep(const Tile& l, const double* lo, const double* hi, const Tile* a, const Tile* b,
           const Tile& d, const UniformSource* src, const Tile* r, std::size_t row0,
           std::size_t first_chain, ChainProb& prob, Tile& y) {
    constexpr Eigen::Index lanes = 8;
    const Eigen::Index h = l.rows();
    const Eigen::Index w = y.cols();
    check_diagonal(l);
    const auto cells = static_cast<std::size_t>(h * lanes);
    std::vector<double> acc_a(cells); // row-major h x lanes
    for (Eigen::Index j0 = 0; j0 < w; j0 += lanes) {
        const Eigen::Index nl = std::min(lanes, w - j0);
        double mant[lanes] = {}, yi[lanes] = {};
        int ex[lanes] = {};
        for (Eigen::Index c = 0; c < nl; ++c) {
            mant[c] = prob.mant[first_chain + static_cast<std::size_t>(j0 + c)];
            ex[c] = prob.exp2[first_chain + static_cast<std::size_t>(j0 + c)];
        }
        for (Eigen::Index i = 0; i < h; ++i)
            for (Eigen::Index c = 0; c < lanes; ++c) {
                const std::size_t at = static_cast<std::size_t>(i * lanes + c);
                if constexpr (shared)
                    acc_a[at] = c < nl ? d(i, j0 + c) : 0.0;
                else
                    acc_a[at] = 0.0;
            }
        for (Eigen::Index i = 0; i < h; ++i) {
            const double lii = l(i, i);
            double* ra = acc_a.data() + i * lanes;
            for (Eigen::Index c = 0; c < nl; ++c) {
                const std::size_t chain = first_chain + static_cast<std::size_t>(j0 + c);
                const double rij =
                    src ? (*src)(row0 + static_cast<std::size_t>(i), chain) : (*r)(i, j0 + c);
                double lo_i, hi_i;
                if constexpr (shared) {
                    lo_i = lo[i] + ra[c];
                    hi_i = hi[i] + ra[c];
                } else {
                    lo_i = (*a)(i, j0 + c) + ra[c];
                    hi_i = (*b)(i, j0 + c) + ra[c];
                }
                double q;
                sov_step(lo_i / lii, hi_i / lii, rij, q, yi[c]);
                y(i, j0 + c) = yi[c];
                scale_mult(mant[c], ex[c], q);
            }
            const double* li = l.col(i).data();
            for (Eigen::Index t = i + 1; t < h; ++t) {
                const double lt = li[t];
                double* pa = acc_a.data() + t * lanes;
                for (Eigen::Index c = 0; c < lanes; ++c)
                    pa[c] -= lt * yi[c];
            }
        }
        for (Eigen::Index c = 0; c < nl; ++c) {
            prob.mant[first_chain + static_cast<std::size_t>(j0 + c)] = mant[c];
            prob.exp2[first_chain + static_cast<std::size_t>(j0 + c)] = ex[c];
        }
    }
}

} // namespace

void qmc_tile_kernel(const Tile& l_diag, const Tile& r, const Tile& a, const Tile& b,
                     ChainProb& prob, std::size_t first_chain, Tile& y) {
    const Eigen::Index h = l_diag.rows();
    if (l_diag.cols() != h || r.rows() != h || a.rows() != h || b.rows() != h ||
        y.rows() != h || r.cols() != a.cols() || b.cols() != a.cols() || y.cols() != a.cols())
        throw ShapeError("qmc_tile_kernel: tile shapes do not conform");
    if (first_chain + static_cast<std::size_t>(a.cols()) > prob.size())
        throw ShapeError("qmc_tile_kernel: chain range exceeds the probability vector");
    sweep<false>(l_diag, nullptr, nullptr, &a, &b, a, nullptr, &r, 0, first_chain, prob, y);
}

namespace {

// Backend-neutral driver. `diag(i)` returns the diagonal factor tile,
// `correct(j, c, d, y)` applies d -= L(j, c) y.
template <class Diag, class Correct>
ProbEstimate run_pmvn(const IntegrationLimits& limits, const TileLayout& layout, Diag diag,
                      Correct correct, const QmcPlan& plan, Backend backend,
                      const ExecutionPolicy& policy) {
    plan.validate();
    limits.validate();
    if (limits.size() != layout.n)
        throw ShapeError("pmvn: limits have " + std::to_string(limits.size()) +
                         " entries, factor has order " + std::to_string(layout.n));
    const std::size_t n = layout.n;
    const std::size_t N = plan.samples;
    ProbEstimate est;
    est.samples = N;
    est.backend = backend;

    // Trailing rows with (-inf, +inf) contribute a factor of exactly one.
    std::size_t used = n;
    while (used > 0 && limits.a(static_cast<Eigen::Index>(used - 1)) == -HUGE_VAL &&
           limits.b(static_cast<Eigen::Index>(used - 1)) == HUGE_VAL)
        --used;
    if (used == 0) {
        est.value = 1.0;
        est.log_value = 0.0;
        return est;
    }
    const std::size_t rt = (used + layout.m - 1) / layout.m;
    const std::size_t cb = std::min(plan.chain_block, N);
    const std::size_t ct = (N + cb - 1) / cb;
    auto chain_width = [&](std::size_t k) { return std::min(cb, N - k * cb); };

    const UniformSource src(plan, n);
    ChainProb prob(N);
    std::vector<Tile> d(rt * ct), y(rt * ct);
    for (std::size_t i = 0; i < rt; ++i)
        for (std::size_t k = 0; k < ct; ++k) {
            const auto h = static_cast<Eigen::Index>(layout.extent(i));
            const auto w = static_cast<Eigen::Index>(chain_width(k));
            d[i * ct + k] = Tile::Zero(h, w);
            y[i * ct + k] = Tile(h, w);
        }

    const TaskGraph graph = build_pmvn_dag(rt, ct);
    auto kernel = [&](const Task& t) {
        if (t.kernel == Kernel::Qmc) {
            const std::size_t r0 = layout.offset(t.i);
            try {
                sweep<true>(diag(t.i), limits.a.data() + r0, limits.b.data() + r0, nullptr,
                            nullptr, d[t.i * ct + t.k], &src, nullptr, r0, t.k * cb, prob,
                            y[t.i * ct + t.k]);
            } catch (const FactorizationError& e) {
                throw FactorizationError(r0 + e.row(), "pmvn: non-positive diagonal in factor");
            }
        } else {
            correct(t.i, t.j, d[t.i * ct + t.k], y[t.j * ct + t.k]);
        }
    };
    execute(graph, kernel, policy);

    // Fixed-order reduction in units of 2^emax.
    int emax = std::numeric_limits<int>::min();
    for (std::size_t j = 0; j < N; ++j)
        if (prob.mant[j] > 0.0)
            emax = std::max(emax, prob.exp2[j]);
    if (emax == std::numeric_limits<int>::min()) {
        est.value = 0.0;
        est.log_value = -HUGE_VAL;
        return est;
    }
    // Deviations from chain 0 keep a constant integrand exact: the mean is
    // then x0 itself rather than a rounded sum / N.
    const double x0 = std::ldexp(prob.mant[0], prob.exp2[0] - emax);
    std::vector<double> x(N);
    for (std::size_t j = 0; j < N; ++j)
        x[j] = std::ldexp(prob.mant[j], prob.exp2[j] - emax) - x0;
    double sum = 0.0;
    for (double v : x)
        sum += v;
    const double dmean = sum / static_cast<double>(N);
    const double mean = x0 + dmean;
    double se = 0.0;
    if (plan.point_set == PointSet::Lattice && src.groups() > 1) {
        const std::size_t g = src.groups();
        std::vector<double> gsum(g, 0.0);
        std::vector<std::size_t> gcount(g, 0);
        for (std::size_t j = 0; j < N; ++j) {
            gsum[j % g] += x[j];
            ++gcount[j % g];
        }
        double gm = 0.0;
        for (std::size_t k = 0; k < g; ++k)
            gm += gsum[k] / static_cast<double>(gcount[k]);
        gm /= static_cast<double>(g);
        double ss = 0.0;
        for (std::size_t k = 0; k < g; ++k) {
            const double dev = gsum[k] / static_cast<double>(gcount[k]) - gm;
            ss += dev * dev;
        }
        se = std::sqrt(ss / static_cast<double>(g - 1) / static_cast<double>(g));
    } else if (N > 1) {
        double ss = 0.0;
        for (double v : x)
            ss += (v - dmean) * (v - dmean);
        se = std::sqrt(ss / static_cast<double>(N - 1) / static_cast<double>(N));
    }
    est.value = std::ldexp(mean, emax);
    est.std_error = std::ldexp(se, emax);
    est.log_value = std::log(mean) + static_cast<double>(emax) * std::numbers::ln2;
    return est;
}

const DenseTileMatrix& retiled(const CholeskyFactor& f, const QmcPlan& plan,
                               DenseTileMatrix& scratch) {
    if (plan.tile == 0 || TileLayout::make(f.lower.layout().n, plan.tile).m == f.lower.layout().m)
        return f.lower;
    scratch = DenseTileMatrix::from_dense(f.lower.to_dense(), plan.tile, Storage::LowerTriangular);
    return scratch;
}

ProbEstimate pmvn_dense(const IntegrationLimits& limits, const DenseTileMatrix& l,
                        const QmcPlan& plan, const ExecutionPolicy& policy) {
    if (l.storage() != Storage::LowerTriangular)
        throw ParameterError("pmvn: factor must be lower triangular");
    const TileLayout& layout = l.layout();
    // Exactly-zero factor tiles (independent blocks) need no correction.
    std::vector<char> zero(layout.nt * layout.nt, 0);
    for (std::size_t i = 0; i < layout.nt; ++i)
        for (std::size_t j = 0; j < i; ++j)
            zero[i * layout.nt + j] = l.tile(i, j).isZero(0.0) ? 1 : 0;
    return run_pmvn(
        limits, layout, [&](std::size_t i) -> const Tile& { return l.tile(i, i); },
        [&](std::size_t j, std::size_t c, Tile& d, const Tile& y) {
            if (!zero[j * layout.nt + c])
                tile_gemm_update(d, l.tile(j, c), y);
        },
        plan, Backend::Dense, policy);
}

ProbEstimate pmvn_tlr(const IntegrationLimits& limits, const TlrMatrix& f, const QmcPlan& plan,
                      const ExecutionPolicy& policy) {
    if (!f.factored())
        throw ParameterError("pmvn: TLR matrix has not been factored");
    const bool decompress = f.config().decompress_gemm;
    return run_pmvn(
        limits, f.layout(), [&](std::size_t i) -> const Tile& { return f.diag(i); },
        [&](std::size_t j, std::size_t c, Tile& d, const Tile& y) {
            const LowRankTile& l = f.low(j, c);
            if (decompress)
                tile_gemm_update(d, l.dense(), y);
            else
                lr_gemm_update(d, l, y);
        },
        plan, Backend::Tlr, policy);
}

} // namespace

ProbEstimate pmvn(const IntegrationLimits& limits, const CholeskyFactor& factor,
                  const QmcPlan& plan, const ExecutionPolicy& policy) {
    DenseTileMatrix scratch;
    return pmvn_dense(limits, retiled(factor, plan, scratch), plan, policy);
}

ProbEstimate pmvn(const IntegrationLimits& limits, const TlrMatrix& factor, const QmcPlan& plan,
                  const ExecutionPolicy& policy) {
    return pmvn_tlr(limits, factor, plan, policy);
}

std::vector<ProbEstimate> pmvn_batch(std::span<const IntegrationLimits> sets,
                                     const CholeskyFactor& factor, const QmcPlan& plan,
                                     const ExecutionPolicy& policy) {
    DenseTileMatrix scratch;
    const DenseTileMatrix& l = retiled(factor, plan, scratch);
    std::vector<ProbEstimate> out;
    out.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        QmcPlan p = plan;
        p.stream = plan.stream + i;
        out.push_back(pmvn_dense(sets[i], l, p, policy));
    }
    return out;
}

std::vector<ProbEstimate> pmvn_batch(std::span<const IntegrationLimits> sets,
                                     const TlrMatrix& factor, const QmcPlan& plan,
                                     const ExecutionPolicy& policy) {
    std::vector<ProbEstimate> out;
    out.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        QmcPlan p = plan;
        p.stream = plan.stream + i;
        out.push_back(pmvn_tlr(sets[i], factor, p, policy));
    }
    return out;
}

} // namespace excursion
