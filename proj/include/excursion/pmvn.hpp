#pragma once

// Separation-of-variables MVN probabilities over a tiled Cholesky factor
// (dense or TLR), with pseudo-random or randomized-lattice sample points.

#include "excursion/runtime.hpp"
#include "excursion/tiles.hpp"
#include "excursion/tlr.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace excursion {

// Box [a, b] for a zero-mean vector; -inf / +inf entries are allowed.
struct IntegrationLimits {
    Eigen::VectorXd a;
    Eigen::VectorXd b;

    std::size_t size() const noexcept { return static_cast<std::size_t>(a.size()); }
    // Throws ShapeError on length mismatch, DomainError on NaN, and
    // ParameterError when a[i] > b[i].
    void validate() const;
    // Limits for x - mu.
    IntegrationLimits centered(const Eigen::VectorXd& mu) const;
};

enum class PointSet { PseudoRandom, Lattice };

struct QmcPlan {
    std::size_t samples = 10000;   // chains N
    std::size_t tile = 0;          // row tile; 0 keeps the factor's tiling
    std::size_t chain_block = 256; // chains per column task
    PointSet point_set = PointSet::PseudoRandom;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::size_t lattice_shifts = 10;

    void validate() const;
};

// Uniform sample for (row, chain). Pseudo-random mode keys a counter-based
// generator on (seed, stream, chain, row). Lattice mode uses a Richtmyer
// rank-1 rule with one random shift per group (chain % shifts) and the
// baker's transformation. Values lie strictly inside (0, 1).
class UniformSource {
public:
    UniformSource(const QmcPlan& plan, std::size_t n);
    double operator()(std::size_t row, std::size_t chain) const noexcept;
    std::size_t groups() const noexcept { return groups_; }

private:
    PointSet mode_;
    std::uint64_t seed_, stream_;
    std::size_t groups_ = 1;
    std::vector<double> z_;     // generating vector
    std::vector<double> shift_; // groups x n, row-major
    std::size_t n_;
};

// n x N matrix of the plan's uniforms.
Eigen::MatrixXd gen_uniform_matrix(const QmcPlan& plan, std::size_t n);

// Per-chain probabilities held as mantissa * 2^exponent so long products
// neither underflow nor pick up the rounding of a log/exp round trip.
struct ChainProb {
    std::vector<double> mant;
    std::vector<int> exp2;

    explicit ChainProb(std::size_t chains = 0) : mant(chains, 1.0), exp2(chains, 0) {}
    std::size_t size() const noexcept { return mant.size(); }
    double value(std::size_t j) const;
    double log(std::size_t j) const;
};

// One row tile of the recursion for a block of chains. a, b, r, y are h x w;
// a and b already carry the corrections from earlier row tiles. Column j of
// the block updates chain `first_chain + j` of `prob`. Throws
// FactorizationError if a diagonal entry of l_diag is not positive.
void qmc_tile_kernel(const Tile& l_diag, const Tile& r, const Tile& a, const Tile& b,
                     ChainProb& prob, std::size_t first_chain, Tile& y);

struct ProbEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double log_value = 0.0; // log(value), accurate even when value underflows
    std::size_t samples = 0;
    Backend backend = Backend::Dense;
};

ProbEstimate pmvn(const IntegrationLimits& limits, const CholeskyFactor& factor,
                  const QmcPlan& plan, const ExecutionPolicy& policy = {});
// `factor` must come from tlr_cholesky.
ProbEstimate pmvn(const IntegrationLimits& limits, const TlrMatrix& factor, const QmcPlan& plan,
                  const ExecutionPolicy& policy = {});

// Item i runs with stream plan.stream + i, so item 0 equals pmvn.
std::vector<ProbEstimate> pmvn_batch(std::span<const IntegrationLimits> sets,
                                     const CholeskyFactor& factor, const QmcPlan& plan,
                                     const ExecutionPolicy& policy = {});
std::vector<ProbEstimate> pmvn_batch(std::span<const IntegrationLimits> sets,
                                     const TlrMatrix& factor, const QmcPlan& plan,
                                     const ExecutionPolicy& policy = {});

} // namespace excursion
