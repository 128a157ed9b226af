#include "excursion/error.hpp"
#include "excursion/field.hpp"
#include "excursion/normdist.hpp"
#include "excursion/pmvn.hpp"
#include "excursion/tiles.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace excursion;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

CholeskyFactor chol(const Eigen::MatrixXd& s, std::size_t m) {
    return tiled_cholesky(DenseTileMatrix::from_dense(s, m, Storage::SymmetricLower));
}

IntegrationLimits box(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    IntegrationLimits l;
    l.a = a;
    l.b = b;
    return l;
}

IntegrationLimits orthant(int n, double lo = -inf, double hi = 0.0) {
    return box(Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi));
}

QmcPlan plan_of(std::size_t n, std::uint64_t seed = 1) {
    QmcPlan p;
    p.samples = n;
    p.seed = seed;
    return p;
}

Eigen::MatrixXd corr2(double rho) {
    Eigen::MatrixXd s(2, 2);
    s << 1.0, rho, rho, 1.0;
    return s;
}

// Random box mixing one-sided, two-sided, and upper-tail rows.
IntegrationLimits random_box(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(-1.5, 1.5);
    std::uniform_int_distribution<int> kind(0, 3);
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
        const double c = ud(rng);
        switch (kind(rng)) {
        case 0: a[i] = -inf; b[i] = c; break;
        case 1: a[i] = c; b[i] = inf; break;
        case 2: a[i] = c; b[i] = c + 1.5; break;
        default: a[i] = std::fabs(c) + 0.2; b[i] = a[i] + 2.0; break;
        }
    }
    return box(a, b);
}

} // namespace

TEST(Limits, Validation) {
    EXPECT_THROW(box(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)).validate(), ShapeError);
    EXPECT_THROW(box(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)).validate(),
                 ParameterError);
    Eigen::VectorXd n(2);
    n << 0.0, std::nan("");
    EXPECT_THROW(box(n, Eigen::VectorXd::Ones(2)).validate(), DomainError);
    const auto c = orthant(2, -1.0, 1.0).centered(Eigen::VectorXd::Constant(2, 0.5));
    EXPECT_EQ(c.a[0], -1.5);
    EXPECT_EQ(c.b[1], 0.5);
    const auto f = chol(Eigen::MatrixXd::Identity(3, 3), 3);
    EXPECT_THROW(pmvn(orthant(2), f, plan_of(10)), ShapeError);
    EXPECT_THROW(pmvn(orthant(3), f, plan_of(0)), ParameterError);
}

TEST(UniformMatrix, DeterministicKeyedAndUniform) {
    QmcPlan p = plan_of(20, 4);
    const auto r1 = gen_uniform_matrix(p, 7);
    const auto r2 = gen_uniform_matrix(p, 7);
    EXPECT_TRUE((r1.array() == r2.array()).all());
    p.samples = 10;
    const auto r3 = gen_uniform_matrix(p, 7);
    EXPECT_TRUE((r3.array() == r1.leftCols(10).array()).all());
    EXPECT_GT(r1.minCoeff(), 0.0);
    EXPECT_LT(r1.maxCoeff(), 1.0);

    QmcPlan big = plan_of(1000, 5);
    const auto rb = gen_uniform_matrix(big, 1000);
    EXPECT_NEAR(rb.mean(), 0.5, 0.002);
}

TEST(UniformMatrix, LatticeMode) {
    QmcPlan p = plan_of(200, 6);
    p.point_set = PointSet::Lattice;
    const auto r = gen_uniform_matrix(p, 30);
    EXPECT_GT(r.minCoeff(), 0.0);
    EXPECT_LT(r.maxCoeff(), 1.0);
    EXPECT_TRUE((gen_uniform_matrix(p, 30).array() == r.array()).all());
    EXPECT_EQ(UniformSource(p, 30).groups(), 10u);
    p.samples = 4;
    EXPECT_EQ(UniformSource(p, 30).groups(), 4u);
}

TEST(QmcTileKernel, SingleRow) {
    Tile l(1, 1);
    l << 1.0;
    QmcPlan p = plan_of(16, 2);
    const Tile r = gen_uniform_matrix(p, 1);
    const Tile a = Tile::Constant(1, 16, -inf);
    const Tile b = Tile::Zero(1, 16);
    ChainProb prob(16);
    Tile y(1, 16);
    qmc_tile_kernel(l, r, a, b, prob, 0, y);
    for (int j = 0; j < 16; ++j) {
        EXPECT_EQ(prob.value(j), 0.5);
        EXPECT_EQ(prob.log(j), std::log(0.5));
        EXPECT_EQ(y(0, j), norm_quantile(0.5 * r(0, j)));
    }
}

TEST(QmcTileKernel, IndependenceWithHalfUniforms) {
    const Tile l = Tile::Identity(2, 2);
    const Tile r = Tile::Constant(2, 5, 0.5);
    ChainProb prob(5);
    Tile y(2, 5);
    qmc_tile_kernel(l, r, Tile::Constant(2, 5, -inf), Tile::Zero(2, 5), prob, 0, y);
    for (int j = 0; j < 5; ++j)
        EXPECT_EQ(prob.log(j), 2.0 * std::log(0.5));
}

TEST(QmcTileKernel, MatchesScalarOracle) {
    const Eigen::MatrixXd s = oracle::random_spd(8, 30);
    const Tile l = s.llt().matrixL();
    std::mt19937_64 rng(31);
    const auto lim = random_box(8, rng);
    const Tile r = gen_uniform_matrix(plan_of(64, 3), 8);
    Tile a(8, 64), b(8, 64);
    for (int j = 0; j < 64; ++j) {
        a.col(j) = lim.a;
        b.col(j) = lim.b;
    }
    ChainProb prob(70);
    Tile y(8, 64);
    qmc_tile_kernel(l, r, a, b, prob, 6, y);
    const auto ref = oracle::scalar_genz(l, lim.a, lim.b, r);
    for (int j = 0; j < 64; ++j)
        EXPECT_EQ(prob.value(6 + j), ref.chain_p[j]) << j;
    EXPECT_EQ(prob.value(0), 1.0);
}

TEST(QmcTileKernel, BadDiagonal) {
    Tile l = Tile::Identity(3, 3);
    l(1, 1) = 0.0;
    ChainProb prob(2);
    Tile y(3, 2);
    EXPECT_THROW(qmc_tile_kernel(l, Tile::Constant(3, 2, 0.5), Tile::Constant(3, 2, -inf),
                                 Tile::Zero(3, 2), prob, 0, y),
                 FactorizationError);
}

TEST(Pmvn, IdentityOrthantIsExact) {
    const auto f = chol(Eigen::MatrixXd::Identity(3, 3), 2);
    const auto e = pmvn(orthant(3), f, plan_of(1000));
    EXPECT_EQ(e.value, 0.125);
    EXPECT_EQ(e.std_error, 0.0);
    EXPECT_EQ(e.samples, 1000u);

    const auto f64 = chol(Eigen::MatrixXd::Identity(64, 64), 16);
    const auto e64 = pmvn(orthant(64), f64, plan_of(100));
    EXPECT_EQ(e64.value, std::ldexp(1.0, -64));
    EXPECT_LT(std::fabs(e64.log_value - (-64.0 * std::log(2.0))), 1e-10);
}

TEST(Pmvn, LogValueSurvivesUnderflow) {
    const auto f = chol(Eigen::MatrixXd::Identity(2000, 2000), 256);
    const auto e = pmvn(orthant(2000, -inf, -3.0), f, plan_of(50));
    const double want = 2000.0 * std::log(norm_cdf(-3.0));
    EXPECT_LT(std::fabs(e.log_value - want), 1e-9 * std::fabs(want));
    EXPECT_EQ(e.value, 0.0);
}

TEST(Pmvn, BivariateOrthantClosedForm) {
    for (double rho : {0.0, 0.5, -0.5, 0.9}) {
        const auto f = chol(corr2(rho), 2);
        const auto e = pmvn(orthant(2, 0.0, inf), f, plan_of(10000, 11));
        EXPECT_LE(std::fabs(e.value - oracle::orthant2(rho)), 3.0 * e.std_error + 1e-15)
            << rho << " " << e.value << " se " << e.std_error;
    }
    EXPECT_NEAR(oracle::orthant2(0.5), 1.0 / 3.0, 1e-15);
}

TEST(Pmvn, TrivariateOrthantClosedForm) {
    Eigen::MatrixXd s(3, 3);
    s << 1.0, 0.3, -0.2, 0.3, 1.0, 0.6, -0.2, 0.6, 1.0;
    const auto e = pmvn(orthant(3, 0.0, inf), chol(s, 3), plan_of(20000, 12));
    EXPECT_LE(std::fabs(e.value - oracle::orthant3(0.3, -0.2, 0.6)), 3.0 * e.std_error);
}

TEST(Pmvn, LatticeOrthant) {
    QmcPlan p = plan_of(10000, 13);
    p.point_set = PointSet::Lattice;
    const auto e = pmvn(orthant(2, 0.0, inf), chol(corr2(0.5), 1), p);
    EXPECT_LE(std::fabs(e.value - 1.0 / 3.0), 3.0 * e.std_error + 1e-12);
    EXPECT_EQ(pmvn(orthant(5), chol(Eigen::MatrixXd::Identity(5, 5), 2), p).value, 1.0 / 32.0);
}

TEST(Pmvn, MatchesMvtnormReference) {
    // Four-dimensional box with R mvtnorm's GenzBretz result 0.0196461341023563.
    Eigen::VectorXd lo(4), hi(4), mu(4);
    lo << -inf, 0.184, -inf, 1.595;
    hi << 1.004, inf, inf, 2.334;
    mu << 0.576, -0.305, 1.512, 0.39;
    Eigen::MatrixXd s(4, 4);
    s << 4.869, -0.099, 0.961, 1.726, -0.099, 5.01, -2.789, 0.132, 0.961, -2.789, 6.67, -4.177,
        1.726, 0.132, -4.177, 7.966;
    const auto lim = box(lo, hi).centered(mu);
    const auto e = pmvn(lim, chol(s, 2), plan_of(200000, 14));
    EXPECT_LE(std::fabs(e.value - 0.0196461341023563), 3.0 * e.std_error + 1e-9)
        << e.value << " se " << e.std_error;
}

TEST(Pmvn, UnivariateIsExact) {
    Eigen::MatrixXd s(1, 1);
    s << 2.25;
    const auto f = chol(s, 1);
    const double mu = 0.3;
    for (auto [a, b] : {std::pair{-inf, 1.0}, {-0.5, 2.0}, {1.2, inf}, {4.0, 6.0}}) {
        const auto lim = box(Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b))
                             .centered(Eigen::VectorXd::Constant(1, mu));
        const auto e = pmvn(lim, f, plan_of(300, 15));
        EXPECT_EQ(e.value, interval_prob((a - mu) / 1.5, (b - mu) / 1.5)) << a << " " << b;
        EXPECT_EQ(e.std_error, 0.0);
    }
}

TEST(Pmvn, DegenerateIntervalGivesZero) {
    const auto f = chol(oracle::random_spd(4, 16), 2);
    Eigen::VectorXd a = Eigen::VectorXd::Constant(4, -1.0);
    Eigen::VectorXd b = Eigen::VectorXd::Constant(4, 1.0);
    a[2] = b[2] = 0.3;
    const auto e = pmvn(box(a, b), f, plan_of(100));
    EXPECT_EQ(e.value, 0.0);
    EXPECT_EQ(e.log_value, -inf);
}

TEST(Pmvn, TiledMatchesScalarOracleBitwise) {
    std::mt19937_64 rng(17);
    for (int n : {5, 8, 20, 33, 64}) {
        const Eigen::MatrixXd s = oracle::random_spd(n, 100 + n);
        const auto lim = random_box(n, rng);
        const QmcPlan p = plan_of(300, 18);
        const Eigen::MatrixXd r = gen_uniform_matrix(p, n);
        const Eigen::MatrixXd lflat = chol(s, n).lower.to_dense();
        const auto ref = oracle::scalar_genz(lflat, lim.a, lim.b, r);
        for (std::size_t m : {std::size_t{8}, std::size_t{32}, static_cast<std::size_t>(n)}) {
            const auto e = pmvn(lim, chol(s, m), p);
            EXPECT_EQ(e.value, ref.value) << "n=" << n << " m=" << m;
        }
        QmcPlan retile = p;
        retile.tile = 3;
        EXPECT_EQ(pmvn(lim, chol(s, n), retile).value, ref.value) << "retiled n=" << n;
    }
}

TEST(Pmvn, ChainBlockDoesNotChangeResult) {
    const Eigen::MatrixXd s = oracle::random_spd(30, 19);
    std::mt19937_64 rng(20);
    const auto lim = random_box(30, rng);
    QmcPlan p = plan_of(1000, 21);
    const auto ref = pmvn(lim, chol(s, 8), p);
    for (std::size_t cb : {1u, 7u, 1000u, 5000u}) {
        p.chain_block = cb;
        const auto e = pmvn(lim, chol(s, 8), p);
        EXPECT_EQ(e.value, ref.value) << cb;
        EXPECT_EQ(e.std_error, ref.std_error) << cb;
    }
}

TEST(Pmvn, NestedBoxesContainment) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const Eigen::MatrixXd s = oracle::random_spd(8, 23);
    const auto f = chol(s, 4);
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd a(8), b(8), a2(8), b2(8);
        for (int i = 0; i < 8; ++i) {
            a[i] = -2.0 * ud(rng);
            b[i] = a[i] + 0.5 + 2.0 * ud(rng);
            a2[i] = a[i] - ud(rng);
            b2[i] = b[i] + ud(rng);
        }
        const auto inner = pmvn(box(a, b), f, plan_of(1000, 100 + k));
        const auto outer = pmvn(box(a2, b2), f, plan_of(1000, 500 + k));
        EXPECT_LE(inner.value, outer.value + 3.0 * (inner.std_error + outer.std_error));
        EXPECT_GE(inner.value, 0.0);
        EXPECT_LE(outer.value, 1.0);
        EXPECT_TRUE(std::isfinite(inner.std_error));
    }
}

TEST(PmvnBatch, ItemsAreIndependentStreams) {
    const auto f = chol(oracle::random_spd(6, 24), 4);
    std::mt19937_64 rng(25);
    const auto l0 = random_box(6, rng);
    const auto l1 = random_box(6, rng);
    const QmcPlan p = plan_of(500, 26);
    std::vector<IntegrationLimits> sets{l0, l1};
    const auto out = pmvn_batch(sets, f, p);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].value, pmvn(l0, f, p).value);
    QmcPlan p1 = p;
    p1.stream = 1;
    EXPECT_EQ(out[1].value, pmvn(l1, f, p1).value);
}

TEST(PmvnBatch, DisjointPrefixesOnIdentity) {
    const auto f = chol(Eigen::MatrixXd::Identity(6, 6), 4);
    IntegrationLimits first = orthant(6, -inf, inf), second = orthant(6, -inf, inf);
    for (int i = 0; i < 3; ++i)
        first.b[i] = 0.0;
    for (int i = 3; i < 6; ++i)
        second.a[i] = 1.0;
    std::vector<IntegrationLimits> sets{first, second};
    const auto out = pmvn_batch(sets, f, plan_of(100, 27));
    EXPECT_EQ(out[0].value, 0.125);
    EXPECT_NEAR(out[1].value, std::pow(norm_ccdf(1.0), 3), 1e-15);
}

TEST(PmvnBatch, NestedPrefixesAreNonIncreasing) {
    Geometry g = gen_geometry(GeometryKind::Grid, 100, 0);
    const Eigen::MatrixXd s = assemble_cov(g, {1.0, 0.2, 0.5});
    const auto f = chol(s, 25);
    std::vector<IntegrationLimits> sets;
    for (int k = 1; k <= 10; ++k) {
        IntegrationLimits l = orthant(100, -inf, inf);
        for (int i = 0; i < 10 * k; ++i)
            l.a[i] = -1.0;
        sets.push_back(l);
    }
    const auto out = pmvn_batch(sets, f, plan_of(2000, 28));
    for (std::size_t k = 1; k < out.size(); ++k)
        EXPECT_LE(out[k].value,
                  out[k - 1].value + 3.0 * (out[k].std_error + out[k - 1].std_error));
}
