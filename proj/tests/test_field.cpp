#include "excursion/error.hpp"
#include "excursion/field.hpp"
#include "excursion/tiles.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace excursion;

namespace {

struct KRow {
    double nu;
    double k[10];
};

const double k_x[10] = {1e-6, 0.01, 0.5, 1.0, 1.9, 2.0, 2.1, 5.0, 20.0, 50.0};

// mpmath besselk, 40 digits
const KRow k_table[] = {
    {0.5,
     {1253.3128840019895926, 12.408434532846930048, 1.0750476034999202387,
      0.46106850444789455844, 0.13599521326566795789, 0.11993777196806144737,
      0.10590875899695359003, 0.0037766133746428825595, 5.7763739747074446528e-10,
      3.4186200954570746356e-23}},
    {1.0,
     {999999.99999278427896, 99.973894118296247643, 1.6564411200033008937,
      0.60190723019723457474, 0.15966015303266761038, 0.13986588181652242728,
      0.12274641153350791061, 0.0040446134454521642084, 5.8830579695570381777e-10,
      3.4441022267175556126e-23}},
    {1.43391,
     {480266139.86093046942, 882.70839561378539058, 2.9192855693529137346,
      0.86422533655146824042, 0.19936846563542871283, 0.17307631523357207316,
      0.15063023405435441893, 0.0044528421836887067223, 6.0365800333345502862e-10,
      3.4803046759600313177e-23}},
    {2.5,
     {3759942411945874.0966, 375987.97477979482738, 20.425904466498484536,
      3.2274795311352619091, 0.46373991005550486473, 0.38979775889619970395,
      0.32925376096331830368, 0.0064957750043857580024, 6.6861528757238671856e-10,
      3.6278396452990476033e-23}},
    {0.25,
     {68.107227889734946501, 6.1657412641392401507, 0.96031632493188602295,
      0.43073977444858552466, 0.13060056344708002012, 0.11537827684085675697,
      0.10204331893431770863, 0.0037123027320318406383, 5.7500020724036825769e-10,
      3.41227888757488559e-23}},
    {3.7,
     {4.2952151176517174086e+23, 680739416.85752507878, 344.19834208704400439,
      24.759623670612215033, 1.848670375529745629, 1.4819724497566028081,
      1.1975820999659318684, 0.012498951966274486479, 8.0121366346436373522e-10,
      3.9050179852266003472e-23}},
};

void expect_rel(double got, double want, double tol, const std::string& what) {
    EXPECT_LE(std::fabs(got - want), tol * std::fabs(want)) << what << " got " << got
                                                            << " want " << want;
}

} // namespace

TEST(BesselK, MatchesHighPrecisionTable) {
    for (const auto& row : k_table)
        for (int i = 0; i < 10; ++i)
            expect_rel(bessel_k(row.nu, k_x[i]), row.k[i], 1e-10,
                       "nu=" + std::to_string(row.nu) + " x=" + std::to_string(k_x[i]));
}

TEST(BesselK, NearIntegerOrders) {
    struct {
        double nu, x, k;
    } cases[] = {
        {1.005, 0.3, 3.078996187206524527727},      {1.005, 1.5, 0.2781030961380983592416},
        {1.005, 3.0, 0.04021451414923345535745},    {1.005, 8.0, 0.0001554610110557180568378},
        {0.9999999, 0.3, 3.055991575970689860622},  {0.9999999, 1.5, 0.2773877862031406818879},
        {0.9999999, 3.0, 0.04015642997021077828842}, {0.9999999, 8.0, 0.0001553692099741174206015},
        {2.0000001, 0.3, 21.74574537083306021949},   {2.0000001, 1.5, 0.5836560192466336422194},
        {2.0000001, 3.0, 0.06151046192082660932691}, {2.0000001, 8.0, 0.0001853130125160170772593},
    };
    for (const auto& c : cases)
        expect_rel(bessel_k(c.nu, c.x), c.k, 1e-10,
                   "nu=" + std::to_string(c.nu) + " x=" + std::to_string(c.x));
}

TEST(Matern, TableValues) {
    const double h[4] = {0.001, 0.05, 0.1, 0.3};
    struct {
        double nu;
        double c[4];
    } rows[] = {
        {0.5, {0.99004983374916805357, 0.6065306597126334236, 0.3678794411714423216,
               0.049787068367863942979}},
        {1.0, {0.99973894118296247643, 0.82822056000165044685, 0.60190723019723457474,
               0.12046929338458255313}},
        {1.43391, {0.99994310141263441175, 0.90282731606407958908, 0.72211277077778308662,
                   0.18865759494268720664}},
        {2.5, {0.99998333374778470638, 0.96034021121166958737, 0.85838536273336541706,
               0.34850947857504760086}},
    };
    for (const auto& r : rows)
        for (int i = 0; i < 4; ++i)
            expect_rel(matern_cov(h[i], {1.0, 0.1, r.nu}), r.c[i], 1e-10,
                       "nu=" + std::to_string(r.nu) + " h=" + std::to_string(h[i]));
}

TEST(Matern, ZeroLagAndExponential) {
    EXPECT_EQ(matern_cov(0.0, {1.0, 0.1, 0.5}), 1.0);
    EXPECT_EQ(matern_cov(0.0, {2.5, 0.1, 1.43391}), 2.5);
    EXPECT_NEAR(matern_cov(0.1, {1.0, 0.1, 0.5}), std::exp(-1.0), 1e-15);
    for (double t = 1e-6; t <= 50.0; t *= 1.1) {
        const double h = t * 0.033;
        expect_rel(matern_cov(h, {1.7, 0.033, 0.5}), 1.7 * std::exp(-t), 1e-10, "exp");
        expect_rel(exponential_cov(h, 1.7, 0.033), 1.7 * std::exp(-t), 1e-10, "exp");
    }
}

TEST(Matern, NonIncreasingAndBounded) {
    for (double nu : {0.5, 1.0, 1.43391, 2.5}) {
        const MaternParams p{1.0, 0.1, nu};
        double prev = matern_cov(0.0, p);
        for (int i = 1; i <= 1000; ++i) {
            const double c = matern_cov(i * 1e-3, p);
            EXPECT_LE(c, prev) << "nu=" << nu << " i=" << i;
            EXPECT_GE(c, 0.0);
            EXPECT_LE(c, 1.0);
            prev = c;
        }
    }
}

TEST(Matern, InvalidParameters) {
    EXPECT_THROW(matern_cov(0.1, {0.0, 0.1, 0.5}), ParameterError);
    EXPECT_THROW(matern_cov(0.1, {1.0, -0.1, 0.5}), ParameterError);
    EXPECT_THROW(matern_cov(0.1, {1.0, 0.1, 0.0}), ParameterError);
    EXPECT_THROW(matern_cov(-1.0, {1.0, 0.1, 0.5}), ParameterError);
    EXPECT_THROW(matern_cov(std::nan(""), {1.0, 0.1, 0.5}), ParameterError);
}

TEST(Geometry, GridLayout) {
    const Geometry g = gen_geometry(GeometryKind::Grid, 4, 0);
    ASSERT_EQ(g.size(), 4u);
    EXPECT_EQ(g.points[0].x, 0.0);
    EXPECT_EQ(g.points[0].y, 0.0);
    EXPECT_EQ(g.points[1].x, 0.0);
    EXPECT_EQ(g.points[1].y, 1.0);
    EXPECT_EQ(g.points[2].x, 1.0);
    EXPECT_EQ(g.points[2].y, 0.0);
    EXPECT_EQ(g.points[3].x, 1.0);
    EXPECT_EQ(g.points[3].y, 1.0);
    EXPECT_THROW(gen_geometry(GeometryKind::Grid, 5, 0), ParameterError);
    EXPECT_THROW(gen_geometry(GeometryKind::Grid, 0, 0), ParameterError);
    const Geometry big = gen_geometry(GeometryKind::Grid, 40000, 0);
    EXPECT_EQ(big.size(), 40000u);
    EXPECT_EQ(big.points[199].y, 1.0);
}

TEST(Geometry, RandomIsDeterministic) {
    const Geometry a = gen_geometry(GeometryKind::UniformRandom, 100, 1);
    const Geometry b = gen_geometry(GeometryKind::UniformRandom, 100, 1);
    const Geometry c = gen_geometry(GeometryKind::UniformRandom, 100, 2);
    bool differs = false;
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_EQ(a.points[i].x, b.points[i].x);
        EXPECT_EQ(a.points[i].y, b.points[i].y);
        EXPECT_GE(a.points[i].x, 0.0);
        EXPECT_LE(a.points[i].x, 1.0);
        differs |= a.points[i].x != c.points[i].x;
    }
    EXPECT_TRUE(differs);
}

TEST(Geometry, MortonOrderIsPermutation) {
    const Geometry g = gen_geometry(GeometryKind::UniformRandom, 500, 3);
    auto ord = morton_order(g);
    std::vector<std::size_t> sorted = ord;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        EXPECT_EQ(sorted[i], i);
    const Geometry p = permuted(g, ord);
    EXPECT_EQ(p.points[0].x, g.points[ord[0]].x);
}

TEST(AssembleCov, SmallCases) {
    Geometry one;
    one.points = {{0.3, 0.4}};
    const auto s1 = assemble_cov(one, {2.0, 0.1, 0.5});
    ASSERT_EQ(s1.rows(), 1);
    EXPECT_EQ(s1(0, 0), 2.0);

    Geometry two;
    two.points = {{0.0, 0.0}, {0.1, 0.0}};
    const auto s2 = assemble_cov(two, {1.0, 0.1, 0.5});
    EXPECT_NEAR(s2(0, 1), std::exp(-1.0), 1e-15);
}

TEST(AssembleCov, BitwiseSymmetricConstantDiagonal) {
    const Geometry g = gen_geometry(GeometryKind::UniformRandom, 200, 5);
    const auto s = assemble_cov(g, {1.3, 0.1, 1.43391});
    for (int i = 0; i < s.rows(); ++i) {
        EXPECT_EQ(s(i, i), 1.3);
        for (int j = 0; j < i; ++j)
            EXPECT_EQ(s(i, j), s(j, i));
    }
    const auto sn = assemble_cov(g, {1.3, 0.1, 1.43391}, 0.25);
    EXPECT_EQ(sn(3, 3), 1.55);
}

TEST(AssembleCov, DuplicatesWarn) {
    Geometry g;
    g.points = {{0.1, 0.2}, {0.5, 0.5}, {0.1, 0.2}};
    int warnings = 0;
    set_warning_sink([&](const std::string&) { ++warnings; });
    const auto s = assemble_cov(g, {1.0, 0.1, 0.5});
    set_warning_sink(nullptr);
    EXPECT_EQ(warnings, 1);
    EXPECT_EQ(s(0, 2), 1.0);
    const auto d = duplicate_points(g);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].first, 0u);
    EXPECT_EQ(d[0].second, 2u);
}

TEST(Posterior, IdentityFullObservation) {
    FieldModel m;
    m.mean = Eigen::VectorXd::Zero(4);
    m.cov = Eigen::MatrixXd::Identity(4, 4);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    Eigen::VectorXd y(4);
    y << 1.0, -1.0, 0.5, 2.0;
    const auto post = posterior_condition(m, idx, y, 0.5);
    EXPECT_LE((post.cov_post - 0.2 * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(),
              1e-12);
    EXPECT_LE((post.mean_post - 0.8 * y).cwiseAbs().maxCoeff(), 1e-12);

    m.cov *= 3.0;
    const auto post3 = posterior_condition(m, idx, y, 0.5);
    const double c = 1.0 / (1.0 / 3.0 + 4.0);
    EXPECT_LE((post3.cov_post - c * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(),
              1e-12);
}

TEST(Posterior, ZeroInnovationKeepsMean) {
    FieldModel m;
    m.cov = oracle::random_spd(10, 3);
    m.mean = Eigen::VectorXd::LinSpaced(10, -1.0, 1.0);
    std::vector<std::size_t> idx{1, 4, 7};
    Eigen::VectorXd y(3);
    y << m.mean[1], m.mean[4], m.mean[7];
    const auto post = posterior_condition(m, idx, y, 0.5);
    EXPECT_LE((post.mean_post - m.mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Posterior, MatchesDenseInverseOracle) {
    const int n = 16;
    FieldModel m;
    m.cov = oracle::random_spd(n, 11);
    m.mean = oracle::random_matrix(n, 1, 12).col(0);
    std::vector<std::size_t> idx{0, 3, 5, 6, 9, 15};
    Eigen::VectorXd y = oracle::random_matrix(6, 1, 13).col(0);
    const double sd = 0.7;
    const auto post = posterior_condition(m, idx, y, sd);

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(6, n);
    for (int k = 0; k < 6; ++k)
        a(k, static_cast<int>(idx[k])) = 1.0;
    const Eigen::MatrixXd prec = m.cov.inverse() + a.transpose() * a / (sd * sd);
    const Eigen::MatrixXd cov = prec.inverse();
    const Eigen::VectorXd mean = m.mean + cov * a.transpose() * (y - a * m.mean) / (sd * sd);
    EXPECT_LE((post.cov_post - cov).norm() / cov.norm(), 1e-10);
    EXPECT_LE((post.mean_post - mean).norm() / mean.norm(), 1e-10);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j)
            EXPECT_EQ(post.cov_post(i, j), post.cov_post(j, i));
}

TEST(Posterior, SingularPriorFails) {
    FieldModel m;
    m.mean = Eigen::VectorXd::Zero(3);
    m.cov = Eigen::MatrixXd::Ones(3, 3);
    std::vector<std::size_t> idx{0};
    Eigen::VectorXd y(1);
    y << 0.0;
    try {
        posterior_condition(m, idx, y, 0.5);
        FAIL() << "expected FactorizationError";
    } catch (const FactorizationError& e) {
        EXPECT_EQ(e.row(), 1u);
    }
    EXPECT_THROW(posterior_condition(m, idx, y, 0.0), ParameterError);
}

TEST(SampleField, IdentityGivesRawNormals) {
    const Eigen::VectorXd mu = Eigen::VectorXd::Zero(5);
    const Eigen::MatrixXd l = Eigen::MatrixXd::Identity(5, 5);
    const auto x = sample_field(mu, l, 9);
    const auto x2 = sample_field(mu, l, 9);
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(x[i], x2[i]);
    EXPECT_THROW(sample_field(Eigen::VectorXd::Zero(4), l, 9), ShapeError);
}

TEST(SampleField, EmpiricalMoments) {
    Eigen::MatrixXd s(3, 3);
    s << 1.0, 0.5, 0.2, 0.5, 2.0, -0.3, 0.2, -0.3, 0.8;
    const Eigen::MatrixXd l = s.llt().matrixL();
    Eigen::VectorXd mu(3);
    mu << 1.0, -2.0, 0.5;
    const int draws = 100000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(3, 3);
    for (int d = 0; d < draws; ++d) {
        const Eigen::VectorXd x = sample_field(mu, l, static_cast<std::uint64_t>(d) + 100);
        sum += x;
        sq += (x - mu) * (x - mu).transpose();
    }
    const Eigen::VectorXd mean = sum / draws;
    EXPECT_NEAR(mean[0], mu[0], 4.0 * std::sqrt(s(0, 0) / draws));
    const Eigen::MatrixXd cov = sq / draws;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(cov(i, j), s(i, j), 0.05 * std::max(std::fabs(s(i, j)), 0.2))
                << i << "," << j;
}
