#include "excursion/field.hpp"

#include "excursion/error.hpp"
#include "excursion/rng.hpp"
#include "excursion/tiles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace excursion {

void Geometry::validate() const {
    if (points.empty())
        throw ParameterError("geometry: at least one point is required");
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y))
            throw ParameterError("geometry: non-finite coordinate at point " + std::to_string(i));
}

void MaternParams::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!ok(sigma2) || !ok(range) || !ok(nu))
        throw ParameterError("Matern parameters must be positive and finite (sigma2=" +
                             std::to_string(sigma2) + ", range=" + std::to_string(range) +
                             ", nu=" + std::to_string(nu) + ")");
}

double exponential_cov(double h, double sigma2, double range) {
    return sigma2 * std::exp(-h / range);
}

double matern_cov(double h, const MaternParams& p) {
    p.validate();
    if (!std::isfinite(h) || h < 0.0)
        throw ParameterError("matern_cov: distance must be finite and non-negative");
    if (h == 0.0)
        return p.sigma2;
    const double r = h / p.range;
    if (p.nu == 0.5)
        return p.sigma2 * std::exp(-r);
    if (p.nu == 1.5)
        return p.sigma2 * (1.0 + r) * std::exp(-r);
    if (p.nu == 2.5)
        return p.sigma2 * (1.0 + r + r * r / 3.0) * std::exp(-r);
    if (r > 700.0)
        return 0.0;
    const double k = bessel_k(p.nu, r);
    if (!std::isfinite(k))
        return p.sigma2; // r^nu K_nu(r) -> 2^(nu-1) Gamma(nu) as r -> 0
    const double c = p.sigma2 * std::exp(p.nu * std::log(r) + std::log(k) -
                                         (p.nu - 1.0) * std::log(2.0) - std::lgamma(p.nu));
    return std::min(c, p.sigma2);
}

double distance(const Point& a, const Point& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

std::vector<std::pair<std::size_t, std::size_t>> duplicate_points(const Geometry& geom) {
    std::vector<std::size_t> idx(geom.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto key = [&](std::size_t i) { return std::pair(geom.points[i].x, geom.points[i].y); };
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return key(a) < key(b); });
    std::vector<std::pair<std::size_t, std::size_t>> dups;
    for (std::size_t s = 0; s < idx.size();) {
        std::size_t e = s + 1;
        while (e < idx.size() && key(idx[e]) == key(idx[s]))
            ++e;
        for (std::size_t a = s; a < e; ++a)
            for (std::size_t b = a + 1; b < e; ++b)
                dups.emplace_back(std::min(idx[a], idx[b]), std::max(idx[a], idx[b]));
        s = e;
    }
    std::sort(dups.begin(), dups.end());
    return dups;
}

Eigen::MatrixXd assemble_cov(const Geometry& geom, const MaternParams& p, double nugget) {
    geom.validate();
    p.validate();
    if (!std::isfinite(nugget) || nugget < 0.0)
        throw ParameterError("nugget must be finite and non-negative");
    if (const auto dups = duplicate_points(geom); !dups.empty())
        warn("assemble_cov: " + std::to_string(dups.size()) +
             " duplicate location pair(s), first (" + std::to_string(dups.front().first) + "," +
             std::to_string(dups.front().second) + "); covariance will be singular");
    const std::size_t n = geom.size();
    Eigen::MatrixXd s(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        s(j, j) = p.sigma2 + nugget;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double c = matern_cov(distance(geom.points[i], geom.points[j]), p);
            s(i, j) = c;
            s(j, i) = c;
        }
    }
    return s;
}

Geometry gen_geometry(GeometryKind kind, std::size_t n, std::uint64_t seed) {
    if (n == 0)
        throw ParameterError("gen_geometry: n must be at least 1");
    Geometry g;
    g.points.reserve(n);
    if (kind == GeometryKind::Grid) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
        if (side * side != n)
            throw ParameterError("gen_geometry: grid requires a perfect square, got n=" +
                                 std::to_string(n));
        const double step = side > 1 ? 1.0 / static_cast<double>(side - 1) : 0.0;
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j)
                g.points.push_back({static_cast<double>(i) * step, static_cast<double>(j) * step});
    } else {
        for (std::size_t i = 0; i < n; ++i)
            g.points.push_back({keyed_uniform(seed, 1, i, 0), keyed_uniform(seed, 1, i, 1)});
    }
    return g;
}

namespace {

std::uint64_t spread_bits(std::uint32_t v) {
    std::uint64_t x = v;
    x = (x | (x << 16)) & 0x0000FFFF0000FFFFULL;
    x = (x | (x << 8)) & 0x00FF00FF00FF00FFULL;
    x = (x | (x << 4)) & 0x0F0F0F0F0F0F0F0FULL;
    x = (x | (x << 2)) & 0x3333333333333333ULL;
    x = (x | (x << 1)) & 0x5555555555555555ULL;
    return x;
}

} // namespace

std::vector<std::size_t> morton_order(const Geometry& geom) {
    geom.validate();
    double xmin = geom.points[0].x, xmax = xmin, ymin = geom.points[0].y, ymax = ymin;
    for (const auto& pt : geom.points) {
        xmin = std::min(xmin, pt.x);
        xmax = std::max(xmax, pt.x);
        ymin = std::min(ymin, pt.y);
        ymax = std::max(ymax, pt.y);
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-300});
    auto quantize = [&](double v, double lo) {
        const double t = (v - lo) / span * 4294967295.0;
        return static_cast<std::uint32_t>(std::clamp(t, 0.0, 4294967295.0));
    };
    std::vector<std::uint64_t> code(geom.size());
    for (std::size_t i = 0; i < geom.size(); ++i)
        code[i] = spread_bits(quantize(geom.points[i].x, xmin)) |
                  (spread_bits(quantize(geom.points[i].y, ymin)) << 1);
    std::vector<std::size_t> order(geom.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return code[a] < code[b]; });
    return order;
}

Geometry permuted(const Geometry& geom, std::span<const std::size_t> order) {
    if (order.size() != geom.size())
        throw ShapeError("permuted: order length differs from geometry size");
    Geometry g;
    g.points.reserve(order.size());
    for (std::size_t i : order)
        g.points.push_back(geom.points.at(i));
    return g;
}

namespace {

// Inverse of an SPD matrix through the tiled Cholesky; the result is
// symmetrized exactly.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a) {
    const Eigen::MatrixXd l = dense_cholesky(a);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    l.triangularView<Eigen::Lower>().solveInPlace(inv);
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
    return 0.5 * (inv + inv.transpose());
}

} // namespace

PosteriorModel posterior_condition(const FieldModel& model,
                                   std::span<const std::size_t> observed_idx,
                                   const Eigen::VectorXd& y, double noise_sd) {
    const auto n = static_cast<std::size_t>(model.cov.rows());
    if (model.cov.cols() != model.cov.rows() || static_cast<std::size_t>(model.mean.size()) != n)
        throw ShapeError("posterior_condition: mean/cov shape mismatch");
    if (static_cast<std::size_t>(y.size()) != observed_idx.size())
        throw ShapeError("posterior_condition: one observation per observed index required");
    if (!std::isfinite(noise_sd) || noise_sd <= 0.0)
        throw ParameterError("posterior_condition: noise_sd must be positive");
    for (std::size_t idx : observed_idx)
        if (idx >= n)
            throw ParameterError("posterior_condition: observed index " + std::to_string(idx) +
                                 " out of range");

    const double tau = 1.0 / (noise_sd * noise_sd);
    // Precision Q = Sigma^{-1} + tau A^T A; A^T A is diagonal with the
    // observation count of each site.
    Eigen::MatrixXd q = spd_inverse(model.cov);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < observed_idx.size(); ++k) {
        const std::size_t i = observed_idx[k];
        q(i, i) += tau;
        rhs(i) += tau * (y(k) - model.mean(i));
    }
    PosteriorModel post;
    post.cov_post = spd_inverse(q);
    post.mean_post = model.mean + post.cov_post * rhs;
    post.observed_idx.assign(observed_idx.begin(), observed_idx.end());
    post.noise_sd = noise_sd;
    return post;
}

Eigen::VectorXd sample_field(const Eigen::VectorXd& mean, const Eigen::MatrixXd& lower,
                             std::uint64_t seed) {
    const Eigen::Index n = mean.size();
    if (lower.rows() != n || lower.cols() != n)
        throw ShapeError("sample_field: factor is " + std::to_string(lower.rows()) + "x" +
                         std::to_string(lower.cols()) + ", mean has " + std::to_string(n) +
                         " entries");
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i)
        z(i) = keyed_normal(seed, 2, 0, static_cast<std::uint64_t>(i));
    return mean + lower.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd sample_field(const FieldModel& model, const Eigen::MatrixXd& lower,
                             std::uint64_t seed) {
    return sample_field(model.mean, lower, seed);
}

Eigen::VectorXd sample_field(const PosteriorModel& model, const Eigen::MatrixXd& lower,
                             std::uint64_t seed) {
    return sample_field(model.mean_post, lower, seed);
}

} // namespace excursion
