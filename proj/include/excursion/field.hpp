#pragma once

// Spatial geometry, Matérn covariance, posterior conditioning on noisy point
// observations, and exact Gaussian field sampling.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace excursion {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Ordered 2-D locations. The point order is the index order of every
// vector and matrix built from the geometry.
struct Geometry {
    std::vector<Point> points;

    std::size_t size() const noexcept { return points.size(); }
    // Throws ParameterError when empty or when a coordinate is not finite.
    void validate() const;
};

struct MaternParams {
    double sigma2 = 1.0; // marginal variance
    double range = 0.1;  // spatial range a
    double nu = 0.5;     // smoothness

    void validate() const;
};

// Plain prior model: mean and covariance over a geometry.
struct FieldModel {
    Geometry geometry;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct PosteriorModel {
    Eigen::VectorXd mean_post;
    Eigen::MatrixXd cov_post;
    std::vector<std::size_t> observed_idx;
    double noise_sd = 0.5;
};

enum class GeometryKind { Grid, UniformRandom };

// K_nu(x), x > 0.
double bessel_k(double nu, double x);

// sigma2 * (h/a)^nu * K_nu(h/a) / (2^(nu-1) Gamma(nu)); sigma2 at h = 0.
// nu in {0.5, 1.5, 2.5} use the exponential-polynomial closed forms.
double matern_cov(double h, const MaternParams& p);

// Matérn with nu = 1/2.
double exponential_cov(double h, double sigma2, double range);

double distance(const Point& a, const Point& b) noexcept;

// Dense n x n covariance; each unordered pair is evaluated once and mirrored,
// so the result is bitwise symmetric. `nugget` is added to the diagonal.
// Duplicate locations produce a warning, not an error.
Eigen::MatrixXd assemble_cov(const Geometry& geom, const MaternParams& p, double nugget = 0.0);

// Indices i < j with identical coordinates, as (i, j) pairs.
std::vector<std::pair<std::size_t, std::size_t>> duplicate_points(const Geometry& geom);

// Sqrt(n) x sqrt(n) lattice on [0,1]^2 (x-major), or n i.i.d. uniform points.
Geometry gen_geometry(GeometryKind kind, std::size_t n, std::uint64_t seed);

// Permutation that sorts points along a Z-order (Morton) curve on their
// bounding box; ties keep the original order. Spatially coherent ordering
// keeps off-diagonal tiles numerically low rank.
std::vector<std::size_t> morton_order(const Geometry& geom);
Geometry permuted(const Geometry& geom, std::span<const std::size_t> order);

// Conditions N(mean, cov) on y = A x + e, e ~ N(0, noise_sd^2 I), where A
// selects `observed_idx`. Throws FactorizationError if cov (or the
// posterior precision) is not positive definite.
PosteriorModel posterior_condition(const FieldModel& model,
                                   std::span<const std::size_t> observed_idx,
                                   const Eigen::VectorXd& y, double noise_sd);

// mean + L z with z_i = keyed standard normals for (seed, i). `lower` is a
// lower-triangular factor of the covariance; its strict upper part is ignored.
Eigen::VectorXd sample_field(const Eigen::VectorXd& mean, const Eigen::MatrixXd& lower,
                             std::uint64_t seed);
Eigen::VectorXd sample_field(const FieldModel& model, const Eigen::MatrixXd& lower,
                             std::uint64_t seed);
Eigen::VectorXd sample_field(const PosteriorModel& model, const Eigen::MatrixXd& lower,
                             std::uint64_t seed);

} // namespace excursion
