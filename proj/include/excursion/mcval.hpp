#pragma once

// Direct-sampling Monte Carlo: MVN box probabilities and the empirical
// confidence level of detected excursion regions.

#include "excursion/crd.hpp"
#include "excursion/pmvn.hpp"
#include "excursion/runtime.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace excursion {

// Draws x = mu + L z. Sample s, component i uses the keyed normal for
// (seed, s, i), so results do not depend on blocking or worker count.
ProbEstimate mvn_mc_oracle(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                           const IntegrationLimits& limits, std::size_t samples,
                           std::uint64_t seed, const ExecutionPolicy& policy = {});

struct RegionCheck {
    double p_hat = 1.0;
    bool empty = false; // vacuous region: p_hat = 1 by convention
    std::size_t samples = 0;
};

RegionCheck validate_region(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                            const ExcursionRegion& region, double u, std::size_t samples,
                            std::uint64_t seed, const ExecutionPolicy& policy = {});

struct ValidationReport {
    std::vector<double> alphas;
    std::vector<double> p_hat;
    std::vector<double> diff;         // (1 - alpha) - p_hat
    std::vector<double> joint_se;     // stderr of the estimate at the region boundary
    std::vector<double> mc_err_bound; // 3 sqrt(a(1-a)/N) + 3 joint_se
    std::vector<std::size_t> region_size;
    std::vector<std::uint8_t> empty;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

// All levels share one sample set, so the p_hat values are exactly monotone
// in the region.
ValidationReport validation_curve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                                  const ConfidenceFunction& f, const std::vector<double>& alphas,
                                  double u, std::size_t samples, std::uint64_t seed,
                                  const ExecutionPolicy& policy = {});

void write_validation_csv(std::ostream& out, const ValidationReport& r);

} // namespace excursion
