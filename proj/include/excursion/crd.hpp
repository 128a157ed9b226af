#pragma once

// Confidence-region detection: marginal exceedance probabilities, the
// joint-probability confidence function over the marginal ordering, and
// region extraction per confidence level.

#include "excursion/field.hpp"
#include "excursion/pmvn.hpp"
#include "excursion/tlr.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace excursion {

struct CrdConfig {
    double u = 0.0;                      // threshold
    std::vector<double> alphas{0.05};    // 1 - confidence level
    std::size_t prefix_stride = 1;       // evaluate every s-th prefix
    QmcPlan plan;
    Backend backend = Backend::Dense;
    std::size_t tile = 256;              // dense factor tile size
    TlrConfig tlr;

    void validate() const;
};

struct ConfidenceFunction {
    Eigen::VectorXd f;              // per location, in location order
    Eigen::VectorXd marginal;       // p_M per location
    std::vector<std::size_t> order; // descending marginal order
    // Per location: standard error of the prefix estimate behind f.
    Eigen::VectorXd std_error;
    // Evaluated prefix sizes with their raw and monotone estimates.
    std::vector<std::size_t> prefix_sizes;
    std::vector<double> prefix_raw;
    std::vector<double> prefix_value;
    std::vector<double> prefix_std_error;
};

struct ExcursionRegion {
    std::vector<std::uint8_t> mask;
    double level = 0.0; // 1 - alpha
    double u = 0.0;

    std::size_t count() const noexcept;
};

// 1 - Phi((u - mean_eff[i]) / sqrt(var_diag[i])).
Eigen::VectorXd marginal_probs(const Eigen::VectorXd& mean_eff, const Eigen::VectorXd& var_diag,
                               double u);

// Stable descending sort; ties keep ascending index order.
std::vector<std::size_t> order_desc(const Eigen::VectorXd& p);

// `mean_eff` is the mean the threshold is compared against; `cov` the
// covariance used both for standardization and for the joint probabilities.
ConfidenceFunction confidence_function(const Eigen::VectorXd& mean_eff, const Eigen::MatrixXd& cov,
                                       const CrdConfig& cfg, const ExecutionPolicy& policy = {});
ConfidenceFunction confidence_function(const FieldModel& model, const CrdConfig& cfg,
                                       const ExecutionPolicy& policy = {});
ConfidenceFunction confidence_function(const PosteriorModel& model, const CrdConfig& cfg,
                                       const ExecutionPolicy& policy = {});

ExcursionRegion extract_region(const ConfidenceFunction& f, double alpha, double u = 0.0);
ExcursionRegion marginal_region(const Eigen::VectorXd& p_marginal, double alpha, double u = 0.0);

} // namespace excursion
