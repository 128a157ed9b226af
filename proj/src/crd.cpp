#include "excursion/crd.hpp"

#include "excursion/error.hpp"
#include "excursion/normdist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace excursion {

void CrdConfig::validate() const {
    if (!std::isfinite(u))
        throw ParameterError("crd: threshold must be finite");
    if (alphas.empty())
        throw ParameterError("crd: at least one alpha is required");
    for (double a : alphas)
        if (!(a > 0.0 && a < 1.0))
            throw ParameterError("crd: alpha must lie in (0, 1), got " + std::to_string(a));
    if (prefix_stride == 0)
        throw ParameterError("crd: prefix stride must be at least 1");
    if (tile == 0)
        throw ParameterError("crd: tile size must be at least 1");
    plan.validate();
    if (backend == Backend::Tlr)
        tlr.validate();
}

std::size_t ExcursionRegion::count() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Eigen::VectorXd marginal_probs(const Eigen::VectorXd& mean_eff, const Eigen::VectorXd& var_diag,
                               double u) {
    if (mean_eff.size() != var_diag.size())
        throw ShapeError("marginal_probs: mean and variance lengths differ");
    Eigen::VectorXd p(mean_eff.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(var_diag(i) > 0.0) || !std::isfinite(var_diag(i)))
            throw ParameterError("marginal_probs: non-positive variance at index " +
                                 std::to_string(i));
        p(i) = norm_ccdf((u - mean_eff(i)) / std::sqrt(var_diag(i)));
    }
    return p;
}

std::vector<std::size_t> order_desc(const Eigen::VectorXd& p) {
    std::vector<std::size_t> o(static_cast<std::size_t>(p.size()));
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
        return p(static_cast<Eigen::Index>(a)) > p(static_cast<Eigen::Index>(b));
    });
    return o;
}

ConfidenceFunction confidence_function(const Eigen::VectorXd& mean_eff, const Eigen::MatrixXd& cov,
                                       const CrdConfig& cfg, const ExecutionPolicy& policy) {
    cfg.validate();
    const Eigen::Index n = mean_eff.size();
    if (n == 0 || cov.rows() != n || cov.cols() != n)
        throw ShapeError("confidence_function: mean has " + std::to_string(n) +
                         " entries, covariance is " + std::to_string(cov.rows()) + "x" +
                         std::to_string(cov.cols()));
    ConfidenceFunction out;
    const Eigen::VectorXd var = cov.diagonal();
    out.marginal = marginal_probs(mean_eff, var, cfg.u);
    out.order = order_desc(out.marginal);
    const auto& o = out.order;

    // Correlation matrix in marginal order; standardized limits go with it.
    Eigen::VectorXd sd = var.cwiseSqrt();
    Eigen::MatrixXd corr(n, n);
    for (Eigen::Index q = 0; q < n; ++q)
        for (Eigen::Index p = 0; p < n; ++p) {
            const auto op = static_cast<Eigen::Index>(o[p]);
            const auto oq = static_cast<Eigen::Index>(o[q]);
            corr(p, q) = p == q ? 1.0 : cov(op, oq) / (sd(op) * sd(oq));
        }
    for (Eigen::Index q = 0; q < n; ++q)
        for (Eigen::Index p = q + 1; p < n; ++p)
            corr(q, p) = corr(p, q);
    Eigen::VectorXd a_full(n);
    for (Eigen::Index p = 0; p < n; ++p) {
        const auto op = static_cast<Eigen::Index>(o[p]);
        a_full(p) = (cfg.u - mean_eff(op)) / sd(op);
    }

    CholeskyFactor dense;
    TlrMatrix tlr;
    if (cfg.backend == Backend::Dense) {
        dense = tiled_cholesky(DenseTileMatrix::from_dense(corr, cfg.tile, Storage::SymmetricLower),
                               policy);
    } else {
        tlr = tlr_cholesky(tlr_from_dense(corr, cfg.tlr, policy), policy);
    }

    const auto un = static_cast<std::size_t>(n);
    for (std::size_t k = 1; k <= un; k += cfg.prefix_stride)
        out.prefix_sizes.push_back(k);
    if (out.prefix_sizes.back() != un)
        out.prefix_sizes.push_back(un);

    QmcPlan plan = cfg.plan;
    plan.tile = 0;
    double running = 1.0;
    for (std::size_t idx = 0; idx < out.prefix_sizes.size(); ++idx) {
        const std::size_t k = out.prefix_sizes[idx];
        IntegrationLimits lim{Eigen::VectorXd::Constant(n, -HUGE_VAL),
                              Eigen::VectorXd::Constant(n, HUGE_VAL)};
        lim.a.head(static_cast<Eigen::Index>(k)) = a_full.head(static_cast<Eigen::Index>(k));
        plan.stream = cfg.plan.stream + idx;
        ProbEstimate est;
        try {
            est = cfg.backend == Backend::Dense ? pmvn(lim, dense, plan, policy)
                                                : pmvn(lim, tlr, plan, policy);
        } catch (const FactorizationError& e) {
            throw FactorizationError(e.row(), "confidence_function: prefix of size " +
                                                  std::to_string(k) + " failed: " + e.what());
        } catch (const Error& e) {
            throw Error("confidence_function: prefix of size " + std::to_string(k) +
                        " failed: " + e.what());
        }
        running = std::min(running, est.value);
        out.prefix_raw.push_back(est.value);
        out.prefix_value.push_back(running);
        out.prefix_std_error.push_back(est.std_error);
    }

    // Position p (0-based along the order) takes the last evaluated prefix
    // of size <= p + 1.
    out.f.resize(n);
    out.std_error.resize(n);
    std::size_t idx = 0;
    for (std::size_t p = 0; p < un; ++p) {
        while (idx + 1 < out.prefix_sizes.size() && out.prefix_sizes[idx + 1] <= p + 1)
            ++idx;
        out.f(static_cast<Eigen::Index>(o[p])) = out.prefix_value[idx];
        out.std_error(static_cast<Eigen::Index>(o[p])) = out.prefix_std_error[idx];
    }
    return out;
}

ConfidenceFunction confidence_function(const FieldModel& model, const CrdConfig& cfg,
                                       const ExecutionPolicy& policy) {
    return confidence_function(model.mean, model.cov, cfg, policy);
}

ConfidenceFunction confidence_function(const PosteriorModel& model, const CrdConfig& cfg,
                                       const ExecutionPolicy& policy) {
    return confidence_function(model.mean_post, model.cov_post, cfg, policy);
}

namespace {

ExcursionRegion threshold_mask(const Eigen::VectorXd& v, double alpha, double u) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0, 1), got " + std::to_string(alpha));
    ExcursionRegion r;
    r.level = 1.0 - alpha;
    r.u = u;
    r.mask.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        r.mask[static_cast<std::size_t>(i)] = v(i) >= r.level ? 1 : 0;
    return r;
}

} // namespace

ExcursionRegion extract_region(const ConfidenceFunction& f, double alpha, double u) {
    return threshold_mask(f.f, alpha, u);
}

ExcursionRegion marginal_region(const Eigen::VectorXd& p_marginal, double alpha, double u) {
    return threshold_mask(p_marginal, alpha, u);
}

} // namespace excursion
