#include "excursion/mcval.hpp"

#include "excursion/error.hpp"
#include "excursion/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace excursion {

namespace {

constexpr std::uint64_t mc_stream = 3;
constexpr std::size_t block = 256;

void check_model(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu) {
    if (lower.rows() != lower.cols() || lower.rows() != mu.size())
        throw ShapeError("Monte Carlo: factor is " + std::to_string(lower.rows()) + "x" +
                         std::to_string(lower.cols()) + ", mean has " +
                         std::to_string(mu.size()) + " entries");
}

// Calls visit(sample_index, x) for every draw; blocks of samples run in
// parallel and partial results land in per-block slots.
template <class Visit>
void for_each_draw(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu, std::size_t samples,
                   std::uint64_t seed, const ExecutionPolicy& policy, Visit visit) {
    const Eigen::Index n = mu.size();
    const std::size_t blocks = (samples + block - 1) / block;
    parallel_for(
        blocks,
        [&](std::size_t b) {
            const std::size_t s0 = b * block;
            const std::size_t w = std::min(block, samples - s0);
            Eigen::MatrixXd z(n, static_cast<Eigen::Index>(w));
            for (std::size_t s = 0; s < w; ++s)
                for (Eigen::Index i = 0; i < n; ++i)
                    z(i, static_cast<Eigen::Index>(s)) =
                        keyed_normal(seed, mc_stream, s0 + s, static_cast<std::uint64_t>(i));
            Eigen::MatrixXd x = lower.triangularView<Eigen::Lower>() * z;
            x.colwise() += mu;
            for (std::size_t s = 0; s < w; ++s)
                visit(b, x.col(static_cast<Eigen::Index>(s)));
        },
        policy);
}

} // namespace

ProbEstimate mvn_mc_oracle(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                           const IntegrationLimits& limits, std::size_t samples,
                           std::uint64_t seed, const ExecutionPolicy& policy) {
    check_model(lower, mu);
    limits.validate();
    if (limits.size() != static_cast<std::size_t>(mu.size()))
        throw ShapeError("mvn_mc_oracle: limits length differs from the mean");
    if (samples == 0)
        throw ParameterError("mvn_mc_oracle: at least one sample is required");
    const std::size_t blocks = (samples + block - 1) / block;
    std::vector<std::size_t> hits(blocks, 0);
    for_each_draw(lower, mu, samples, seed, policy, [&](std::size_t b, const auto& x) {
        bool inside = true;
        for (Eigen::Index i = 0; i < x.size() && inside; ++i)
            inside = x(i) >= limits.a(i) && x(i) <= limits.b(i);
        hits[b] += inside ? 1 : 0;
    });
    std::size_t total = 0;
    for (std::size_t h : hits)
        total += h;
    ProbEstimate est;
    est.samples = samples;
    est.value = static_cast<double>(total) / static_cast<double>(samples);
    est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
    est.log_value = std::log(est.value);
    return est;
}

namespace {

std::vector<std::size_t> region_sites(const ExcursionRegion& region, Eigen::Index n) {
    if (region.mask.size() != static_cast<std::size_t>(n))
        throw ShapeError("validate_region: mask length differs from the model");
    std::vector<std::size_t> sites;
    for (std::size_t i = 0; i < region.mask.size(); ++i)
        if (region.mask[i])
            sites.push_back(i);
    return sites;
}

// Exceedance counts for several site sets over one shared sample set.
std::vector<std::size_t> exceed_counts(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                                       const std::vector<std::vector<std::size_t>>& sets,
                                       double u, std::size_t samples, std::uint64_t seed,
                                       const ExecutionPolicy& policy) {
    const std::size_t blocks = (samples + block - 1) / block;
    std::vector<std::vector<std::size_t>> part(blocks, std::vector<std::size_t>(sets.size(), 0));
    for_each_draw(lower, mu, samples, seed, policy, [&](std::size_t b, const auto& x) {
        for (std::size_t r = 0; r < sets.size(); ++r) {
            bool all = true;
            for (std::size_t s : sets[r])
                if (!(x(static_cast<Eigen::Index>(s)) > u)) {
                    all = false;
                    break;
                }
            part[b][r] += all ? 1 : 0;
        }
    });
    std::vector<std::size_t> total(sets.size(), 0);
    for (const auto& p : part)
        for (std::size_t r = 0; r < sets.size(); ++r)
            total[r] += p[r];
    return total;
}

} // namespace

RegionCheck validate_region(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                            const ExcursionRegion& region, double u, std::size_t samples,
                            std::uint64_t seed, const ExecutionPolicy& policy) {
    check_model(lower, mu);
    if (samples == 0)
        throw ParameterError("validate_region: at least one sample is required");
    RegionCheck out;
    out.samples = samples;
    const auto sites = region_sites(region, mu.size());
    if (sites.empty()) {
        out.empty = true;
        out.p_hat = 1.0;
        return out;
    }
    const auto counts = exceed_counts(lower, mu, {sites}, u, samples, seed, policy);
    out.p_hat = static_cast<double>(counts[0]) / static_cast<double>(samples);
    return out;
}

ValidationReport validation_curve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& mu,
                                  const ConfidenceFunction& f, const std::vector<double>& alphas,
                                  double u, std::size_t samples, std::uint64_t seed,
                                  const ExecutionPolicy& policy) {
    check_model(lower, mu);
    if (samples == 0)
        throw ParameterError("validation_curve: at least one sample is required");
    ValidationReport rep;
    rep.samples = samples;
    rep.seed = seed;
    std::vector<std::vector<std::size_t>> sets;
    for (double a : alphas) {
        const ExcursionRegion region = extract_region(f, a, u);
        sets.push_back(region_sites(region, mu.size()));
        // Boundary estimate: the smallest f inside the region.
        double se = 0.0, fmin = 2.0;
        for (std::size_t s : sets.back()) {
            const auto si = static_cast<Eigen::Index>(s);
            if (f.f(si) < fmin) {
                fmin = f.f(si);
                se = f.std_error.size() == f.f.size() ? f.std_error(si) : 0.0;
            }
        }
        rep.alphas.push_back(a);
        rep.joint_se.push_back(se);
        rep.region_size.push_back(sets.back().size());
        rep.empty.push_back(sets.back().empty() ? 1 : 0);
    }
    const auto counts = exceed_counts(lower, mu, sets, u, samples, seed, policy);
    const auto dn = static_cast<double>(samples);
    for (std::size_t r = 0; r < alphas.size(); ++r) {
        const double a = alphas[r];
        const double p = sets[r].empty() ? 1.0 : static_cast<double>(counts[r]) / dn;
        rep.p_hat.push_back(p);
        rep.diff.push_back((1.0 - a) - p);
        rep.mc_err_bound.push_back(3.0 * std::sqrt(a * (1.0 - a) / dn) + 3.0 * rep.joint_se[r]);
    }
    return rep;
}

void write_validation_csv(std::ostream& out, const ValidationReport& r) {
    out << "one_minus_alpha,p_hat,diff,mc_err_bound\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.alphas.size(); ++i)
        out << 1.0 - r.alphas[i] << ',' << r.p_hat[i] << ',' << r.diff[i] << ','
            << r.mc_err_bound[i] << '\n';
}

} // namespace excursion
