#pragma once

// Univariate standard normal kernels used by the separation-of-variables
// recursion: CDF, quantile and tail-aware interval probabilities.

namespace excursion {

// Range the quantile is allowed to see. Probabilities outside
// [p_min, p_max] are clamped so that transformed samples stay finite.
struct ClampPolicy {
    double p_min = 1e-300;
    double p_max = 1.0 - 1e-16;
};

// P(Z <= x). Accepts +-infinity; throws DomainError on NaN.
double norm_cdf(double x);

// P(Z > x), evaluated without cancellation in the upper tail.
double norm_ccdf(double x);

double norm_pdf(double x);

// Inverse of norm_cdf. `p` is clamped into the policy range first.
double norm_quantile(double p, const ClampPolicy& clamp = {});

// Returns x with P(Z > x) = q, accurate for tiny q. q is clamped with the
// same policy as norm_quantile.
double norm_quantile_upper(double q, const ClampPolicy& clamp = {});

// P(a < Z <= b). a may be -inf and b may be +inf. When both endpoints are
// positive the difference is taken between upper-tail probabilities so that
// far-tail intervals keep their significant digits. Never negative; a > b
// yields 0.
double interval_prob(double a, double b);

} // namespace excursion
