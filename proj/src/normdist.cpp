#include "excursion/normdist.hpp"

#include "excursion/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace excursion {

namespace {

constexpr double inv_sqrt2 = 0.70710678118654752440;
constexpr double inv_sqrt2pi = 0.39894228040143267794;

void require_number(double x, const char* what) {
    if (std::isnan(x))
        throw DomainError(std::string(what) + ": NaN argument");
}

// Wichura's AS241 (PPND16) for 0 < p <= 0.5; about 16 digits.
double ppnd16_lower(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = std::sqrt(-std::log(p));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return -x;
}

// Lower-half quantile (p <= 0.5) with one Newton correction.
double quantile_lower(double p) {
    double x = ppnd16_lower(p);
    const double dens = norm_pdf(x);
    if (dens > 0.0)
        x -= (0.5 * std::erfc(-x * inv_sqrt2) - p) / dens;
    return x;
}

double clamp_probability(double p, const ClampPolicy& clamp) {
    if (p < clamp.p_min)
        return clamp.p_min;
    if (p > clamp.p_max)
        return clamp.p_max;
    return p;
}

} // namespace

double norm_cdf(double x) {
    require_number(x, "norm_cdf");
    return 0.5 * std::erfc(-x * inv_sqrt2);
}

double norm_ccdf(double x) {
    require_number(x, "norm_ccdf");
    return 0.5 * std::erfc(x * inv_sqrt2);
}

double norm_pdf(double x) { return inv_sqrt2pi * std::exp(-0.5 * x * x); }

double norm_quantile(double p, const ClampPolicy& clamp) {
    require_number(p, "norm_quantile");
    p = clamp_probability(p, clamp);
    if (p <= 0.5)
        return quantile_lower(p);
    return -quantile_lower(1.0 - p);
}

double norm_quantile_upper(double q, const ClampPolicy& clamp) {
    // Phi^{-1}(1 - q) = -Phi^{-1}(q); q is clamped as a lower-tail mass.
    return -norm_quantile(q, clamp);
}

double interval_prob(double a, double b) {
    require_number(a, "interval_prob");
    require_number(b, "interval_prob");
    if (a > b) {
        warn("interval_prob: lower limit exceeds upper limit, returning 0");
        return 0.0;
    }
    double p;
    if (a >= 0.0)
        p = norm_ccdf(a) - norm_ccdf(b);
    else
        p = norm_cdf(b) - norm_cdf(a);
    return p > 0.0 ? p : 0.0;
}

} // namespace excursion
