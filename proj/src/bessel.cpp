// Modified Bessel function of the second kind K_nu(x) for real nu >= 0,
// x > 0. Temme's series for x < 2, Steed's continued fraction (CF2)
// otherwise, then forward recurrence in the order from |mu| <= 1/2.

#include "excursion/field.hpp"

#include "excursion/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace excursion {

namespace {

constexpr double eps = 1e-16;
constexpr int max_iter = 10000;

// gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
    gampl = 1.0 / std::tgamma(1.0 + mu);
    gammi = 1.0 / std::tgamma(1.0 - mu);
    if (std::fabs(mu) < 1e-2) {
        // Taylor coefficients of 1/Gamma(1+z).
        constexpr double c1 = 0.5772156649015328606;
        constexpr double c2 = -0.6558780715202538811;
        constexpr double c3 = -0.0420026350340952355;
        constexpr double c4 = 0.1665386113822914895;
        constexpr double c5 = -0.0421977345555443367;
        constexpr double c6 = -0.0096219715278769736;
        constexpr double c7 = 0.0072189432466630995;
        const double m2 = mu * mu;
        gam1 = -(c1 + m2 * (c3 + m2 * (c5 + m2 * c7)));
        gam2 = 1.0 + m2 * (c2 + m2 * (c4 + m2 * c6));
    } else {
        gam1 = (gammi - gampl) / (2.0 * mu);
        gam2 = 0.5 * (gammi + gampl);
    }
}

double half_integer_k(double nu, double x) {
    // K_{1/2} and K_{3/2} in closed form, then upward recurrence.
    const double k_half = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x);
    if (nu == 0.5)
        return k_half;
    double km = k_half;
    double k = k_half * (1.0 + 1.0 / x);
    for (double order = 1.5; order < nu; order += 1.0) {
        const double next = km + 2.0 * order / x * k;
        km = k;
        k = next;
    }
    return k;
}

} // namespace

double bessel_k(double nu, double x) {
    if (!std::isfinite(nu) || !std::isfinite(x) || x <= 0.0)
        throw ParameterError("bessel_k: requires finite nu and x > 0");
    nu = std::fabs(nu);
    if (nu - std::floor(nu) == 0.5 && nu <= 50.5)
        return half_integer_k(nu, x);

    const int nl = static_cast<int>(nu + 0.5);
    const double mu = nu - nl;
    const double mu2 = mu * mu;
    const double xi = 1.0 / x;
    const double xi2 = 2.0 * xi;

    double kmu, k1;
    if (x < 2.0) {
        const double x2 = 0.5 * x;
        const double pimu = std::numbers::pi * mu;
        const double fact = std::fabs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
        double d = -std::log(x2);
        double e = mu * d;
        const double fact2 = std::fabs(e) < eps ? 1.0 : std::sinh(e) / e;
        double gam1, gam2, gampl, gammi;
        temme_gammas(mu, gam1, gam2, gampl, gammi);
        double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
        double sum = ff;
        e = std::exp(e);
        double p = 0.5 * e / gampl;
        double q = 0.5 / (e * gammi);
        double c = 1.0;
        d = x2 * x2;
        double sum1 = p;
        int i = 1;
        for (; i <= max_iter; ++i) {
            ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu2);
            c *= d / i;
            p /= i - mu;
            q /= i + mu;
            const double del = c * ff;
            sum += del;
            sum1 += c * (p - i * ff);
            if (std::fabs(del) < std::fabs(sum) * eps)
                break;
        }
        if (i > max_iter)
            throw ParameterError("bessel_k: series failed to converge");
        kmu = sum;
        k1 = sum1 * xi2;
    } else {
        double b = 2.0 * (1.0 + x);
        double d = 1.0 / b;
        double h = d;
        double delh = d;
        double q1 = 0.0;
        double q2 = 1.0;
        const double a1 = 0.25 - mu2;
        double q = a1;
        double c = a1;
        double a = -a1;
        double s = 1.0 + q * delh;
        int i = 1;
        for (; i <= max_iter; ++i) {
            a -= 2 * i;
            c = -a * c / (i + 1.0);
            const double qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            const double dels = q * delh;
            s += dels;
            if (std::fabs(dels / s) < eps)
                break;
        }
        if (i > max_iter)
            throw ParameterError("bessel_k: continued fraction failed to converge");
        h = a1 * h;
        kmu = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) / s;
        k1 = kmu * (mu + x + 0.5 - h) * xi;
    }
    for (int i = 1; i <= nl; ++i) {
        const double next = (mu + i) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    return kmu;
}

} // namespace excursion
