#pragma once

// Scalar and bivariate Gaussian helpers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace deflect {

/// Standard normal density.
inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF, Phi(x).
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail, 1 - Phi(x), without cancellation for large x.
inline double norm_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF.
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("norm_quantile: probability must lie in (0,1)");
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double b,
                           double fa, double fm, double fb, double whole, double tol,
                           int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double tol, int max_depth = 48) {
    if (b <= a) return 0.0;
    // Seed with a few panels so narrow features are not skipped by the first estimate.
    constexpr int panels = 16;
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * h;
        const double hi = (i + 1 == panels) ? b : lo + h;
        const double flo = f(lo);
        const double fhi = f(hi);
        const double fmid = f(0.5 * (lo + hi));
        const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += detail::simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol / panels, max_depth);
    }
    return total;
}

/// P(X > a, Y > b) for a standard bivariate normal with correlation r.
///
/// The density is integrated over the cell; the inner (conditional) dimension
/// is exact through the normal tail, the outer one is adaptive.
inline double bivariate_upper_orthant(double a, double b, double r, double tol = 1e-12) {
    if (r < -1.0 || r > 1.0) throw std::domain_error("bivariate_upper_orthant: |r| > 1");
    const double one_minus_r2 = (1.0 - r) * (1.0 + r);
    if (one_minus_r2 < 1e-14) {
        if (r > 0.0) return norm_sf(std::max(a, b));
        // Y = -X: need a < X < -b
        return std::max(0.0, norm_cdf(-b) - norm_cdf(a));
    }
    if (r == 0.0) return norm_sf(a) * norm_sf(b);
    const double s = std::sqrt(one_minus_r2);
    const auto integrand = [=](double x) { return norm_pdf(x) * norm_sf((b - r * x) / s); };
    const double lo = a;
    const double hi = std::max(a, 0.0) + 10.0;
    return integrate_adaptive(integrand, lo, hi, tol);
}

/// P(|X| > a, |Y| > b) for a standard bivariate normal with correlation r.
inline double bivariate_two_sided_exceedance(double a, double b, double r, double tol = 1e-12) {
    return 2.0 * (bivariate_upper_orthant(a, b, r, tol) + bivariate_upper_orthant(a, b, -r, tol));
}

}  // namespace deflect
