#pragma once

#include <cmath>
#include <stdexcept>

namespace ssr {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Acklam's rational approximation to the probit, polished with one Newton
// step against erfc; accurate to ~1e-15 over (0,1).
inline double normal_cdf_inv(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("normal_cdf_inv: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double err = normal_cdf(x) - p;
    x -= err / normal_pdf(x);
    return x;
}

inline double log_choose(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("log_choose: k out of range");
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// P(Binomial(n, p) >= m), by direct summation.
inline double binomial_tail_at_least(int n, double p, int m) {
    if (n < 1) throw std::invalid_argument("binomial_tail_at_least: n must be >= 1");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("binomial_tail_at_least: p must be in [0,1]");
    if (m <= 0) return 1.0;
    if (m > n) return 0.0;
    double total = 0.0;
    for (int j = m; j <= n; ++j) {
        double log_term = log_choose(n, j);
        if (p > 0.0) log_term += j * std::log(p);
        if (p < 1.0) log_term += (n - j) * std::log(1.0 - p);
        if ((j > 0 && p == 0.0) || (j < n && p == 1.0)) continue;
        total += std::exp(log_term);
    }
    return std::min(total, 1.0);
}

}  // namespace ssr
