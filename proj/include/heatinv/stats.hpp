#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "heatinv/errors.hpp"

namespace heatinv {

inline double mean(const std::vector<double>& x) {
    if (x.empty()) throw ArgumentError("mean: empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 divisor).
inline double sample_std(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Inverse standard normal CDF. Acklam's rational approximation with one
/// Halley refinement through erfc, accurate to about 1e-15.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must lie in (0, 1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

/// Standardized values (x - mean) / std. Degenerate samples (std = 0) map to
/// all zeros.
inline std::vector<double> standardize(const std::vector<double>& x) {
    const double m = mean(x);
    const double s = sample_std(x);
    std::vector<double> z(x.size(), 0.0);
    if (s == 0.0) return z;
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m) / s;
    return z;
}

/// Quantile-quantile pairs against the standard normal: sorted sample values
/// paired with the quantiles of (i - 0.5) / R.
inline std::vector<std::pair<double, double>> qq_pairs(std::vector<double> sample) {
    if (sample.empty()) throw ArgumentError("qq_pairs: empty sample");
    std::sort(sample.begin(), sample.end());
    const auto r = static_cast<double>(sample.size());
    std::vector<std::pair<double, double>> pairs(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i)
        pairs[i] = {normal_quantile((static_cast<double>(i) + 0.5) / r), sample[i]};
    return pairs;
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ArgumentError("pearson_correlation: need two samples of equal length >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

struct Histogram {
    std::vector<double> edges;   // n_bins + 1
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& x, std::size_t n_bins) {
    if (x.empty() || n_bins == 0) throw ArgumentError("histogram: empty sample or zero bins");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) hi = lo + 1.0;  // all-equal sample: one unit-wide bin span
    Histogram h;
    h.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
    h.counts.assign(n_bins, 0);
    for (double v : x) {
        auto bin = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n_bins));
        if (bin >= n_bins) bin = n_bins - 1;
        ++h.counts[bin];
    }
    return h;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ArgumentError("linear_fit: need at least two points");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw ArgumentError("linear_fit: degenerate abscissae");
    return {sxy / sxx, my - sxy / sxx * mx};
}

} // namespace heatinv
