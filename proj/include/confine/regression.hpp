#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "confine/error.hpp"

namespace confine {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    /// Coefficient of determination. 0 when the observed series has no variance.
    double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw ValidationError("regression needs two equally sized series of at least 2 points");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) {
        throw ValidationError("regression needs at least two distinct x values");
    }
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy > 0.0) {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
            ss_res += r * r;
        }
        fit.r2 = 1.0 - ss_res / syy;
    }
    return fit;
}

/// Fit of y = a + b * ln(x); requires x > 0.
inline LinearFit fit_logarithmic(std::span<const double> xs, std::span<const double> ys) {
    std::vector<double> lx(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0)) {
            throw ValidationError("logarithmic fit needs positive x");
        }
        lx[i] = std::log(xs[i]);
    }
    return fit_linear(lx, ys);
}

struct RegressionStats {
    double r2_lin = 0.0;
    double r2_log = 0.0;
    double slope_hat = 0.0;
};

inline RegressionStats regression_stats(std::span<const double> xs, std::span<const double> ys) {
    auto lin = fit_linear(xs, ys);
    auto log = fit_logarithmic(xs, ys);
    return RegressionStats{lin.r2, log.r2, lin.slope};
}

}  // namespace confine
