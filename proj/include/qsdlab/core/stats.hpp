#pragma once

#include <cstddef>
#include <span>
#include <utility>

namespace qsdlab {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool overlaps(const Interval& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

/// Two-sided Student-t quantile, e.g. student_t_quantile(0.975, 10).
double student_t_quantile(double p, double dof);

/// Ordinary least squares y = intercept + slope * x.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
    std::size_t n = 0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

} // namespace qsdlab
