#include "polling/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <vector>

namespace polling {

double t_quantile_95(std::size_t dof) {
    if (dof == 0) return std::numeric_limits<double>::infinity();
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(boost::math::complement(dist, 0.025));
}

Estimate estimate_from(std::span<const double> values, const double* point) {
    Estimate e;
    // Sorted summation makes the result independent of input order.
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    if (n == 0) {
        e.mean = std::numeric_limits<double>::quiet_NaN();
        e.half_width = e.std_error = std::numeric_limits<double>::infinity();
        return e;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(n);
    e.mean = point ? *point : mean;
    if (n < 2) {
        e.half_width = e.std_error = std::numeric_limits<double>::infinity();
        return e;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(n - 1);
    e.dof = n - 1;
    e.std_error = std::sqrt(var / static_cast<double>(n));
    e.half_width = t_quantile_95(e.dof) * e.std_error;
    return e;
}

}  // namespace polling
