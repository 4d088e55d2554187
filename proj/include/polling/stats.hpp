#pragma once

#include <cstddef>
#include <span>

namespace polling {

/// Point estimate with a symmetric 95% confidence interval.
struct Estimate {
    double mean = 0.0;
    double half_width = 0.0;
    double std_error = 0.0;
    std::size_t dof = 0;  // degrees of freedom behind the interval; 0 = no interval
};

/// Two-sided 95% Student-t quantile.
double t_quantile_95(std::size_t dof);

/// Estimate from independent, identically distributed observations (batch
/// means or replication means). `point` overrides the sample mean as the
/// point estimate when given (e.g. a ratio estimator over the whole run).
/// With fewer than two values the interval is infinite.
Estimate estimate_from(std::span<const double> values, const double* point = nullptr);

}  // namespace polling
