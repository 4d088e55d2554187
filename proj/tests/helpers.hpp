#pragma once

#include <cmath>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "polling/model.hpp"

namespace testing {

using namespace polling;

inline PollingModel cyclic(const std::vector<double>& lambda, const std::vector<RandVar>& service,
                           const std::vector<Discipline>& disc, const std::vector<RandVar>& legs) {
    PollingModel m;
    for (std::size_t i = 0; i < lambda.size(); ++i) m.queues.push_back({lambda[i], service[i], disc[i], QueueOrder::Fcfs});
    m.switchover = SwitchoverMatrix::ring(legs);
    return m;
}

inline PollingModel uniform_cyclic(std::size_t n, double lambda, const RandVar& service, const Discipline& d,
                                   const RandVar& leg) {
    return cyclic(std::vector<double>(n, lambda), std::vector<RandVar>(n, service), std::vector<Discipline>(n, d),
                  std::vector<RandVar>(n, leg));
}

inline ValidatedModel ok(const PollingModel& m) { return validate_or_throw(m); }

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Random distribution with the given mean, drawn over all five families.
inline RandVar random_rv(std::mt19937_64& g, double mean) {
    std::uniform_int_distribution<int> fam(0, 4);
    switch (fam(g)) {
        case 0: return RandVar::deterministic(mean);
        case 1: return RandVar::exponential(1.0 / mean);
        case 2: {
            const unsigned k = std::uniform_int_distribution<unsigned>(2, 5)(g);
            return RandVar::erlang(k, k / mean);
        }
        case 3: return RandVar::from_mean_scv(mean, std::uniform_real_distribution<double>(1.2, 4.0)(g));
        default: {
            const double h = std::uniform_real_distribution<double>(0.0, 1.0)(g) * mean;
            return RandVar::uniform(mean - h, mean + h);
        }
    }
}

// Random stable cyclic model: N in [1, nmax], total load up to rho_max,
// disciplines drawn from `kinds`.
inline PollingModel random_cyclic(std::mt19937_64& g, std::size_t nmax, double rho_max,
                                  const std::vector<Discipline>& kinds) {
    std::uniform_int_distribution<std::size_t> nd(1, nmax);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = nd(g);
    const double rho = 0.05 + (rho_max - 0.05) * u(g);
    std::vector<double> share(n), lambda(n);
    double tot = 0.0;
    for (auto& s : share) tot += (s = 0.1 + u(g));
    std::vector<RandVar> service, legs;
    std::vector<Discipline> disc;
    for (std::size_t i = 0; i < n; ++i) {
        const double b = 0.2 + 2.0 * u(g);
        service.push_back(random_rv(g, b));
        lambda[i] = rho * share[i] / tot / b;
        legs.push_back(random_rv(g, 0.05 + u(g)));
        disc.push_back(kinds[std::uniform_int_distribution<std::size_t>(0, kinds.size() - 1)(g)]);
    }
    return cyclic(lambda, service, disc, legs);
}

}  // namespace testing
