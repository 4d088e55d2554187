#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polling/model.hpp"

namespace polling::exact {

// Exact steady-state analysis of the cyclic polling model with Poisson
// arrivals and branching-type disciplines (exhaustive, gated, globally gated).
//
// Every entry point checks its own preconditions and throws
// UnstableError (rho >= 1), UnsupportedError (non-cyclic routing,
// non-branching discipline, zero switch-over) or NumericalError.

struct BasicQuantities {
    double cycle = 0.0;               // E[C]
    std::vector<double> visit;        // E[V_i]
    std::vector<double> intervisit;   // E[I_i]
};

/// Joint queue-length moments at polling epochs.
///
/// begin_first[i][j]       = E[L_j at the visit beginning of Q_i]
/// begin_second[i](j, k)   = E[L_j (L_k - [j == k])] at that epoch
/// end_first / end_second  : same at the visit completion of Q_i.
struct MomentTable {
    std::size_t n = 0;
    std::vector<std::vector<double>> begin_first, end_first;
    std::vector<std::vector<double>> begin_second, end_second;  // row-major n x n
    double condition_estimate = 1.0;                           // of the worst linear system solved

    double begin2(std::size_t i, std::size_t j, std::size_t k) const { return begin_second[i][j * n + k]; }
    double end2(std::size_t i, std::size_t j, std::size_t k) const { return end_second[i][j * n + k]; }
};

enum class PclStatus { Checked, NotApplicable };

struct PclResult {
    PclStatus status = PclStatus::NotApplicable;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double residual_rel = 0.0;
    std::string reason;  // why the check was not applicable

    bool passed(double tol = 1e-8) const { return status == PclStatus::Checked && residual_rel <= tol; }
};

struct ExactReport {
    BasicQuantities basics;
    std::vector<double> rho_i;
    double rho = 0.0;
    // Mean waiting time (excluding service); absent for queues with lambda = 0.
    std::vector<std::optional<double>> mean_wait;
    std::vector<double> mean_queue_length;
    // Second moment of the cycle that matches each queue's discipline:
    // E[C_i^2] (gated), E[C*_i^2] (exhaustive, back-filled from E[W_i]),
    // E[C_p^2] of the parent cycle (globally gated). Absent when lambda_i = 0
    // for gated/exhaustive.
    std::vector<std::optional<double>> cycle_second_moment;
    std::optional<double> parent_cycle_second_moment;
    PclResult pcl;
    double condition_estimate = 1.0;
    std::vector<std::string> warnings;
};

BasicQuantities basic_quantities(const ValidatedModel& vm);

/// LST of the busy period of queue i in isolation: root in (0,1] of
/// pi(w) = B~(w + lambda (1 - pi(w))).
double busy_period_lst(const ValidatedModel& vm, std::size_t i, double omega);
std::complex<double> busy_period_lst(const ValidatedModel& vm, std::size_t i, std::complex<double> omega);

/// Offspring PGF h_i(z) of queue i (exhaustive or gated only).
double branching_pgf(const ValidatedModel& vm, std::size_t i, std::span<const double> z);

MomentTable epoch_moments(const ValidatedModel& vm);

/// Marginal queue-length PGF of queue i from the decomposition into the
/// isolated M/G/1 queue and the queue length during the intervisit period.
double marginal_ql_pgf(const ValidatedModel& vm, std::size_t i, double z);
std::complex<double> marginal_ql_pgf(const ValidatedModel& vm, std::size_t i, std::complex<double> z);

/// P(L_i = k) for k = 0..kmax (kmax <= 20) by Cauchy contour integration of
/// the marginal PGF.
std::vector<double> ql_point_masses(const ValidatedModel& vm, std::size_t i, std::size_t kmax);

ExactReport mean_waits(const ValidatedModel& vm);

/// Waiting-time LST of queue i (FCFS only), via distributional Little.
/// Requires 0 <= omega <= lambda_i.
double waiting_lst(const ValidatedModel& vm, std::size_t i, double omega);

/// Pseudo-conservation law check of a vector of mean waits.
PclResult pcl_check(const ValidatedModel& vm, std::span<const std::optional<double>> mean_wait);

// Closed-form cycle routes, used as independent cross-checks of mean_waits.

/// Gated queue: (1 + rho_i) E[C_i^2] / (2 E[C]) with E[C_i^2] = E[L_i(L_i-1)]/lambda_i^2
/// at the visit beginning.
double gated_wait_from_cycle(const ValidatedModel& vm, const MomentTable& table, std::size_t i);

/// Second moment of the parent cycle under globally gated service, from the
/// one-cycle recursion (linear in E[C^2] because arrivals are Poisson).
double globally_gated_cycle_second_moment(const ValidatedModel& vm);

/// Globally gated mean waits from the parent-cycle formula.
std::vector<double> globally_gated_waits(const ValidatedModel& vm);

}  // namespace polling::exact
