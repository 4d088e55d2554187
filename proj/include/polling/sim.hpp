#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polling/model.hpp"
#include "polling/rng.hpp"
#include "polling/stats.hpp"

namespace polling::sim {

struct Horizon {
    enum class Kind { Time, Customers };
    Kind kind = Kind::Time;
    double value = 1e5;

    static Horizon time(double t) { return {Kind::Time, t}; }
    /// Served-customer target after warmup; converted to a time horizon
    /// through the total arrival rate.
    static Horizon customers(double n) { return {Kind::Customers, n}; }
};

struct SimConfig {
    Horizon horizon;
    double warmup = 0.1;            // fraction of the horizon discarded, in [0, 0.5]
    std::size_t replications = 1;
    std::uint64_t seed = 1;
    std::size_t batches = 20;       // batch means per replication, >= 2
    std::size_t histogram_cap = 100;  // last bin collects levels >= cap
    std::uint64_t max_events = 10'000'000'000ULL;
    unsigned threads = 1;           // replications run concurrently when > 1
};

/// Throws InputError on out-of-range settings.
void check(const SimConfig& cfg);

/// Time horizon of one replication for a model and config.
double time_horizon(const ValidatedModel& vm, const SimConfig& cfg);

/// Raw per-queue point values of one replication. NaN marks "no observation".
struct QueueMetrics {
    double mean_wait = 0.0;
    double wait_variance = 0.0;
    double mean_queue_length = 0.0;
    double mean_cycle = 0.0;
    double ql_visit_begin = 0.0;
    double ql_visit_end = 0.0;
    std::uint64_t served = 0;
    std::uint64_t arrivals = 0;
};

struct ReplicationSummary {
    std::vector<QueueMetrics> queues;
    double busy = 0.0, switching = 0.0, idle = 0.0;  // fractions of the observed window
    double observed_time = 0.0;
    std::uint64_t events = 0;
    std::uint64_t path_digest = 0;  // hash of the sequence of service starts
    bool truncated = false;
};

struct QueueReport {
    std::optional<Estimate> wait;           // absent when nobody was served
    std::optional<Estimate> wait_variance;
    Estimate queue_length;                  // time-average, customer in service included
    std::optional<Estimate> cycle_time;     // between successive visit beginnings
    std::optional<Estimate> ql_visit_begin;
    std::optional<Estimate> ql_visit_end;
    std::vector<std::uint64_t> histogram;   // queue length seen by arrivals
    std::uint64_t served = 0;
    std::uint64_t arrivals = 0;
};

struct SimReport {
    std::string fingerprint;
    std::vector<QueueReport> queues;
    Estimate busy_fraction, switch_fraction, idle_fraction;
    std::size_t replications = 0;
    std::uint64_t events = 0;
    bool truncated = false;
    std::vector<ReplicationSummary> runs;
};

/// Runs cfg.replications independent replications (streams split from
/// cfg.seed) and pools them. Identical (model, cfg) gives an identical report.
SimReport run(const ValidatedModel& vm, const SimConfig& cfg);

/// One replication driven by `rng`; intervals come from batch means.
SimReport run_replication(const ValidatedModel& vm, const SimConfig& cfg, Rng rng);

/// Pools replications: point estimates are means of replication values and
/// intervals use the between-replication variance. A single report is
/// returned unchanged. Throws InputError on differing model fingerprints.
SimReport replicate_merge(std::span<const SimReport> reports);

struct VisitState {
    std::size_t eligible = 0;        // customers the discipline may serve now
    std::uint64_t served = 0;        // services completed in this visit
    double now = 0.0;
    double timer_expiry = 0.0;       // time-limited only
};

enum class VisitDecision { Serve, Depart };

/// Whether the server serves another customer or ends the visit. `coin`
/// is drawn only for Bernoulli with 0 < p < 1.
VisitDecision discipline_step(const VisitState& state, const Discipline& discipline, Rng& coin);

}  // namespace polling::sim
