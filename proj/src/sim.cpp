#include "polling/sim.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

#include "polling/errors.hpp"

namespace polling::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return h ^ (h >> 31);
}

// Per-batch accumulators for one queue.
struct QueueBatch {
    std::uint64_t wait_n = 0;
    double wait_sum = 0.0, wait_sq = 0.0;
    double area = 0.0;
    std::uint64_t cycle_n = 0;
    double cycle_sum = 0.0;
    std::uint64_t begin_n = 0, end_n = 0;
    double begin_sum = 0.0, end_sum = 0.0;
};

struct ServerBatch {
    double busy = 0.0, switching = 0.0, idle = 0.0;
};

enum class Phase { Serving, Switching, Idle };

bool gate_kind(const Discipline& d) {
    return std::holds_alternative<Gated>(d) || std::holds_alternative<GloballyGated>(d);
}

class Simulation {
public:
    Simulation(const ValidatedModel& vm, const SimConfig& cfg, Rng rng)
        : m_(vm.model()), cfg_(cfg), n_(vm.size()), horizon_(time_horizon(vm, cfg)), warm_(cfg.warmup * horizon_),
          batch_len_((horizon_ - warm_) / static_cast<double>(cfg.batches)), switch_rng_(0), routing_rng_(0),
          queues_(n_), batches_(cfg.batches, std::vector<QueueBatch>(n_)), server_batches_(cfg.batches),
          histograms_(n_, std::vector<std::uint64_t>(cfg.histogram_cap + 1, 0)), served_(n_, 0), arrivals_(n_, 0),
          last_begin_(n_, -1.0) {
        for (std::size_t i = 0; i < n_; ++i) arrival_rng_.push_back(rng.split());
        for (std::size_t i = 0; i < n_; ++i) service_rng_.push_back(rng.split());
        for (std::size_t i = 0; i < n_; ++i) coin_rng_.push_back(rng.split());
        for (std::size_t i = 0; i < n_; ++i) timer_rng_.push_back(rng.split());
        switch_rng_ = rng.split();
        routing_rng_ = rng.split();

        for (std::size_t i = 0; i < n_; ++i) {
            if (const auto* g = std::get_if<GloballyGated>(&m_.queues[i].discipline)) parent_ = g->parent;
            any_gg_ = any_gg_ || std::holds_alternative<GloballyGated>(m_.queues[i].discipline);
        }
        const auto seq = visit_sequence(m_);
        period_ = seq.empty() ? 64 * n_ : seq.size();
        for (std::size_t i = 0; i < n_; ++i) queues_[i].next_arrival = draw_interarrival(i);
    }

    ReplicationSummary run() {
        begin_visit(start_queue());
        bool truncated = false;
        while (true) {
            double t = server_event_;
            std::size_t arrival = n_;
            for (std::size_t i = 0; i < n_; ++i) {
                if (queues_[i].next_arrival < t) {
                    t = queues_[i].next_arrival;
                    arrival = i;
                }
            }
            if (!(t <= horizon_)) break;
            if (events_ >= cfg_.max_events) {
                truncated = true;
                break;
            }
            ++events_;
            now_ = t;
            if (arrival < n_) {
                on_arrival(arrival);
            } else if (phase_ == Phase::Serving) {
                on_service_done();
            } else {
                begin_visit(pending_);
            }
        }
        end_ = truncated ? now_ : horizon_;
        account_server(end_);
        for (std::size_t i = 0; i < n_; ++i) account_queue(i, end_);
        return summarize(truncated);
    }

    SimReport report(const ReplicationSummary& s) const;

private:
    struct QueueState {
        std::deque<double> open;   // arrival times not behind a gate
        std::deque<double> gated;  // arrival times captured by a gate
        bool in_service = false;
        double next_arrival = kInf;
        double last_change = 0.0;
        std::size_t population() const { return open.size() + gated.size() + (in_service ? 1 : 0); }
    };

    double draw_interarrival(std::size_t i) {
        const double lambda = m_.queues[i].lambda;
        if (lambda <= 0.0) return kInf;
        return now_ - std::log1p(-arrival_rng_[i].uniform()) / lambda;
    }

    std::size_t start_queue() const {
        if (const auto* t = std::get_if<Table>(&m_.routing)) return t->sequence.front();
        return 0;
    }

    std::size_t next_queue(std::size_t q) {
        const std::size_t n = n_;
        return std::visit(
            [&](const auto& r) -> std::size_t {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, Cyclic>) {
                    return (q + 1) % n;
                } else if constexpr (std::is_same_v<R, Table>) {
                    route_pos_ = (route_pos_ + 1) % r.sequence.size();
                    return r.sequence[route_pos_];
                } else if constexpr (std::is_same_v<R, Elevator>) {
                    route_pos_ = (route_pos_ + 1) % (2 * n);
                    return route_pos_ < n ? route_pos_ : 2 * n - 1 - route_pos_;
                } else {
                    const double u = routing_rng_.uniform();
                    double acc = 0.0;
                    const auto& row = r.transition[q];
                    std::size_t last = q;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (row[j] <= 0.0) continue;
                        acc += row[j];
                        last = j;
                        if (u < acc) return j;
                    }
                    return last;
                }
            },
            m_.routing);
    }

    bool is_gate_epoch(std::size_t q) const {
        if (!any_gg_) return false;
        if (std::holds_alternative<Elevator>(m_.routing)) return route_pos_ == 0 || route_pos_ == n_;
        return q == parent_;
    }

    int batch_of(double t) const {
        if (t < warm_ || t > horizon_) return -1;
        const auto b = static_cast<std::size_t>((t - warm_) / batch_len_);
        return static_cast<int>(std::min(b, cfg_.batches - 1));
    }

    // Distributes `weight * dt` over the batches that [t0, t1] overlaps.
    template <class F>
    void spread(double t0, double t1, F&& add) {
        t0 = std::max(t0, warm_);
        t1 = std::min(t1, horizon_);
        if (!(t1 > t0)) return;
        auto b = static_cast<std::size_t>((t0 - warm_) / batch_len_);
        while (t0 < t1) {
            b = std::min(b, cfg_.batches - 1);
            const double edge = b + 1 == cfg_.batches ? t1 : std::min(t1, warm_ + (b + 1) * batch_len_);
            add(b, edge - t0);
            t0 = edge;
            ++b;
        }
    }

    void account_queue(std::size_t i, double t) {
        auto& q = queues_[i];
        const double level = static_cast<double>(q.population());
        if (level > 0.0) spread(q.last_change, t, [&](std::size_t b, double dt) { batches_[b][i].area += level * dt; });
        q.last_change = t;
    }

    void account_server(double t) {
        const Phase ph = phase_;
        spread(phase_since_, t, [&](std::size_t b, double dt) {
            auto& s = server_batches_[b];
            (ph == Phase::Serving ? s.busy : ph == Phase::Switching ? s.switching : s.idle) += dt;
        });
        phase_since_ = t;
    }

    void set_phase(Phase p) {
        account_server(now_);
        phase_ = p;
    }

    void on_arrival(std::size_t i) {
        auto& q = queues_[i];
        if (now_ >= warm_) {
            const std::size_t level = std::min(q.population(), cfg_.histogram_cap);
            ++histograms_[i][level];
            ++arrivals_[i];
        }
        account_queue(i, now_);
        q.open.push_back(now_);
        q.next_arrival = draw_interarrival(i);
        if (phase_ == Phase::Idle) {
            zero_steps_ = 0;
            begin_visit(pending_);
        }
    }

    void begin_visit(std::size_t q) {
        current_ = q;
        auto& st = queues_[q];
        const int b = batch_of(now_);
        if (b >= 0) {
            auto& acc = batches_[static_cast<std::size_t>(b)][q];
            if (last_begin_[q] >= 0.0) {
                ++acc.cycle_n;
                acc.cycle_sum += now_ - last_begin_[q];
            }
            ++acc.begin_n;
            acc.begin_sum += static_cast<double>(st.population());
        }
        last_begin_[q] = now_;
        if (is_gate_epoch(q)) {
            for (std::size_t j = 0; j < n_; ++j) {
                if (!std::holds_alternative<GloballyGated>(m_.queues[j].discipline)) continue;
                auto& other = queues_[j];
                other.gated.insert(other.gated.end(), other.open.begin(), other.open.end());
                other.open.clear();
            }
        }
        const auto& discipline = m_.queues[q].discipline;
        if (std::holds_alternative<Gated>(discipline)) {
            st.gated.insert(st.gated.end(), st.open.begin(), st.open.end());
            st.open.clear();
        }
        visit_served_ = 0;
        if (const auto* tl = std::get_if<TimeLimited>(&discipline)) timer_expiry_ = now_ + tl->limit.sample(timer_rng_[q]);
        continue_visit();
    }

    void continue_visit() {
        const std::size_t q = current_;
        auto& st = queues_[q];
        const auto& spec = m_.queues[q];
        const bool gated = gate_kind(spec.discipline);
        auto& pool = gated ? st.gated : st.open;
        const VisitState vs{pool.size(), visit_served_, now_, timer_expiry_};
        if (discipline_step(vs, spec.discipline, coin_rng_[q]) == VisitDecision::Depart) {
            end_visit();
            return;
        }
        double arrived;
        if (spec.order == QueueOrder::Fcfs) {
            arrived = pool.front();
            pool.pop_front();
        } else {
            arrived = pool.back();
            pool.pop_back();
        }
        st.in_service = true;
        const double wait = now_ - arrived;
        const int b = batch_of(now_);
        if (b >= 0) {
            auto& acc = batches_[static_cast<std::size_t>(b)][q];
            ++acc.wait_n;
            acc.wait_sum += wait;
            acc.wait_sq += wait * wait;
            ++served_[q];
        }
        digest_ = mix(digest_, std::bit_cast<std::uint64_t>(now_) ^ (static_cast<std::uint64_t>(q) << 56));
        set_phase(Phase::Serving);
        server_event_ = now_ + spec.service.sample(service_rng_[q]);
    }

    void on_service_done() {
        const std::size_t q = current_;
        account_queue(q, now_);
        queues_[q].in_service = false;
        ++visit_served_;
        continue_visit();
    }

    void end_visit() {
        const std::size_t q = current_;
        const int b = batch_of(now_);
        if (b >= 0) {
            auto& acc = batches_[static_cast<std::size_t>(b)][q];
            ++acc.end_n;
            acc.end_sum += static_cast<double>(queues_[q].population());
        }
        const std::size_t next = next_queue(q);
        const double d = m_.switchover.at(q, next)->sample(switch_rng_);
        pending_ = next;
        zero_steps_ = (d == 0.0 && visit_served_ == 0) ? zero_steps_ + 1 : 0;
        if (zero_steps_ > period_ && system_empty()) {
            // Only zero-time legs and nothing to serve: wait for the next arrival.
            set_phase(Phase::Idle);
            server_event_ = kInf;
            return;
        }
        set_phase(Phase::Switching);
        server_event_ = now_ + d;
    }

    bool system_empty() const {
        for (const auto& q : queues_)
            if (q.population() != 0) return false;
        return true;
    }

    ReplicationSummary summarize(bool truncated) const {
        ReplicationSummary s;
        s.truncated = truncated;
        s.events = events_;
        s.path_digest = digest_;
        s.observed_time = std::max(0.0, end_ - warm_);
        const double window = s.observed_time;
        for (std::size_t i = 0; i < n_; ++i) {
            QueueBatch tot;
            for (const auto& bb : batches_) {
                const auto& a = bb[i];
                tot.wait_n += a.wait_n;
                tot.wait_sum += a.wait_sum;
                tot.wait_sq += a.wait_sq;
                tot.area += a.area;
                tot.cycle_n += a.cycle_n;
                tot.cycle_sum += a.cycle_sum;
                tot.begin_n += a.begin_n;
                tot.begin_sum += a.begin_sum;
                tot.end_n += a.end_n;
                tot.end_sum += a.end_sum;
            }
            QueueMetrics qm;
            const auto ratio = [](double sum, std::uint64_t n) { return n ? sum / static_cast<double>(n) : kNaN; };
            qm.mean_wait = ratio(tot.wait_sum, tot.wait_n);
            qm.wait_variance = tot.wait_n ? tot.wait_sq / static_cast<double>(tot.wait_n) - qm.mean_wait * qm.mean_wait : kNaN;
            qm.mean_queue_length = window > 0.0 ? tot.area / window : kNaN;
            qm.mean_cycle = ratio(tot.cycle_sum, tot.cycle_n);
            qm.ql_visit_begin = ratio(tot.begin_sum, tot.begin_n);
            qm.ql_visit_end = ratio(tot.end_sum, tot.end_n);
            qm.served = served_[i];
            qm.arrivals = arrivals_[i];
            s.queues.push_back(qm);
        }
        ServerBatch tot;
        for (const auto& sb : server_batches_) {
            tot.busy += sb.busy;
            tot.switching += sb.switching;
            tot.idle += sb.idle;
        }
        const double total = tot.busy + tot.switching + tot.idle;
        if (total > 0.0) {
            s.busy = tot.busy / total;
            s.switching = tot.switching / total;
            s.idle = tot.idle / total;
        }
        return s;
    }

public:
    // Batch-level values, used for the single-replication intervals.
    double batch_covered(std::size_t b) const {
        const double lo = warm_ + static_cast<double>(b) * batch_len_;
        const double hi = b + 1 == cfg_.batches ? horizon_ : lo + batch_len_;
        return std::max(0.0, std::min(hi, end_) - lo);
    }
    const std::vector<std::vector<QueueBatch>>& batches() const { return batches_; }
    const std::vector<ServerBatch>& server_batches() const { return server_batches_; }
    const std::vector<std::vector<std::uint64_t>>& histograms() const { return histograms_; }

private:
    const PollingModel& m_;
    const SimConfig& cfg_;
    std::size_t n_;
    double horizon_, warm_, batch_len_;
    std::vector<Rng> arrival_rng_, service_rng_, coin_rng_, timer_rng_;
    Rng switch_rng_, routing_rng_;

    std::vector<QueueState> queues_;
    std::vector<std::vector<QueueBatch>> batches_;
    std::vector<ServerBatch> server_batches_;
    std::vector<std::vector<std::uint64_t>> histograms_;
    std::vector<std::uint64_t> served_, arrivals_;
    std::vector<double> last_begin_;

    double now_ = 0.0, end_ = 0.0;
    double server_event_ = kInf;
    Phase phase_ = Phase::Switching;
    double phase_since_ = 0.0;
    std::size_t current_ = 0, pending_ = 0, route_pos_ = 0;
    std::uint64_t visit_served_ = 0;
    double timer_expiry_ = 0.0;
    std::size_t zero_steps_ = 0, period_ = 1;
    std::size_t parent_ = 0;
    bool any_gg_ = false;
    std::uint64_t events_ = 0;
    std::uint64_t digest_ = 0;
};

std::optional<Estimate> batch_estimate(double point, const std::vector<double>& values) {
    if (std::isnan(point)) return std::nullopt;
    return estimate_from(values, &point);
}

SimReport build_single(const ValidatedModel& vm, const Simulation& sim, const ReplicationSummary& s) {
    SimReport r;
    r.fingerprint = fingerprint(vm.model());
    r.replications = 1;
    r.events = s.events;
    r.truncated = s.truncated;
    const auto& batches = sim.batches();
    const std::size_t nb = batches.size();
    for (std::size_t i = 0; i < vm.size(); ++i) {
        std::vector<double> wait, wvar, ql, cyc, vb, vc;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& a = batches[b][i];
            const double covered = sim.batch_covered(b);
            if (a.wait_n) {
                const double m = a.wait_sum / static_cast<double>(a.wait_n);
                wait.push_back(m);
                if (a.wait_n > 1) wvar.push_back(a.wait_sq / static_cast<double>(a.wait_n) - m * m);
            }
            if (covered > 0.0) ql.push_back(a.area / covered);
            if (a.cycle_n) cyc.push_back(a.cycle_sum / static_cast<double>(a.cycle_n));
            if (a.begin_n) vb.push_back(a.begin_sum / static_cast<double>(a.begin_n));
            if (a.end_n) vc.push_back(a.end_sum / static_cast<double>(a.end_n));
        }
        const QueueMetrics& qm = s.queues[i];
        QueueReport qr;
        qr.wait = batch_estimate(qm.mean_wait, wait);
        qr.wait_variance = batch_estimate(qm.wait_variance, wvar);
        qr.queue_length = estimate_from(ql, &qm.mean_queue_length);
        qr.cycle_time = batch_estimate(qm.mean_cycle, cyc);
        qr.ql_visit_begin = batch_estimate(qm.ql_visit_begin, vb);
        qr.ql_visit_end = batch_estimate(qm.ql_visit_end, vc);
        qr.histogram = sim.histograms()[i];
        qr.served = qm.served;
        qr.arrivals = qm.arrivals;
        r.queues.push_back(std::move(qr));
    }
    std::vector<double> busy, sw, idle;
    for (std::size_t b = 0; b < nb; ++b) {
        const double covered = sim.batch_covered(b);
        if (covered <= 0.0) continue;
        const auto& sb = sim.server_batches()[b];
        busy.push_back(sb.busy / covered);
        sw.push_back(sb.switching / covered);
        idle.push_back(sb.idle / covered);
    }
    r.busy_fraction = estimate_from(busy, &s.busy);
    r.switch_fraction = estimate_from(sw, &s.switching);
    r.idle_fraction = estimate_from(idle, &s.idle);
    r.runs.push_back(s);
    return r;
}

}  // namespace

void check(const SimConfig& cfg) {
    if (!(cfg.horizon.value > 0.0) || !std::isfinite(cfg.horizon.value)) throw InputError("horizon must be positive");
    if (!(cfg.warmup >= 0.0 && cfg.warmup <= 0.5)) throw InputError("warmup must lie in [0, 0.5]");
    if (cfg.replications < 1) throw InputError("replications must be at least 1");
    if (cfg.batches < 2) throw InputError("batches must be at least 2");
}

double time_horizon(const ValidatedModel& vm, const SimConfig& cfg) {
    if (cfg.horizon.kind == Horizon::Kind::Time) return cfg.horizon.value;
    double total = 0.0;
    for (const auto& q : vm.model().queues) total += q.lambda;
    if (total <= 0.0) throw InputError("a served-customer horizon needs a positive total arrival rate");
    return cfg.horizon.value / (total * (1.0 - cfg.warmup));
}

VisitDecision discipline_step(const VisitState& s, const Discipline& d, Rng& coin) {
    if (s.eligible == 0) return VisitDecision::Depart;
    const bool serve = std::visit(
        [&](const auto& disc) -> bool {
            using D = std::decay_t<decltype(disc)>;
            if constexpr (std::is_same_v<D, KLimited>) {
                return s.served < disc.k;
            } else if constexpr (std::is_same_v<D, Bernoulli>) {
                if (s.served == 0 || disc.p >= 1.0) return true;
                if (disc.p <= 0.0) return false;
                return coin.uniform() < disc.p;
            } else if constexpr (std::is_same_v<D, TimeLimited>) {
                // Non-preemptive: the visit ends at the first completion after expiry.
                return s.now <= s.timer_expiry;
            } else {
                return true;  // exhaustive, gated, globally gated: eligibility decides
            }
        },
        d);
    return serve ? VisitDecision::Serve : VisitDecision::Depart;
}

SimReport run_replication(const ValidatedModel& vm, const SimConfig& cfg, Rng rng) {
    check(cfg);
    Simulation sim(vm, cfg, rng);
    const ReplicationSummary s = sim.run();
    return build_single(vm, sim, s);
}

SimReport run(const ValidatedModel& vm, const SimConfig& cfg) {
    check(cfg);
    Rng master(cfg.seed);
    std::vector<Rng> streams;
    for (std::size_t r = 0; r < cfg.replications; ++r) streams.push_back(master.split());
    std::vector<SimReport> reports(cfg.replications);
    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.replications)));
    if (workers == 1) {
        for (std::size_t r = 0; r < cfg.replications; ++r) reports[r] = run_replication(vm, cfg, streams[r]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < cfg.replications; r = next++)
                    reports[r] = run_replication(vm, cfg, streams[r]);
            });
        }
        for (auto& t : pool) t.join();
    }
    return replicate_merge(reports);
}

SimReport replicate_merge(std::span<const SimReport> reports) {
    if (reports.empty()) throw InputError("replicate_merge: no reports");
    for (const auto& r : reports)
        if (r.fingerprint != reports.front().fingerprint || r.queues.size() != reports.front().queues.size())
            throw InputError("replicate_merge: reports come from different models");
    if (reports.size() == 1) return reports.front();

    SimReport out;
    out.fingerprint = reports.front().fingerprint;
    for (const auto& r : reports) {
        out.runs.insert(out.runs.end(), r.runs.begin(), r.runs.end());
        out.events += r.events;
        out.truncated = out.truncated || r.truncated;
    }
    out.replications = out.runs.size();
    const std::size_t n = reports.front().queues.size();

    auto pooled = [&](auto field) -> std::optional<Estimate> {
        std::vector<double> v;
        for (const auto& run : out.runs) {
            const double x = field(run);
            if (!std::isnan(x)) v.push_back(x);
        }
        if (v.empty()) return std::nullopt;
        return estimate_from(v);
    };
    for (std::size_t i = 0; i < n; ++i) {
        QueueReport q;
        q.wait = pooled([&](const ReplicationSummary& s) { return s.queues[i].mean_wait; });
        q.wait_variance = pooled([&](const ReplicationSummary& s) { return s.queues[i].wait_variance; });
        q.queue_length = pooled([&](const ReplicationSummary& s) { return s.queues[i].mean_queue_length; }).value_or(Estimate{});
        q.cycle_time = pooled([&](const ReplicationSummary& s) { return s.queues[i].mean_cycle; });
        q.ql_visit_begin = pooled([&](const ReplicationSummary& s) { return s.queues[i].ql_visit_begin; });
        q.ql_visit_end = pooled([&](const ReplicationSummary& s) { return s.queues[i].ql_visit_end; });
        q.histogram.assign(reports.front().queues[i].histogram.size(), 0);
        for (const auto& r : reports) {
            const auto& h = r.queues[i].histogram;
            if (h.size() != q.histogram.size()) throw InputError("replicate_merge: histogram caps differ");
            for (std::size_t k = 0; k < h.size(); ++k) q.histogram[k] += h[k];
            q.served += r.queues[i].served;
            q.arrivals += r.queues[i].arrivals;
        }
        out.queues.push_back(std::move(q));
    }
    out.busy_fraction = pooled([](const ReplicationSummary& s) { return s.busy; }).value_or(Estimate{});
    out.switch_fraction = pooled([](const ReplicationSummary& s) { return s.switching; }).value_or(Estimate{});
    out.idle_fraction = pooled([](const ReplicationSummary& s) { return s.idle; }).value_or(Estimate{});
    return out;
}

}  // namespace polling::sim
