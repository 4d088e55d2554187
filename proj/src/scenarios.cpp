#include "polling/scenarios.hpp"

#include <algorithm>
#include <cmath>

#include "polling/errors.hpp"

namespace polling::scenarios {

namespace {

Discipline to_discipline(const LotPolicy& p) {
    return std::visit([](const auto& d) -> Discipline { return d; }, p);
}

Discipline to_discipline(const SignalControl& c) {
    return std::visit([](const auto& d) -> Discipline { return d; }, c);
}

bool is_permutation_of(const std::vector<std::size_t>& seq, std::size_t n) {
    if (seq.size() != n) return false;
    std::vector<char> seen(n, 0);
    for (std::size_t q : seq) {
        if (q >= n || seen[q]) return false;
        seen[q] = 1;
    }
    return true;
}

bool exact_applicable(const PollingModel& m) {
    if (!std::holds_alternative<Cyclic>(m.routing)) return false;
    for (const auto& q : m.queues)
        if (!std::holds_alternative<Exhaustive>(q.discipline) && !std::holds_alternative<Gated>(q.discipline))
            return false;
    const auto lp = load(m);
    return lp.switchover_mean && *lp.switchover_mean > 0.0;
}

}  // namespace

SelspModel build_selsp_model(const SelspSpec& spec) {
    const std::size_t n = spec.products.size();
    if (n == 0) throw InputError("selsp: at least one product is required");
    if (spec.sequence.empty()) throw InputError("selsp: production sequence is empty");
    std::vector<char> covered(n, 0);
    for (std::size_t p : spec.sequence) {
        if (p >= n) throw InputError("selsp: sequence entry " + std::to_string(p + 1) + " is not a product");
        covered[p] = 1;
    }
    for (std::size_t p = 0; p < n; ++p)
        if (!covered[p]) throw InputError("selsp: sequence never produces product " + std::to_string(p + 1));

    SelspModel out;
    out.queue_of_product.resize(n);
    auto queue_for = [](const Product& p) {
        return QueueSpec{p.demand_rate, p.production, to_discipline(p.lot_policy), QueueOrder::Fcfs};
    };
    if (is_permutation_of(spec.sequence, n)) {
        std::vector<RandVar> ring;
        for (std::size_t k = 0; k < n; ++k) {
            const Product& prod = spec.products[spec.sequence[k]];
            out.model.queues.push_back(queue_for(prod));
            out.queue_of_product[spec.sequence[k]] = k;
            ring.push_back(spec.products[spec.sequence[(k + 1) % n]].setup);
        }
        out.model.switchover = SwitchoverMatrix::ring(ring);
        out.model.routing = Cyclic{};
    } else {
        out.model.switchover = SwitchoverMatrix(n);
        for (std::size_t p = 0; p < n; ++p) {
            out.model.queues.push_back(queue_for(spec.products[p]));
            out.queue_of_product[p] = p;
        }
        const auto& seq = spec.sequence;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            const std::size_t to = seq[(k + 1) % seq.size()];
            out.model.switchover.set(seq[k], to, spec.products[to].setup);
        }
        out.model.routing = Table{seq};
    }
    return out;
}

std::optional<double> fill_rate_from_histogram(const std::vector<std::uint64_t>& histogram, std::uint64_t b) {
    if (histogram.empty()) return std::nullopt;
    const std::uint64_t cap = histogram.size() - 1;
    if (b > cap) return std::nullopt;
    std::uint64_t total = 0, below = 0;
    for (std::size_t l = 0; l < histogram.size(); ++l) {
        total += histogram[l];
        if (l < b) below += histogram[l];
    }
    if (total == 0) return b > 0 ? 1.0 : 0.0;
    return static_cast<double>(below) / static_cast<double>(total);
}

SelspReport selsp_evaluate(const SelspSpec& spec, const sim::SimConfig& cfg) {
    const SelspModel sm = build_selsp_model(spec);
    const ValidatedModel vm = validate_or_throw(sm.model);
    if (vm.load().rho >= 1.0)
        throw UnstableError("selsp: production load rho = " + std::to_string(vm.load().rho) + " >= 1", vm.load().rho);

    SelspReport out;
    std::optional<exact::ExactReport> ex;
    if (exact_applicable(vm.model())) {
        ex = exact::mean_waits(vm);
        out.exact_available = true;
    }
    const sim::SimReport sr = sim::run(vm, cfg);

    for (std::size_t p = 0; p < spec.products.size(); ++p) {
        const std::size_t q = sm.queue_of_product[p];
        const std::uint64_t b = spec.products[p].base_stock;
        ProductReport pr;
        pr.simulated_shortfall = sr.queues[q].queue_length;
        pr.shortfall_histogram = sr.queues[q].histogram;
        if (ex) pr.exact_shortfall = ex->mean_queue_length[q];
        pr.mean_shortfall = pr.exact_shortfall.value_or(pr.simulated_shortfall->mean);
        pr.mean_net_stock = static_cast<double>(b) - pr.mean_shortfall;
        const auto fill = fill_rate_from_histogram(pr.shortfall_histogram, b);
        // Beyond the histogram cap every observed level lies below b except the overflow bin.
        pr.fill_rate = fill.value_or(fill_rate_from_histogram(pr.shortfall_histogram, pr.shortfall_histogram.size() - 1).value_or(0.0));
        if (ex && b <= 21) {
            if (b == 0) {
                pr.exact_fill_rate = 0.0;
            } else {
                const auto masses = exact::ql_point_masses(vm, q, b - 1);
                double acc = 0.0;
                for (double m : masses) acc += m;
                pr.exact_fill_rate = std::clamp(acc, 0.0, 1.0);
            }
        }
        out.products.push_back(std::move(pr));
    }
    return out;
}

std::vector<BaseStockChoice> selsp_basestock_search(const SelspSpec& spec, double target_fill,
                                                     const sim::SimConfig& cfg) {
    if (!(target_fill > 0.0 && target_fill < 1.0)) throw InputError("selsp: target fill rate must lie in (0,1)");
    const SelspReport report = selsp_evaluate(spec, cfg);
    std::vector<BaseStockChoice> out;
    for (const auto& pr : report.products) {
        const auto& h = pr.shortfall_histogram;
        const std::uint64_t cap = h.size() - 1;
        BaseStockChoice choice;
        choice.lower_bound = true;
        for (std::uint64_t b = 0; b <= cap; ++b) {
            const double f = *fill_rate_from_histogram(h, b);
            choice.fill_rate = f;
            if (f >= target_fill) {
                choice.base_stock = b;
                choice.lower_bound = false;
                break;
            }
        }
        if (choice.lower_bound) choice.base_stock = cap + 1;
        out.push_back(choice);
    }
    return out;
}

PollingModel build_traffic_model(const TrafficSpec& spec) {
    const std::size_t n = spec.flows.size();
    if (n == 0) throw InputError("traffic: at least one flow is required");
    if (spec.clearance.size() != n) throw InputError("traffic: one clearance time per flow is required");
    for (std::size_t i = 0; i < n; ++i)
        if (!(spec.clearance[i].mean() > 0.0))
            throw InputError("traffic: clearance time after flow " + std::to_string(i + 1) + " must have positive mean");
    PollingModel m;
    for (const auto& f : spec.flows) m.queues.push_back({f.arrival_rate, f.headway, to_discipline(f.control), QueueOrder::Fcfs});
    m.switchover = SwitchoverMatrix::ring(spec.clearance);
    m.routing = Cyclic{};
    return m;
}

TrafficReport traffic_evaluate(const TrafficSpec& spec, const sim::SimConfig& cfg, Engine engine) {
    const ValidatedModel vm = validate_or_throw(build_traffic_model(spec));
    const bool exact_ok = exact_applicable(vm.model());
    if (engine == Engine::Auto) engine = exact_ok ? Engine::Exact : Engine::Simulation;
    TrafficReport out;
    out.engine = engine;
    if (engine == Engine::Exact) {
        const auto r = exact::mean_waits(vm);
        const auto t = exact::epoch_moments(vm);
        for (std::size_t i = 0; i < vm.size(); ++i)
            out.flows.push_back({r.mean_wait[i].value_or(0.0), std::nullopt, t.end_first[i][i], std::nullopt});
        return out;
    }
    const auto r = sim::run(vm, cfg);
    for (const auto& q : r.queues) {
        FlowReport f;
        if (q.wait) {
            f.mean_delay = q.wait->mean;
            f.delay_half_width = q.wait->half_width;
        }
        if (q.ql_visit_end) {
            f.mean_overflow = q.ql_visit_end->mean;
            f.overflow_half_width = q.ql_visit_end->half_width;
        }
        out.flows.push_back(f);
    }
    return out;
}

}  // namespace polling::scenarios
