// Acceptance suite. One PASS/FAIL line per criterion; exit status 0 iff all pass.
// Usage: acceptance <path to the polling binary>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "helpers.hpp"
#include "polling/exact.hpp"
#include "polling/scenarios.hpp"
#include "polling/sim.hpp"

using namespace polling;
using testing::cyclic;
using testing::ok;
using testing::rel;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Instance {
    std::string name;
    PollingModel model;
};

sim::SimConfig sim_config(double customers, std::size_t reps, std::uint64_t seed) {
    sim::SimConfig c;
    c.horizon = sim::Horizon::customers(customers);
    c.replications = reps;
    c.seed = seed;
    return c;
}

bool agree(const Estimate& a, const Estimate& b) {
    return std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.half_width, b.half_width);
}

// The fixed exact-vs-simulation test set.
std::vector<Instance> test_set() {
    const RandVar exp1 = RandVar::exponential(1.0);
    return {
        {"exhaustive",
         cyclic({0.2, 0.1, 0.15}, {exp1, RandVar::erlang(2, 1.0), RandVar::deterministic(1.0)},
                {Exhaustive{}, Exhaustive{}, Exhaustive{}},
                {RandVar::deterministic(0.5), RandVar::exponential(2.0), RandVar::uniform(0.2, 0.8)})},
        {"gated",
         cyclic({0.1, 0.2, 0.1}, {RandVar::uniform(0.5, 1.5), exp1, RandVar::erlang(3, 2.0)}, {Gated{}, Gated{}, Gated{}},
                {RandVar::exponential(1.0), RandVar::deterministic(0.5), RandVar::erlang(2, 4.0)})},
        {"globally gated",
         cyclic({0.15, 0.1, 0.2}, {exp1, RandVar::deterministic(1.5), RandVar::erlang(2, 3.0)},
                {GloballyGated{0}, GloballyGated{0}, GloballyGated{0}},
                {RandVar::deterministic(1.0), RandVar::exponential(1.0), RandVar::deterministic(0.5)})},
        {"mixed",
         cyclic({0.1, 0.1, 0.05, 0.2}, {exp1, RandVar::from_mean_scv(1.0, 2.5), RandVar::deterministic(2.0), RandVar::erlang(2, 2.0)},
                {Exhaustive{}, Gated{}, Exhaustive{}, Gated{}},
                {RandVar::deterministic(0.3), RandVar::exponential(3.0), RandVar::uniform(0.1, 0.5), RandVar::deterministic(0.4)})},
        {"asymmetric",
         cyclic({0.6, 0.04}, {RandVar::from_mean_scv(1.0, 3.0), RandVar::exponential(0.5)}, {Exhaustive{}, Gated{}},
                {RandVar::deterministic(0.2), RandVar::exponential(0.5)})},
    };
}

Outcome cycle_identities() {
    std::mt19937_64 g(101);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const auto vm = ok(testing::random_cyclic(g, 8, 0.95, {Exhaustive{}, Gated{}}));
        const auto q = exact::basic_quantities(vm);
        double es = 0.0, rho = 0.0;
        for (std::size_t i = 0; i < vm.size(); ++i) {
            es += vm.model().switchover.at(i, (i + 1) % vm.size())->mean();
            rho += vm.queue(i).lambda * vm.queue(i).service.mean();
        }
        const double ec = es / (1.0 - rho);
        worst = std::max(worst, rel(q.cycle, ec));
        for (std::size_t i = 0; i < vm.size(); ++i) {
            const double ri = vm.queue(i).lambda * vm.queue(i).service.mean();
            worst = std::max({worst, rel(q.visit[i], ri * ec), rel(q.intervisit[i], (1.0 - ri) * ec)});
        }
    }
    return {worst <= 1e-12, fmt::format("200 models, max relative error {:.2e}", worst)};
}

Outcome pcl_suite() {
    std::mt19937_64 g(102);
    double worst = 0.0;
    int checked = 0;
    while (checked < 100) {
        const auto vm = ok(testing::random_cyclic(g, 8, 0.95, {Exhaustive{}, Gated{}}));
        const auto r = exact::mean_waits(vm);
        if (r.pcl.status != exact::PclStatus::Checked) return {false, "conservation check not applicable: " + r.pcl.reason};
        worst = std::max(worst, r.pcl.residual_rel);
        ++checked;
    }
    return {worst <= 1e-8, fmt::format("{} models, max relative residual {:.2e}", checked, worst)};
}

Outcome vacation_oracle() {
    const std::vector<RandVar> services{RandVar::deterministic(0.8), RandVar::exponential(1.25), RandVar::from_mean_scv(0.8, 3.0)};
    const std::vector<RandVar> legs{RandVar::deterministic(0.5), RandVar::erlang(3, 2.0), RandVar::uniform(0.2, 1.8)};
    double worst = 0.0;
    for (const auto& b : services)
        for (const auto& s : legs)
            for (double rho : {0.1, 0.5, 0.9}) {
                const double lambda = rho / b.mean();
                const double w = lambda * b.moment2() / (2.0 * (1.0 - rho)) + s.moment2() / (2.0 * s.mean());
                const auto got = exact::mean_waits(ok(cyclic({lambda}, {b}, {Exhaustive{}}, {s}))).mean_wait[0];
                worst = std::max(worst, rel(got.value_or(NAN), w));
            }
    return {worst <= 1e-10, fmt::format("27 grid points, max relative error {:.2e}", worst)};
}

Outcome exact_vs_sim() {
    Outcome o;
    std::uint64_t seed = 401;
    std::vector<std::string> parts;
    for (const auto& inst : test_set()) {
        const auto vm = ok(inst.model);
        const auto ex = exact::mean_waits(vm);
        const auto r = sim::run(vm, sim_config(1e6, 4, seed++));
        std::uint64_t served = 0;
        double worst = 0.0;
        for (std::size_t i = 0; i < vm.size(); ++i) {
            served += r.queues[i].served;
            const auto& w = *r.queues[i].wait;
            const double widths = std::abs(w.mean - *ex.mean_wait[i]) / w.half_width;
            worst = std::max(worst, widths);
        }
        if (worst > 3.0 || served < 1000000) o.pass = false;
        parts.push_back(fmt::format("{} {:.2f}hw/{}k", inst.name, worst, served / 1000));
    }
    o.detail = "worst deviation per instance: ";
    for (std::size_t k = 0; k < parts.size(); ++k) o.detail += (k ? ", " : "") + parts[k];
    return o;
}

Outcome two_route_gated() {
    std::mt19937_64 g(105);
    double worst = 0.0;
    int gated = 0;
    for (int k = 0; k < 50; ++k) {
        auto m = testing::random_cyclic(g, 6, 0.95, {Gated{}});
        const auto vm = ok(m);
        const auto r = exact::mean_waits(vm);
        const auto t = exact::epoch_moments(vm);
        const double ec = exact::basic_quantities(vm).cycle;
        for (std::size_t i = 0; i < vm.size(); ++i) {
            // Cycle second moment from the second factorial moment at the visit beginning:
            // E[L_i(L_i - 1)] = lambda_i^2 E[C_i^2].
            const double lam = vm.queue(i).lambda;
            const double ec2 = t.begin2(i, i, i) / (lam * lam);
            const double rho_i = lam * vm.queue(i).service.mean();
            worst = std::max(worst, rel((1.0 + rho_i) * ec2 / (2.0 * ec), *r.mean_wait[i]));
            ++gated;
        }
    }
    return {worst <= 1e-8, fmt::format("50 models, {} gated queues, max relative difference {:.2e}", gated, worst)};
}

Outcome discipline_limits() {
    Outcome o;
    int compared = 0;
    std::uint64_t seed = 601;
    for (const auto& inst : test_set()) {
        auto bern = inst.model;
        auto klim = inst.model;
        bool any = false;
        for (std::size_t i = 0; i < bern.size(); ++i)
            if (std::holds_alternative<Exhaustive>(bern.queues[i].discipline)) {
                bern.queues[i].discipline = Bernoulli{1.0};
                klim.queues[i].discipline = KLimited{1000000};
                any = true;
            }
        if (!any) continue;
        const auto cfg = sim_config(2e5, 4, seed++);
        const auto e = sim::run(ok(inst.model), cfg);
        const auto b = sim::run(ok(bern), cfg);
        auto kcfg = cfg;
        kcfg.seed += 1000;  // independent stream for the within-CI comparison
        const auto k = sim::run(ok(klim), kcfg);
        for (std::size_t r = 0; r < e.runs.size(); ++r)
            if (b.runs[r].path_digest != e.runs[r].path_digest) o.pass = false;
        for (std::size_t i = 0; i < e.queues.size(); ++i) {
            if (!agree(*b.queues[i].wait, *e.queues[i].wait) || !agree(*k.queues[i].wait, *e.queues[i].wait)) o.pass = false;
            ++compared;
        }
    }
    o.detail = fmt::format("{} queues compared, Bernoulli(1) paths {}", compared, o.pass ? "identical" : "checked");
    return o;
}

Outcome elevator_fairness() {
    PollingModel m;
    const std::vector<double> lambda{0.05, 0.15, 0.1, 0.08, 0.12};
    const std::vector<RandVar> svc{RandVar::exponential(1.0), RandVar::erlang(2, 2.0), RandVar::deterministic(1.5),
                                   RandVar::uniform(0.5, 1.5), RandVar::from_mean_scv(0.8, 2.0)};
    const std::vector<RandVar> legs{RandVar::deterministic(0.5), RandVar::exponential(1.0), RandVar::erlang(2, 3.0),
                                    RandVar::deterministic(1.0)};
    for (std::size_t i = 0; i < lambda.size(); ++i) m.queues.push_back({lambda[i], svc[i], GloballyGated{0}, QueueOrder::Fcfs});
    m.switchover = SwitchoverMatrix(lambda.size());
    for (std::size_t i = 0; i + 1 < lambda.size(); ++i) {
        m.switchover.set(i, i + 1, legs[i]);
        m.switchover.set(i + 1, i, legs[i]);
    }
    m.routing = Elevator{};
    const auto r = sim::run(ok(m), sim_config(1e6, 4, 701));
    Outcome o;
    double lo = INFINITY, hi = 0.0;
    for (std::size_t i = 0; i < r.queues.size(); ++i) {
        lo = std::min(lo, r.queues[i].wait->mean);
        hi = std::max(hi, r.queues[i].wait->mean);
        for (std::size_t j = i + 1; j < r.queues.size(); ++j)
            if (!agree(*r.queues[i].wait, *r.queues[j].wait)) o.pass = false;
    }
    o.detail = fmt::format("5 queues, mean waits in [{:.4f}, {:.4f}]", lo, hi);
    return o;
}

Outcome service_order() {
    Outcome o;
    int compared = 0;
    std::uint64_t seed = 801;
    for (const auto& inst : test_set()) {
        auto lcfs = inst.model;
        for (auto& q : lcfs.queues) q.order = QueueOrder::Lcfs;
        const auto cfg = sim_config(2e5, 4, seed++);
        const auto f = sim::run(ok(inst.model), cfg);
        const auto l = sim::run(ok(lcfs), cfg);
        for (std::size_t i = 0; i < f.queues.size(); ++i) {
            if (!agree(*f.queues[i].wait, *l.queues[i].wait)) o.pass = false;
            if (!(l.queues[i].wait_variance->mean > f.queues[i].wait_variance->mean)) o.pass = false;
            ++compared;
        }
    }
    o.detail = fmt::format("{} queues on 5 instances", compared);
    return o;
}

Outcome selsp_identity() {
    using namespace scenarios;
    SelspSpec s;
    s.products = {
        {"A", 0.15, RandVar::exponential(1.0), RandVar::deterministic(1.0), 2, Exhaustive{}},
        {"B", 0.10, RandVar::erlang(2, 1.0), RandVar::uniform(0.5, 1.5), 0, Exhaustive{}},
        {"C", 0.05, RandVar::deterministic(1.5), RandVar::exponential(1.0), 5, Exhaustive{}},
    };
    s.sequence = {0, 1, 2};
    const auto cfg = sim_config(1e6, 1, 901);
    Outcome o;
    std::vector<SelspReport> by_b;
    for (std::uint64_t shift = 0; shift < 4; ++shift) {
        auto spec = s;
        for (auto& p : spec.products) p.base_stock += shift;
        by_b.push_back(selsp_evaluate(spec, cfg));
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& p = by_b.back().products[i];
            if (p.mean_net_stock != static_cast<double>(spec.products[i].base_stock) - p.mean_shortfall) o.pass = false;
            if (!p.exact_shortfall || !p.simulated_shortfall) {
                o.pass = false;
                continue;
            }
            if (std::abs(p.simulated_shortfall->mean - *p.exact_shortfall) > 3.0 * p.simulated_shortfall->half_width) o.pass = false;
        }
    }
    for (std::size_t k = 1; k < by_b.size(); ++k)
        for (std::size_t i = 0; i < 3; ++i)
            if (by_b[k].products[i].fill_rate < by_b[k - 1].products[i].fill_rate) o.pass = false;
    // The whole fill-rate curve from one histogram must be monotone as well.
    for (const auto& p : by_b[0].products) {
        double prev = -1.0;
        for (std::uint64_t b = 0; b <= 100; ++b) {
            const double f = *fill_rate_from_histogram(p.shortfall_histogram, b);
            if (f < prev || f < 0.0 || f > 1.0) o.pass = false;
            prev = f;
        }
    }
    o.detail = "3 products, base stock shifted 0..3";
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const std::string& tool) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "polling-acceptance";
    fs::create_directories(dir);
    std::ofstream(dir / "model.yaml") << "queues:\n"
                                         "  - {lambda: 0.2, service: exp(1), discipline: exhaustive}\n"
                                         "  - {lambda: 0.1, service: \"uniform(0.5, 1.5)\", discipline: gated}\n"
                                         "  - {lambda: 0.1, service: \"erlang(2, 2)\", discipline: k-limited(2)}\n"
                                         "switchover: {ring: [det(1), exp(2), det(0.5)]}\n";
    auto run = [&](const std::string& out) {
        const std::string cmd = "\"" + tool + "\" simulate \"" + (dir / "model.yaml").string() +
                                "\" --seed 42 --reps 4 --customers 50000 --records \"" + (dir / out).string() + "\" > /dev/null";
        return std::system(cmd.c_str());
    };
    const int a = run("a.jsonl");
    const int b = run("b.jsonl");
    const std::string ta = slurp(dir / "a.jsonl");
    const std::string tb = slurp(dir / "b.jsonl");
    fs::remove_all(dir);
    if (a != 0 || b != 0) return {false, fmt::format("simulate exited with {} and {}", a, b)};
    return {!ta.empty() && ta == tb, fmt::format("record files of {} bytes {}", ta.size(), ta == tb ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <polling binary>\n", argv[0]);
        return 2;
    }
    const std::string tool = argv[1];
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"AC1 cycle identities", cycle_identities},
        {"AC2 pseudo-conservation law", pcl_suite},
        {"AC3 vacation queue", vacation_oracle},
        {"AC4 exact vs simulation", exact_vs_sim},
        {"AC5 gated waits through the cycle", two_route_gated},
        {"AC6 discipline limits", discipline_limits},
        {"AC7 elevator fairness", elevator_fairness},
        {"AC8 service order", service_order},
        {"AC9 lot-scheduling identities", selsp_identity},
        {"AC10 determinism", [&] { return determinism(tool); }},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
