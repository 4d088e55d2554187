#include "polling/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "polling/config.hpp"
#include "polling/errors.hpp"
#include "polling/exact.hpp"
#include "polling/scenarios.hpp"

namespace polling::cli {

namespace {

using nlohmann::json;

struct SimOptions {
    std::optional<std::uint64_t> seed;
    std::optional<double> horizon;
    std::optional<double> customers;
    std::size_t reps = 1;
    double warmup = 0.1;
    std::size_t batches = 20;
    std::size_t histogram_cap = 100;
    unsigned threads = 1;
};

void add_sim_options(CLI::App* app, SimOptions& o) {
    app->add_option("--seed", o.seed, "Master seed (default 1, or $POLLING_SEED)");
    auto* h = app->add_option("--horizon", o.horizon, "Simulated time per replication")->check(CLI::PositiveNumber);
    auto* c = app->add_option("--customers", o.customers, "Customers per replication after warmup")->check(CLI::PositiveNumber);
    h->excludes(c);
    app->add_option("--reps", o.reps, "Independent replications")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
    app->add_option("--warmup", o.warmup, "Warmup fraction of the horizon")->check(CLI::Range(0.0, 0.5));
    app->add_option("--batches", o.batches, "Batch means per replication")->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    app->add_option("--histogram-cap", o.histogram_cap, "Last queue-length histogram level")->check(CLI::PositiveNumber);
    app->add_option("--threads", o.threads, "Replications run in parallel")->check(CLI::Range(1u, 1024u));
}

std::uint64_t default_seed() {
    const char* env = std::getenv("POLLING_SEED");
    if (!env || !*env) return 1;
    const std::string s(env);
    if (s.find_first_not_of("0123456789") != std::string::npos) throw InputError("POLLING_SEED must be a non-negative integer");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw InputError("POLLING_SEED is out of range");
    }
}

sim::SimConfig sim_config(const SimOptions& o, double default_customers) {
    sim::SimConfig cfg;
    if (o.horizon) cfg.horizon = sim::Horizon::time(*o.horizon);
    else cfg.horizon = sim::Horizon::customers(o.customers.value_or(default_customers));
    cfg.replications = o.reps;
    cfg.warmup = o.warmup;
    cfg.batches = o.batches;
    cfg.histogram_cap = o.histogram_cap;
    cfg.threads = o.threads;
    cfg.seed = o.seed ? *o.seed : default_seed();
    sim::check(cfg);
    return cfg;
}

config::ConfigFile load_model_config(const std::string& path) {
    auto cfg = config::load_file(path);
    if (!cfg.model) throw InputError(path + ": no queues/switchover section");
    return cfg;
}

ValidatedModel validated(const PollingModel& m, std::ostream& err) {
    ValidatedModel vm = validate_or_throw(m);
    for (const auto& w : vm.warnings()) err << to_string(w) << '\n';
    return vm;
}

std::string g(double x) { return fmt::format("{:.6g}", x); }

std::string pm(const std::optional<Interval>& v) {
    if (!v) return "-";
    if (!std::isfinite(v->half_width)) return g(v->mean) + " ± inf";
    return g(v->mean) + " ± " + g(v->half_width);
}

Interval interval(const Estimate& e) { return {e.mean, e.half_width}; }
std::optional<Interval> interval(const std::optional<Estimate>& e) {
    if (!e) return std::nullopt;
    return interval(*e);
}

json estimate_json(const std::optional<Estimate>& e) {
    if (!e) return nullptr;
    return json{{"mean", e->mean},
                {"half_width", std::isfinite(e->half_width) ? json(e->half_width) : json(nullptr)},
                {"std_error", std::isfinite(e->std_error) ? json(e->std_error) : json(nullptr)},
                {"dof", e->dof}};
}

json number_or_null(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

std::optional<Interval> interval_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    const auto& hw = j.at("half_width");
    return Interval{j.at("mean").get<double>(), hw.is_null() ? std::numeric_limits<double>::infinity() : hw.get<double>()};
}

void write_records(const std::string& path, const sim::SimReport& r, const sim::SimConfig& cfg, double horizon) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write records to '" + path + "'");
    auto line = [&](json j) { f << j.dump() << '\n'; };
    line({{"schema", kRecordSchema},
          {"record", "run"},
          {"command", "simulate"},
          {"fingerprint", r.fingerprint},
          {"engine", "sim"},
          {"seed", cfg.seed},
          {"replications", r.replications},
          {"horizon", horizon},
          {"warmup", cfg.warmup},
          {"batches", cfg.batches},
          {"queues", r.queues.size()},
          {"pcl", "not computed"}});
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
        const auto& run = r.runs[k];
        for (std::size_t i = 0; i < run.queues.size(); ++i) {
            const auto& q = run.queues[i];
            line({{"schema", kRecordSchema},
                  {"record", "replication"},
                  {"fingerprint", r.fingerprint},
                  {"replication", k + 1},
                  {"queue", i + 1},
                  {"mean_wait", number_or_null(q.mean_wait)},
                  {"wait_variance", number_or_null(q.wait_variance)},
                  {"mean_queue_length", number_or_null(q.mean_queue_length)},
                  {"mean_cycle", number_or_null(q.mean_cycle)},
                  {"ql_visit_begin", number_or_null(q.ql_visit_begin)},
                  {"ql_visit_end", number_or_null(q.ql_visit_end)},
                  {"served", q.served},
                  {"arrivals", q.arrivals},
                  {"busy", run.busy},
                  {"switching", run.switching},
                  {"idle", run.idle},
                  {"events", run.events},
                  {"path_digest", fmt::format("{:016x}", run.path_digest)},
                  {"truncated", run.truncated}});
        }
    }
    for (std::size_t i = 0; i < r.queues.size(); ++i) {
        const auto& q = r.queues[i];
        line({{"schema", kRecordSchema},
              {"record", "queue"},
              {"fingerprint", r.fingerprint},
              {"queue", i + 1},
              {"wait", estimate_json(q.wait)},
              {"wait_variance", estimate_json(q.wait_variance)},
              {"queue_length", estimate_json(q.queue_length)},
              {"cycle_time", estimate_json(q.cycle_time)},
              {"ql_visit_begin", estimate_json(q.ql_visit_begin)},
              {"ql_visit_end", estimate_json(q.ql_visit_end)},
              {"served", q.served},
              {"arrivals", q.arrivals},
              {"histogram", q.histogram}});
    }
    line({{"schema", kRecordSchema},
          {"record", "summary"},
          {"fingerprint", r.fingerprint},
          {"replications", r.replications},
          {"busy", estimate_json(r.busy_fraction)},
          {"switching", estimate_json(r.switch_fraction)},
          {"idle", estimate_json(r.idle_fraction)},
          {"events", r.events},
          {"truncated", r.truncated}});
    if (!f) throw InputError("failed writing records to '" + path + "'");
}

int cmd_analyze(const std::string& path, std::ostream& out, std::ostream& err) {
    const auto cfg = load_model_config(path);
    const ValidatedModel vm = validated(*cfg.model, err);
    const exact::ExactReport r = exact::mean_waits(vm);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    out << fmt::format("model {}  queues {}  rho {}  E[C] {}\n", cfg.fingerprint, vm.size(), g(r.rho), g(r.basics.cycle));
    out << fmt::format("{:>5}  {:<18} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n", "queue", "discipline", "rho_i", "E[C]",
                       "E[V_i]", "E[I_i]", "E[W_i]", "E[L_i]");
    for (std::size_t i = 0; i < vm.size(); ++i)
        out << fmt::format("{:>5}  {:<18} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n", i + 1,
                           discipline_name(vm.queue(i).discipline), g(r.rho_i[i]), g(r.basics.cycle),
                           g(r.basics.visit[i]), g(r.basics.intervisit[i]),
                           r.mean_wait[i] ? g(*r.mean_wait[i]) : std::string("-"), g(r.mean_queue_length[i]));
    if (r.pcl.status == exact::PclStatus::Checked)
        out << fmt::format("pseudo-conservation: lhs {} rhs {} residual {:.3g} (relative {:.3g}) {}\n", g(r.pcl.lhs),
                           g(r.pcl.rhs), r.pcl.residual, r.pcl.residual_rel, r.pcl.passed() ? "ok" : "FAILED");
    else
        out << "pseudo-conservation: not applicable (" << r.pcl.reason << ")\n";
    return kOk;
}

int cmd_simulate(const std::string& path, const SimOptions& o, const std::string& records, std::ostream& out,
                 std::ostream& err) {
    const auto cfg = load_model_config(path);
    const ValidatedModel vm = validated(*cfg.model, err);
    const sim::SimConfig sc = sim_config(o, 100000);
    const sim::SimReport r = sim::run(vm, sc);
    if (r.truncated) err << "warning: event cap reached; results cover a shortened horizon\n";
    if (!records.empty()) write_records(records, r, sc, sim::time_horizon(vm, sc));
    out << render(sim_table(r));
    return kOk;
}

int cmd_validate(const std::string& path, const SimOptions& o, double z_max, double perturb, std::ostream& out,
                 std::ostream& err) {
    const auto cfg = load_model_config(path);
    const ValidatedModel vm = validated(*cfg.model, err);
    std::optional<exact::ExactReport> ex;
    try {
        ex = exact::mean_waits(vm);
    } catch (const UnsupportedError& e) {
        out << "exact side skipped: " << e.what() << '\n';
    }
    const sim::SimConfig sc = sim_config(o, 1000000);
    const sim::SimReport r = sim::run(vm, sc);

    out << fmt::format("model {}  replications {}  seed {}\n", cfg.fingerprint, r.replications, sc.seed);
    out << fmt::format("{:>5} {:>12} {:>26} {:>9}  {}\n", "queue", "exact E[W]", "simulated E[W] ± 95%", "z", "result");
    std::vector<std::size_t> failed;
    for (std::size_t i = 0; i < vm.size(); ++i) {
        const auto& w = r.queues[i].wait;
        std::optional<double> e;
        if (ex && ex->mean_wait[i]) e = *ex->mean_wait[i] * perturb;
        std::string z = "-", verdict = "-";
        if (e && w) {
            const double diff = w->mean - *e;
            const double zv = w->std_error > 0.0 ? diff / w->std_error : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
            z = fmt::format("{:.3f}", zv);
            const bool ok = std::isfinite(zv) && std::abs(zv) <= z_max;
            verdict = ok ? "ok" : "FAILED";
            if (!ok) failed.push_back(i + 1);
        }
        out << fmt::format("{:>5} {:>12} {:>26} {:>9}  {}\n", i + 1, e ? g(*e) : std::string("-"),
                           pm(interval(w)), z, verdict);
    }
    bool pcl_ok = true;
    if (ex) {
        if (ex->pcl.status == exact::PclStatus::Checked) {
            pcl_ok = ex->pcl.passed();
            out << fmt::format("pseudo-conservation: relative residual {:.3g} {}\n", ex->pcl.residual_rel,
                               pcl_ok ? "ok" : "FAILED");
        } else {
            out << "pseudo-conservation: not applicable (" << ex->pcl.reason << ")\n";
        }
    }
    if (failed.empty() && pcl_ok) {
        out << "validation passed\n";
        return kOk;
    }
    std::string list;
    for (auto q : failed) list += (list.empty() ? "" : ", ") + std::to_string(q);
    err << "validation failed:";
    if (!failed.empty()) err << " queues " << list << " outside |z| <= " << g(z_max);
    if (!pcl_ok) err << (failed.empty() ? "" : ";") << " pseudo-conservation residual too large";
    err << '\n';
    return kValidationFailed;
}

int cmd_selsp(const std::string& path, const SimOptions& o, std::optional<double> target, std::ostream& out) {
    const auto cfg = config::load_file(path);
    if (!cfg.selsp) throw InputError(path + ": no selsp section");
    const auto& spec = *cfg.selsp;
    const sim::SimConfig sc = sim_config(o, 200000);
    if (target) {
        const auto choice = scenarios::selsp_basestock_search(spec, *target, sc);
        out << fmt::format("target fill rate {}\n", g(*target));
        out << fmt::format("{:<12} {:>10} {:>10}  {}\n", "product", "base stock", "fill rate", "note");
        for (std::size_t p = 0; p < choice.size(); ++p)
            out << fmt::format("{:<12} {:>10} {:>10}  {}\n", spec.products[p].name,
                               (choice[p].lower_bound ? ">=" : "") + std::to_string(choice[p].base_stock),
                               g(choice[p].fill_rate), choice[p].lower_bound ? "histogram cap reached; lower bound" : "");
        return kOk;
    }
    const auto r = scenarios::selsp_evaluate(spec, sc);
    out << fmt::format("{:<12} {:>10} {:>14} {:>20} {:>14} {:>10} {:>10}\n", "product", "base stock", "E[shortfall]",
                       "simulated ± 95%", "E[net stock]", "fill rate", "exact fill");
    for (std::size_t p = 0; p < r.products.size(); ++p) {
        const auto& pr = r.products[p];
        out << fmt::format("{:<12} {:>10} {:>14} {:>20} {:>14} {:>10} {:>10}\n", spec.products[p].name,
                           spec.products[p].base_stock, g(pr.mean_shortfall), pm(interval(pr.simulated_shortfall)),
                           g(pr.mean_net_stock), g(pr.fill_rate),
                           pr.exact_fill_rate ? g(*pr.exact_fill_rate) : std::string("-"));
    }
    out << (r.exact_available ? "shortfall means: exact\n" : "shortfall means: simulated\n");
    return kOk;
}

int cmd_traffic(const std::string& path, const SimOptions& o, const std::string& engine, std::ostream& out) {
    const auto cfg = config::load_file(path);
    if (!cfg.traffic) throw InputError(path + ": no traffic section");
    const auto& spec = *cfg.traffic;
    const sim::SimConfig sc = sim_config(o, 200000);
    const scenarios::Engine e = engine == "exact" ? scenarios::Engine::Exact
                                : engine == "sim" ? scenarios::Engine::Simulation
                                                  : scenarios::Engine::Auto;
    const auto r = scenarios::traffic_evaluate(spec, sc, e);
    out << fmt::format("{:<12} {:>24} {:>24}\n", "flow", "mean delay", "queue at green end");
    auto cell = [](double m, const std::optional<double>& hw) {
        return hw ? pm(Interval{m, *hw}) : g(m);
    };
    for (std::size_t i = 0; i < r.flows.size(); ++i)
        out << fmt::format("{:<12} {:>24} {:>24}\n", spec.flows[i].name, cell(r.flows[i].mean_delay, r.flows[i].delay_half_width),
                           cell(r.flows[i].mean_overflow, r.flows[i].overflow_half_width));
    out << (r.engine == scenarios::Engine::Exact ? "engine: exact\n" : "engine: simulation\n");
    return kOk;
}

}  // namespace

SimTable sim_table(const sim::SimReport& r) {
    SimTable t;
    t.fingerprint = r.fingerprint;
    t.replications = r.replications;
    t.events = r.events;
    t.truncated = r.truncated;
    t.busy = interval(r.busy_fraction);
    t.switching = interval(r.switch_fraction);
    t.idle = interval(r.idle_fraction);
    for (std::size_t i = 0; i < r.queues.size(); ++i) {
        const auto& q = r.queues[i];
        t.rows.push_back({i + 1, interval(q.wait), interval(q.queue_length), interval(q.cycle_time),
                          interval(q.ql_visit_end), q.served});
    }
    return t;
}

SimTable sim_table_from_records(std::istream& in) {
    SimTable t;
    std::string line;
    std::size_t lineno = 0;
    bool summary = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (j.at("schema").get<int>() != kRecordSchema)
                throw InputError("unsupported record schema " + j.at("schema").dump());
            const std::string kind = j.at("record").get<std::string>();
            if (kind == "queue") {
                SimRow row;
                row.queue = j.at("queue").get<std::size_t>();
                row.wait = interval_json(j.at("wait"));
                row.queue_length = interval_json(j.at("queue_length")).value_or(Interval{});
                row.cycle_time = interval_json(j.at("cycle_time"));
                row.ql_visit_end = interval_json(j.at("ql_visit_end"));
                row.served = j.at("served").get<std::uint64_t>();
                t.rows.push_back(row);
            } else if (kind == "summary") {
                t.fingerprint = j.at("fingerprint").get<std::string>();
                t.replications = j.at("replications").get<std::size_t>();
                t.events = j.at("events").get<std::uint64_t>();
                t.truncated = j.at("truncated").get<bool>();
                t.busy = interval_json(j.at("busy")).value_or(Interval{});
                t.switching = interval_json(j.at("switching")).value_or(Interval{});
                t.idle = interval_json(j.at("idle")).value_or(Interval{});
                summary = true;
            }
        } catch (const json::exception& e) {
            throw InputError("record line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!summary) throw InputError("record file has no summary record");
    return t;
}

std::string render(const SimTable& t) {
    std::string s = fmt::format("model {}  replications {}  events {}{}\n", t.fingerprint, t.replications, t.events,
                                t.truncated ? "  (truncated)" : "");
    s += fmt::format("{:>5} {:>24} {:>24} {:>24} {:>24} {:>10}\n", "queue", "E[W] ± 95%", "E[L] ± 95%",
                     "cycle ± 95%", "L at visit end ± 95%", "served");
    for (const auto& r : t.rows)
        s += fmt::format("{:>5} {:>24} {:>24} {:>24} {:>24} {:>10}\n", r.queue, pm(r.wait), pm(r.queue_length),
                         pm(r.cycle_time), pm(r.ql_visit_end), r.served);
    s += fmt::format("server busy {}  switching {}  idle {}\n", pm(t.busy), pm(t.switching), pm(t.idle));
    return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Polling system analysis and simulation", "polling"};
    app.require_subcommand(1);

    std::string config_path, records, engine = "auto";
    SimOptions sim_opts;
    double z_max = 3.0, perturb = 1.0;
    std::optional<double> target;

    auto* analyze = app.add_subcommand("analyze", "Exact mean waiting times of a branching-type cyclic model");
    analyze->add_option("config", config_path, "Model config file")->required();

    auto* simulate = app.add_subcommand("simulate", "Discrete-event simulation");
    simulate->add_option("config", config_path, "Model config file")->required();
    add_sim_options(simulate, sim_opts);
    simulate->add_option("--records", records, "Write line-delimited JSON records to this file");

    auto* validate = app.add_subcommand("validate", "Compare exact mean waits with simulation");
    validate->add_option("config", config_path, "Model config file")->required();
    add_sim_options(validate, sim_opts);
    validate->add_option("--z-max", z_max, "Largest accepted |z| score")->check(CLI::PositiveNumber);
    validate->add_option("--perturb-exact", perturb, "Scale the exact waits (harness self-test)")->group("");

    auto* scenario = app.add_subcommand("scenario", "Application scenarios");
    scenario->require_subcommand(1);
    auto* selsp = scenario->add_subcommand("selsp", "Lot scheduling with base-stock control");
    selsp->add_option("config", config_path, "Config file with a selsp section")->required();
    selsp->add_option("--target-fill", target, "Search the smallest base stocks reaching this fill rate")
        ->check(CLI::Range(0.0, 1.0));
    add_sim_options(selsp, sim_opts);
    auto* traffic = scenario->add_subcommand("traffic", "Signalized intersection");
    traffic->add_option("config", config_path, "Config file with a traffic section")->required();
    traffic->add_option("--engine", engine, "auto, exact or sim")->check(CLI::IsMember({"auto", "exact", "sim"}));
    add_sim_options(traffic, sim_opts);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return kOk;
        const CLI::App* where = &app;
        for (auto* sub = where; sub;) {
            const auto parsed = sub->get_subcommands();
            sub = parsed.empty() ? nullptr : parsed.front();
            if (sub) where = sub;
        }
        err << where->help();
        return kInput;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(config_path, out, err);
        if (simulate->parsed()) return cmd_simulate(config_path, sim_opts, records, out, err);
        if (validate->parsed()) return cmd_validate(config_path, sim_opts, z_max, perturb, out, err);
        if (selsp->parsed()) {
            if (target && !(*target > 0.0 && *target < 1.0)) throw InputError("--target-fill must lie in (0,1)");
            return cmd_selsp(config_path, sim_opts, target, out);
        }
        if (traffic->parsed()) return cmd_traffic(config_path, sim_opts, engine, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kInput;
    } catch (const UnstableError& e) {
        err << "error: " << e.what() << '\n';
        return kUnstable;
    } catch (const UnsupportedError& e) {
        err << "error: " << e.what() << "; try 'polling simulate'\n";
        return kUnsupported;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInternal;
    }
    err << app.help();
    return kInput;
}

}  // namespace polling::cli
