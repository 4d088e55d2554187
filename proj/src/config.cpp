#include "polling/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "polling/errors.hpp"

namespace polling::config {

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& msg) {
    const YAML::Mark m = node.Mark();
    if (m.is_null()) throw ConfigError(msg, 0, 0);
    throw ConfigError(msg, static_cast<std::size_t>(m.line) + 1, static_cast<std::size_t>(m.column) + 1);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

const std::string& scalar(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) fail(n, what + ": expected a scalar value");
    return n.Scalar();
}

double parse_double(std::string_view text) {
    const std::string s(trim(text));
    if (s.empty()) throw InputError("empty number");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) throw InputError("'" + s + "' is not a finite number");
    return v;
}

std::uint64_t parse_count(std::string_view text) {
    const std::string s(trim(text));
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw InputError("'" + s + "' is not a non-negative integer");
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), nullptr, 10);
    if (errno == ERANGE) throw InputError("'" + s + "' is too large");
    return v;
}

double number(const YAML::Node& n, const std::string& what) {
    try {
        return parse_double(scalar(n, what));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        fail(n, what + ": " + e.what());
    }
}

std::uint64_t count(const YAML::Node& n, const std::string& what) {
    try {
        return parse_count(scalar(n, what));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        fail(n, what + ": " + e.what());
    }
}

std::size_t index(const YAML::Node& n, const std::string& what, std::size_t size) {
    const std::uint64_t v = count(n, what);
    if (v < 1 || v > size) fail(n, what + ": index " + std::to_string(v) + " outside 1.." + std::to_string(size));
    return static_cast<std::size_t>(v - 1);
}

RandVar randvar(const YAML::Node& n, const std::string& what) {
    const std::string& s = scalar(n, what);
    int depth = 0;
    for (char c : s) depth += (c == '(') - (c == ')');
    if (depth != 0)
        fail(n, what + ": unbalanced parentheses in '" + s + "' (quote distributions with commas inside [...] lists)");
    try {
        return RandVar::parse(s);
    } catch (const std::exception& e) {
        fail(n, what + ": " + e.what());
    }
}

void check_keys(const YAML::Node& map, const std::string& what, std::initializer_list<const char*> allowed) {
    if (!map.IsMap()) fail(map, what + ": expected a mapping");
    for (const auto& kv : map) {
        const std::string key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) {
            std::string list;
            for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
            fail(kv.first, what + ": unknown key '" + key + "' (expected one of: " + list + ")");
        }
    }
}

YAML::Node require(const YAML::Node& map, const char* key, const std::string& what) {
    const YAML::Node n = map[key];
    if (!n) fail(map, what + ": missing key '" + key + "'");
    return n;
}

YAML::Node sequence(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence()) fail(n, what + ": expected a list");
    return n;
}

// Splits "name(arg)" into name and arg; arg is empty when there are no parentheses.
std::pair<std::string, std::optional<std::string>> call_form(std::string_view text) {
    text = trim(text);
    const auto open = text.find('(');
    if (open == std::string_view::npos) return {std::string(text), std::nullopt};
    if (text.back() != ')') throw InputError("expected ')' at the end of '" + std::string(text) + "'");
    return {std::string(trim(text.substr(0, open))), std::string(trim(text.substr(open + 1, text.size() - open - 2)))};
}

Discipline discipline(const YAML::Node& n, const std::string& what, std::size_t queues) {
    try {
        Discipline d = parse_discipline(scalar(n, what));
        if (const auto* g = std::get_if<GloballyGated>(&d); g && g->parent >= queues)
            throw InputError("parent queue " + std::to_string(g->parent + 1) + " outside 1.." + std::to_string(queues));
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        fail(n, what + ": " + e.what());
    }
}

Routing routing(const YAML::Node& n, std::size_t queues) {
    if (n.IsScalar()) {
        const std::string s = n.Scalar();
        if (s == "cyclic") return Cyclic{};
        if (s == "elevator") return Elevator{};
        fail(n, "routing: expected cyclic, elevator, {table: [...]} or {markov: [[...]]}");
    }
    if (!n.IsMap() || n.size() != 1) fail(n, "routing: expected cyclic, elevator, {table: [...]} or {markov: [[...]]}");
    check_keys(n, "routing", {"table", "markov"});
    if (const auto t = n["table"]) {
        Table table;
        for (const auto& e : sequence(t, "routing.table")) table.sequence.push_back(index(e, "routing.table", queues));
        if (table.sequence.empty()) fail(t, "routing.table: empty visit table");
        return table;
    }
    const auto mk = n["markov"];
    Markovian m;
    for (const auto& row : sequence(mk, "routing.markov")) {
        std::vector<double> r;
        for (const auto& e : sequence(row, "routing.markov row")) r.push_back(number(e, "routing.markov"));
        if (r.size() != queues)
            fail(row, "routing.markov: row has " + std::to_string(r.size()) + " entries, expected " + std::to_string(queues));
        m.transition.push_back(std::move(r));
    }
    if (m.transition.size() != queues)
        fail(mk, "routing.markov: " + std::to_string(m.transition.size()) + " rows, expected " + std::to_string(queues));
    return m;
}

bool absent_cell(const YAML::Node& n) {
    return n.IsNull() || (n.IsScalar() && n.Scalar() == "-");
}

SwitchoverMatrix switchover(const YAML::Node& n, std::size_t queues) {
    check_keys(n, "switchover", {"ring", "matrix", "turnaround"});
    const auto ring = n["ring"];
    const auto matrix = n["matrix"];
    if (bool(ring) == bool(matrix)) fail(n, "switchover: give exactly one of 'ring' or 'matrix'");
    SwitchoverMatrix out;
    if (ring) {
        std::vector<RandVar> legs;
        for (const auto& e : sequence(ring, "switchover.ring")) legs.push_back(randvar(e, "switchover.ring"));
        if (legs.size() != queues)
            fail(ring, "switchover.ring: " + std::to_string(legs.size()) + " entries, expected one per queue (" +
                           std::to_string(queues) + ")");
        out = SwitchoverMatrix::ring(legs);
    } else {
        out = SwitchoverMatrix(queues);
        const YAML::Node rows = sequence(matrix, "switchover.matrix");
        if (rows.size() != queues)
            fail(matrix, "switchover.matrix: " + std::to_string(rows.size()) + " rows, expected " + std::to_string(queues));
        for (std::size_t i = 0; i < queues; ++i) {
            const YAML::Node row = sequence(rows[i], "switchover.matrix row");
            if (row.size() != queues)
                fail(rows[i], "switchover.matrix: row has " + std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(queues));
            for (std::size_t j = 0; j < queues; ++j)
                if (!absent_cell(row[j])) out.set(i, j, randvar(row[j], "switchover.matrix"));
        }
    }
    if (const auto t = n["turnaround"]) {
        const YAML::Node list = sequence(t, "switchover.turnaround");
        if (list.size() != queues)
            fail(t, "switchover.turnaround: " + std::to_string(list.size()) + " entries, expected " + std::to_string(queues));
        for (std::size_t i = 0; i < queues; ++i) out.set(i, i, randvar(list[i], "switchover.turnaround"));
    }
    return out;
}

PollingModel model(const YAML::Node& root) {
    PollingModel m;
    const YAML::Node qs = sequence(require(root, "queues", "model"), "queues");
    if (qs.size() == 0) fail(qs, "queues: at least one queue is required");
    const std::size_t n = qs.size();
    for (const auto& q : qs) {
        check_keys(q, "queue", {"lambda", "service", "discipline", "order"});
        QueueSpec spec;
        spec.lambda = number(require(q, "lambda", "queue"), "lambda");
        spec.service = randvar(require(q, "service", "queue"), "service");
        if (const auto d = q["discipline"]) spec.discipline = discipline(d, "discipline", n);
        if (const auto o = q["order"]) {
            const std::string s = scalar(o, "order");
            if (s == "fcfs") spec.order = QueueOrder::Fcfs;
            else if (s == "lcfs") spec.order = QueueOrder::Lcfs;
            else fail(o, "order: expected fcfs or lcfs");
        }
        m.queues.push_back(std::move(spec));
    }
    if (const auto r = root["routing"]) m.routing = routing(r, n);
    m.switchover = switchover(require(root, "switchover", "model"), n);
    return m;
}

scenarios::LotPolicy lot_policy(const YAML::Node& n) {
    const Discipline d = discipline(n, "lot_policy", 1);
    if (const auto* e = std::get_if<Exhaustive>(&d)) return *e;
    if (const auto* g = std::get_if<Gated>(&d)) return *g;
    if (const auto* k = std::get_if<KLimited>(&d)) return *k;
    fail(n, "lot_policy: expected exhaustive, gated or k-limited(k)");
}

scenarios::SelspSpec selsp(const YAML::Node& n) {
    check_keys(n, "selsp", {"products", "sequence"});
    scenarios::SelspSpec spec;
    const YAML::Node ps = sequence(require(n, "products", "selsp"), "selsp.products");
    if (ps.size() == 0) fail(ps, "selsp.products: at least one product is required");
    std::set<std::string> names;
    for (const auto& p : ps) {
        check_keys(p, "product", {"name", "demand", "production", "setup", "base_stock", "lot_policy"});
        scenarios::Product prod;
        prod.name = p["name"] ? scalar(p["name"], "name") : "P" + std::to_string(spec.products.size() + 1);
        if (!names.insert(prod.name).second) fail(p, "product: duplicate name '" + prod.name + "'");
        prod.demand_rate = number(require(p, "demand", "product"), "demand");
        if (prod.demand_rate < 0.0) fail(p["demand"], "demand: must be >= 0");
        prod.production = randvar(require(p, "production", "product"), "production");
        prod.setup = randvar(require(p, "setup", "product"), "setup");
        if (const auto b = p["base_stock"]) prod.base_stock = count(b, "base_stock");
        if (const auto l = p["lot_policy"]) prod.lot_policy = lot_policy(l);
        spec.products.push_back(std::move(prod));
    }
    if (const auto s = n["sequence"]) {
        for (const auto& e : sequence(s, "selsp.sequence")) spec.sequence.push_back(index(e, "selsp.sequence", ps.size()));
        std::vector<char> seen(ps.size(), 0);
        for (auto q : spec.sequence) seen[q] = 1;
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i]) fail(s, "selsp.sequence: product " + std::to_string(i + 1) + " is never produced");
    } else {
        for (std::size_t i = 0; i < ps.size(); ++i) spec.sequence.push_back(i);
    }
    return spec;
}

scenarios::SignalControl control(const YAML::Node& n) {
    const Discipline d = discipline(n, "control", 1);
    if (const auto* e = std::get_if<Exhaustive>(&d)) return *e;
    if (const auto* k = std::get_if<KLimited>(&d)) return *k;
    if (const auto* t = std::get_if<TimeLimited>(&d)) return *t;
    fail(n, "control: expected exhaustive, k-limited(k) or time-limited(dist)");
}

scenarios::TrafficSpec traffic(const YAML::Node& n) {
    check_keys(n, "traffic", {"flows", "clearance"});
    scenarios::TrafficSpec spec;
    const YAML::Node fs = sequence(require(n, "flows", "traffic"), "traffic.flows");
    if (fs.size() == 0) fail(fs, "traffic.flows: at least one flow is required");
    for (const auto& f : fs) {
        check_keys(f, "flow", {"name", "arrival_rate", "headway", "control"});
        scenarios::Flow flow;
        flow.name = f["name"] ? scalar(f["name"], "name") : "F" + std::to_string(spec.flows.size() + 1);
        flow.arrival_rate = number(require(f, "arrival_rate", "flow"), "arrival_rate");
        if (flow.arrival_rate < 0.0) fail(f["arrival_rate"], "arrival_rate: must be >= 0");
        flow.headway = randvar(require(f, "headway", "flow"), "headway");
        if (const auto c = f["control"]) flow.control = control(c);
        spec.flows.push_back(std::move(flow));
    }
    const auto cl = require(n, "clearance", "traffic");
    if (cl.IsScalar()) {
        const RandVar rv = randvar(cl, "clearance");
        spec.clearance.assign(fs.size(), rv);
    } else {
        for (const auto& e : sequence(cl, "traffic.clearance")) spec.clearance.push_back(randvar(e, "clearance"));
        if (spec.clearance.size() != fs.size())
            fail(cl, "traffic.clearance: " + std::to_string(spec.clearance.size()) + " entries, expected one per flow (" +
                         std::to_string(fs.size()) + ")");
    }
    for (std::size_t i = 0; i < spec.clearance.size(); ++i)
        if (!(spec.clearance[i].mean() > 0.0))
            fail(cl.IsSequence() ? cl[i] : cl, "clearance: mean must be positive");
    return spec;
}

}  // namespace

Discipline parse_discipline(std::string_view text) {
    const auto [name, arg] = call_form(text);
    auto need_arg = [&, &arg = arg, &name = name]() -> const std::string& {
        if (!arg || arg->empty()) throw InputError("'" + name + "' needs an argument, e.g. " + name + "(...)");
        return *arg;
    };
    if (name == "exhaustive" || name == "gated") {
        if (arg) throw InputError("'" + name + "' takes no argument");
        if (name == "gated") return Gated{};
        return Exhaustive{};
    }
    if (name == "globally-gated") {
        const std::uint64_t p = parse_count(need_arg());
        if (p < 1) throw InputError("parent queue index is 1-based");
        return GloballyGated{static_cast<std::size_t>(p - 1)};
    }
    if (name == "k-limited") {
        const std::uint64_t k = parse_count(need_arg());
        if (k < 1) throw InputError("k-limited needs k >= 1");
        return KLimited{k};
    }
    if (name == "bernoulli") {
        const double p = parse_double(need_arg());
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("bernoulli probability must lie in [0,1]");
        return Bernoulli{p};
    }
    if (name == "time-limited") return TimeLimited{RandVar::parse(need_arg())};
    throw InputError("unknown discipline '" + name +
                     "' (expected exhaustive, gated, globally-gated(q), k-limited(k), bernoulli(p), time-limited(dist))");
}

std::string canonical_text(const scenarios::SelspSpec& spec) {
    std::ostringstream os;
    os << "selsp v1\n";
    for (std::size_t i = 0; i < spec.products.size(); ++i) {
        const auto& p = spec.products[i];
        const Discipline d = std::visit([](const auto& x) -> Discipline { return x; }, p.lot_policy);
        os << "product " << i + 1 << " name " << std::quoted(p.name) << " demand " << num(p.demand_rate) << " production "
           << p.production.to_string() << " setup " << p.setup.to_string() << " base_stock " << p.base_stock
           << " lot_policy " << discipline_name(d) << '\n';
    }
    os << "sequence";
    for (auto q : spec.sequence) os << ' ' << q + 1;
    os << '\n';
    return os.str();
}

std::string canonical_text(const scenarios::TrafficSpec& spec) {
    std::ostringstream os;
    os << "traffic v1\n";
    for (std::size_t i = 0; i < spec.flows.size(); ++i) {
        const auto& f = spec.flows[i];
        const Discipline d = std::visit([](const auto& x) -> Discipline { return x; }, f.control);
        os << "flow " << i + 1 << " name " << std::quoted(f.name) << " arrival_rate " << num(f.arrival_rate) << " headway "
           << f.headway.to_string() << " control " << discipline_name(d) << '\n';
    }
    for (std::size_t i = 0; i < spec.clearance.size(); ++i)
        os << "clearance " << i + 1 << ' ' << spec.clearance[i].to_string() << '\n';
    return os.str();
}

ConfigFile parse(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(e.msg, static_cast<std::size_t>(e.mark.line) + 1, static_cast<std::size_t>(e.mark.column) + 1);
    }
    if (!root || root.IsNull()) throw ConfigError("empty config", 1, 1);
    check_keys(root, "config", {"routing", "queues", "switchover", "selsp", "traffic"});

    ConfigFile out;
    std::string canon;
    try {
        if (root["queues"] || root["switchover"] || root["routing"]) {
            out.model = model(root);
            canon += polling::canonical_text(*out.model);
        }
        if (const auto s = root["selsp"]) {
            out.selsp = selsp(s);
            canon += canonical_text(*out.selsp);
        }
        if (const auto t = root["traffic"]) {
            out.traffic = traffic(t);
            canon += canonical_text(*out.traffic);
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError(e.msg, static_cast<std::size_t>(e.mark.line) + 1, static_cast<std::size_t>(e.mark.column) + 1);
    }
    if (canon.empty()) throw ConfigError("no model, selsp or traffic section", 1, 1);
    out.fingerprint = content_hash(canon);
    return out;
}

ConfigFile load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace polling::config
