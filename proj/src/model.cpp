#include "polling/model.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <sstream>

#include "polling/errors.hpp"

namespace polling {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string num(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

bool strongly_connected(const std::vector<std::vector<double>>& p) {
    const std::size_t n = p.size();
    auto reach_all = [&](bool reverse) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v) {
                const double w = reverse ? p[v][u] : p[u][v];
                if (w > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        for (char s : seen)
            if (!s) return false;
        return true;
    };
    return n == 0 || (reach_all(false) && reach_all(true));
}

// Legs (from, to) traversed by one pass of a deterministic route.
std::vector<std::pair<std::size_t, std::size_t>> route_legs(const PollingModel& m) {
    const auto seq = visit_sequence(m);
    std::vector<std::pair<std::size_t, std::size_t>> legs;
    for (std::size_t k = 0; k < seq.size(); ++k) legs.emplace_back(seq[k], seq[(k + 1) % seq.size()]);
    return legs;
}

}  // namespace

SwitchoverMatrix SwitchoverMatrix::ring(const std::vector<RandVar>& legs) {
    const std::size_t n = legs.size();
    SwitchoverMatrix m(n);
    if (n == 0) return m;
    for (std::size_t i = 0; i < n; ++i) m.set((i + 1) % n, i, legs[i]);
    for (std::size_t i = 0; i < n; ++i) m.set(i, (i + 1) % n, legs[i]);
    if (n > 1)
        for (std::size_t i = 0; i < n; ++i) m.set(i, i, RandVar::deterministic(0.0));
    return m;
}

std::string to_string(const Issue& issue) {
    std::string out = issue.severity == Severity::Error ? "error" : "warning";
    if (issue.queue) out += " [queue " + std::to_string(*issue.queue + 1) + "]";
    if (!issue.field.empty()) out += " " + issue.field;
    out += ": " + issue.message;
    return out;
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "stable";
        case Stability::Unknown: return "unknown";
        case Stability::Unstable: return "unstable";
    }
    return "?";
}

std::string discipline_name(const Discipline& d) {
    return std::visit(overloaded{
                          [](const Exhaustive&) -> std::string { return "exhaustive"; },
                          [](const Gated&) -> std::string { return "gated"; },
                          [](const GloballyGated& g) { return "globally-gated(" + std::to_string(g.parent + 1) + ")"; },
                          [](const KLimited& k) { return "k-limited(" + std::to_string(k.k) + ")"; },
                          [](const Bernoulli& b) { return "bernoulli(" + num(b.p) + ")"; },
                          [](const TimeLimited& t) { return "time-limited(" + t.limit.to_string() + ")"; },
                      },
                      d);
}

bool is_branching(const Discipline& d) {
    return std::holds_alternative<Exhaustive>(d) || std::holds_alternative<Gated>(d) ||
           std::holds_alternative<GloballyGated>(d);
}

std::vector<std::size_t> visit_sequence(const PollingModel& m) {
    const std::size_t n = m.size();
    return std::visit(overloaded{
                          [&](const Cyclic&) {
                              std::vector<std::size_t> s(n);
                              for (std::size_t i = 0; i < n; ++i) s[i] = i;
                              return s;
                          },
                          [&](const Table& t) { return t.sequence; },
                          [&](const Markovian&) { return std::vector<std::size_t>{}; },
                          [&](const Elevator&) {
                              std::vector<std::size_t> s;
                              for (std::size_t i = 0; i < n; ++i) s.push_back(i);
                              for (std::size_t i = n; i-- > 0;) s.push_back(i);
                              return s;
                          },
                      },
                      m.routing);
}

LoadProfile load(const PollingModel& m) {
    LoadProfile out;
    out.rho_i.reserve(m.size());
    for (const auto& q : m.queues) {
        out.rho_i.push_back(q.lambda * q.service.mean());
        out.rho += out.rho_i.back();
    }
    if (!std::holds_alternative<Markovian>(m.routing)) {
        double es = 0.0;
        for (auto [from, to] : route_legs(m)) {
            const auto& cell = m.switchover.at(from, to);
            if (cell) es += cell->mean();
        }
        out.switchover_mean = es;
    }
    return out;
}

std::variant<ValidatedModel, std::vector<Issue>> validate(const PollingModel& m) {
    std::vector<Issue> errors, warnings;
    auto error = [&](std::optional<std::size_t> q, std::string field, std::string msg) {
        errors.push_back({Severity::Error, q, std::move(field), std::move(msg)});
    };
    const std::size_t n = m.size();
    if (n == 0) {
        error(std::nullopt, "queues", "at least one queue is required");
        return errors;
    }
    if (m.switchover.size() != n) {
        error(std::nullopt, "switchover", "matrix must be " + std::to_string(n) + "x" + std::to_string(n));
        return errors;
    }

    std::optional<std::size_t> gg_parent;
    bool all_branching = true;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& q = m.queues[i];
        if (!std::isfinite(q.lambda) || q.lambda < 0.0) error(i, "lambda", "arrival rate must be finite and >= 0");
        all_branching = all_branching && is_branching(q.discipline);
        std::visit(overloaded{
                       [&](const KLimited& k) {
                           if (k.k < 1) error(i, "discipline", "k-limited requires k >= 1");
                       },
                       [&](const Bernoulli& b) {
                           if (!(b.p >= 0.0 && b.p <= 1.0)) error(i, "discipline", "bernoulli p must lie in [0,1]");
                       },
                       [&](const GloballyGated& g) {
                           if (g.parent >= n) {
                               error(i, "discipline", "globally gated parent is not a valid queue index");
                           } else if (gg_parent && *gg_parent != g.parent) {
                               error(i, "discipline", "globally gated parent differs between queues");
                           } else {
                               gg_parent = g.parent;
                           }
                       },
                       [](const auto&) {},
                   },
                   q.discipline);
    }

    auto require_leg = [&](std::size_t from, std::size_t to) {
        if (!m.switchover.at(from, to))
            error(from, "switchover", "missing entry (" + std::to_string(from + 1) + "," + std::to_string(to + 1) + ")");
    };

    std::visit(overloaded{
                   [&](const Table& t) {
                       if (t.sequence.empty()) {
                           error(std::nullopt, "routing", "table sequence is empty");
                           return;
                       }
                       std::vector<char> seen(n, 0);
                       for (std::size_t q : t.sequence) {
                           if (q >= n) {
                               error(std::nullopt, "routing", "table entry " + std::to_string(q + 1) + " out of range");
                               return;
                           }
                           seen[q] = 1;
                       }
                       for (std::size_t i = 0; i < n; ++i)
                           if (!seen[i]) error(i, "routing", "table never visits this queue");
                   },
                   [&](const Markovian& mk) {
                       if (mk.transition.size() != n) {
                           error(std::nullopt, "routing", "transition matrix must have N rows");
                           return;
                       }
                       for (std::size_t i = 0; i < n; ++i) {
                           if (mk.transition[i].size() != n) {
                               error(i, "routing", "transition row must have N entries");
                               return;
                           }
                           double sum = 0.0;
                           for (double p : mk.transition[i]) {
                               if (!(p >= 0.0)) error(i, "routing", "transition probabilities must be >= 0");
                               sum += p;
                           }
                           if (std::abs(sum - 1.0) > 1e-12) error(i, "routing", "transition row must sum to 1");
                       }
                       if (errors.empty() && !strongly_connected(mk.transition))
                           error(std::nullopt, "routing", "routing chain is not irreducible");
                   },
                   [](const auto&) {},
               },
               m.routing);
    if (!errors.empty()) return errors;

    if (std::holds_alternative<Markovian>(m.routing)) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) require_leg(i, j);
    } else {
        for (auto [from, to] : route_legs(m)) {
            // Elevator turnarounds default to a zero-time leg.
            if (std::holds_alternative<Elevator>(m.routing) && from == to && !m.switchover.at(from, to)) continue;
            require_leg(from, to);
        }
    }
    if (!errors.empty()) return errors;

    PollingModel normalized = m;
    if (std::holds_alternative<Elevator>(m.routing)) {
        for (std::size_t i = 0; i < n; ++i)
            if (!normalized.switchover.at(i, i)) normalized.switchover.set(i, i, RandVar::deterministic(0.0));
    }

    LoadProfile lp = load(normalized);
    Stability status = Stability::Stable;
    if (lp.rho >= 1.0) {
        status = Stability::Unstable;
        warnings.push_back({Severity::Warning, std::nullopt, "load",
                            "total load rho = " + num(lp.rho) + " >= 1; the system is unstable"});
    } else if (!all_branching) {
        status = Stability::Unknown;
    }
    if (lp.switchover_mean && *lp.switchover_mean == 0.0) {
        warnings.push_back({Severity::Warning, std::nullopt, "switchover",
                            "mean total switch-over is zero; exact analysis is not available"});
    }
    return ValidatedModel(std::move(normalized), std::move(lp), status, std::move(warnings));
}

ValidatedModel validate_or_throw(const PollingModel& m) {
    auto result = validate(m);
    if (auto* issues = std::get_if<std::vector<Issue>>(&result)) {
        std::string msg = "invalid model:";
        for (const auto& issue : *issues) msg += "\n  " + to_string(issue);
        throw InputError(msg);
    }
    return std::get<ValidatedModel>(std::move(result));
}

std::string canonical_text(const PollingModel& m) {
    std::ostringstream os;
    os << "polling-model v1\n";
    os << "routing ";
    std::visit(overloaded{
                   [&](const Cyclic&) { os << "cyclic"; },
                   [&](const Elevator&) { os << "elevator"; },
                   [&](const Table& t) {
                       os << "table";
                       for (auto q : t.sequence) os << ' ' << q + 1;
                   },
                   [&](const Markovian& mk) {
                       os << "markov";
                       for (const auto& row : mk.transition) {
                           os << " |";
                           for (double p : row) os << ' ' << num(p);
                       }
                   },
               },
               m.routing);
    os << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& q = m.queues[i];
        os << "queue " << i + 1 << " lambda " << num(q.lambda) << " service " << q.service.to_string() << " discipline "
           << discipline_name(q.discipline) << " order " << (q.order == QueueOrder::Fcfs ? "fcfs" : "lcfs") << '\n';
    }
    const std::size_t n = m.switchover.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (const auto& cell = m.switchover.at(i, j)) os << "switch " << i + 1 << ' ' << j + 1 << ' ' << cell->to_string() << '\n';
    return os.str();
}

std::string content_hash(const std::string& text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < 8 && i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

}  // namespace polling
