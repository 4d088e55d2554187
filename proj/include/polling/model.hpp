#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "polling/randvar.hpp"

namespace polling {

// Service disciplines. Queue indices are 0-based in the API and 1-based in
// config files and rendered output.
struct Exhaustive {};
struct Gated {};
struct GloballyGated {
    std::size_t parent;
};
struct KLimited {
    std::uint64_t k;
};
struct Bernoulli {
    double p;
};
struct TimeLimited {
    RandVar limit;
};

using Discipline = std::variant<Exhaustive, Gated, GloballyGated, KLimited, Bernoulli, TimeLimited>;

enum class QueueOrder { Fcfs, Lcfs };

struct Cyclic {};
struct Table {
    std::vector<std::size_t> sequence;
};
struct Markovian {
    std::vector<std::vector<double>> transition;
};
struct Elevator {};

using Routing = std::variant<Cyclic, Table, Markovian, Elevator>;

struct QueueSpec {
    double lambda = 0.0;
    RandVar service = RandVar::exponential(1.0);
    Discipline discipline = Exhaustive{};
    QueueOrder order = QueueOrder::Fcfs;
};

/// N x N switch-over times; entry (i, j) is the move from queue i to queue j.
/// Entries off the visited route may be left empty.
class SwitchoverMatrix {
public:
    SwitchoverMatrix() = default;
    explicit SwitchoverMatrix(std::size_t n) : n_(n), cells_(n * n) {}

    /// Cyclic ring shorthand: entry (i, i+1 mod N) = ring[i]. The reverse legs
    /// (i+1, i) reuse the same time unless set separately, and the diagonal is
    /// a zero turnaround, so elevator routing works on a ring config.
    static SwitchoverMatrix ring(const std::vector<RandVar>& legs);

    std::size_t size() const noexcept { return n_; }
    const std::optional<RandVar>& at(std::size_t from, std::size_t to) const { return cells_[from * n_ + to]; }
    void set(std::size_t from, std::size_t to, RandVar rv) { cells_[from * n_ + to] = std::move(rv); }
    void clear(std::size_t from, std::size_t to) { cells_[from * n_ + to].reset(); }

private:
    std::size_t n_ = 0;
    std::vector<std::optional<RandVar>> cells_;
};

struct PollingModel {
    std::vector<QueueSpec> queues;
    SwitchoverMatrix switchover;
    Routing routing = Cyclic{};

    std::size_t size() const noexcept { return queues.size(); }
};

struct LoadProfile {
    std::vector<double> rho_i;
    double rho = 0.0;
    // Mean switch-over per pass of the visit sequence; absent under Markovian routing.
    std::optional<double> switchover_mean;
};

enum class Stability { Stable, Unknown, Unstable };

enum class Severity { Error, Warning };

struct Issue {
    Severity severity;
    std::optional<std::size_t> queue;
    std::string field;
    std::string message;
};

std::string to_string(const Issue& issue);
std::string to_string(Stability s);
std::string discipline_name(const Discipline& d);

/// A model that passed `validate`. Immutable; carries its load profile,
/// stability status and any warnings.
class ValidatedModel {
public:
    const PollingModel& model() const noexcept { return model_; }
    const LoadProfile& load() const noexcept { return load_; }
    Stability stability() const noexcept { return stability_; }
    const std::vector<Issue>& warnings() const noexcept { return warnings_; }
    std::size_t size() const noexcept { return model_.size(); }
    const QueueSpec& queue(std::size_t i) const { return model_.queues.at(i); }

private:
    friend std::variant<ValidatedModel, std::vector<Issue>> validate(const PollingModel& model);
    ValidatedModel(PollingModel m, LoadProfile l, Stability s, std::vector<Issue> w)
        : model_(std::move(m)), load_(std::move(l)), stability_(s), warnings_(std::move(w)) {}

    PollingModel model_;
    LoadProfile load_;
    Stability stability_;
    std::vector<Issue> warnings_;
};

/// Checks structural invariants. Returns the validated model (possibly with
/// warnings: rho >= 1, zero switch-over) or the full list of errors.
std::variant<ValidatedModel, std::vector<Issue>> validate(const PollingModel& model);

/// Like `validate`, but throws `InputError` listing every error.
ValidatedModel validate_or_throw(const PollingModel& model);

LoadProfile load(const PollingModel& model);

bool is_branching(const Discipline& d);

/// One pass of the server's visit sequence for deterministic routings
/// (cyclic: 0..N-1; table: the table; elevator: 0..N-1 then N-1..0).
/// Empty for Markovian routing.
std::vector<std::size_t> visit_sequence(const PollingModel& model);

/// Normalized text form of the model; equal models give equal text.
std::string canonical_text(const PollingModel& model);

/// Hex SHA-256 prefix of arbitrary text (16 hex digits).
std::string content_hash(const std::string& text);

inline std::string fingerprint(const PollingModel& model) { return content_hash(canonical_text(model)); }

}  // namespace polling
