#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polling/sim.hpp"

namespace polling::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kInput = 2,
    kUnstable = 3,
    kUnsupported = 4,
    kValidationFailed = 5,
};

/// Runs the command line `args` (args[0] is the program name). Tables go to
/// `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline constexpr int kRecordSchema = 1;

// What the simulate table shows; built from a report or read back from a
// record file, and rendered identically either way.
struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

struct SimRow {
    std::size_t queue = 0;  // 1-based
    std::optional<Interval> wait;
    Interval queue_length;
    std::optional<Interval> cycle_time;
    std::optional<Interval> ql_visit_end;
    std::uint64_t served = 0;
};

struct SimTable {
    std::string fingerprint;
    std::size_t replications = 0;
    std::uint64_t events = 0;
    bool truncated = false;
    Interval busy, switching, idle;
    std::vector<SimRow> rows;
};

SimTable sim_table(const sim::SimReport& report);
/// Reads the pooled records of a record file. Throws InputError on a
/// malformed file or an unknown schema version.
SimTable sim_table_from_records(std::istream& in);
std::string render(const SimTable& table);

}  // namespace polling::cli
