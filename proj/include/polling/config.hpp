#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "polling/model.hpp"
#include "polling/scenarios.hpp"

namespace polling::config {

/// Parsed config file. Every section is optional but at least one must be
/// present. See docs/config.md for the grammar.
struct ConfigFile {
    std::optional<PollingModel> model;
    std::optional<scenarios::SelspSpec> selsp;
    std::optional<scenarios::TrafficSpec> traffic;
    std::string fingerprint;  // hash of the normalized content of all sections
};

/// Throws ConfigError with the offending line and column.
ConfigFile parse(std::string_view text);

/// Reads and parses a file; a missing or unreadable file is an InputError.
ConfigFile load_file(const std::string& path);

Discipline parse_discipline(std::string_view text);

std::string canonical_text(const scenarios::SelspSpec& spec);
std::string canonical_text(const scenarios::TrafficSpec& spec);

}  // namespace polling::config
