#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "polling/exact.hpp"
#include "polling/model.hpp"
#include "polling/sim.hpp"

namespace polling::scenarios {

// ---- Stochastic economic lot scheduling, fixed-sequence base-stock policy ----
//
// Each product is a queue: demands are Poisson arrivals, production runs are
// services and setups are switch-overs. The queue length is the shortfall and
// net stock = base stock - shortfall.

using LotPolicy = std::variant<Exhaustive, Gated, KLimited>;

struct Product {
    std::string name;
    double demand_rate = 0.0;
    RandVar production = RandVar::exponential(1.0);
    RandVar setup = RandVar::deterministic(0.0);  // incurred when switching into this product
    std::uint64_t base_stock = 0;
    LotPolicy lot_policy = Exhaustive{};
};

struct SelspSpec {
    std::vector<Product> products;
    std::vector<std::size_t> sequence;  // production order; a permutation gives cyclic routing
};

struct ProductReport {
    double mean_shortfall = 0.0;                // exact when available, else simulated
    std::optional<double> exact_shortfall;
    std::optional<Estimate> simulated_shortfall;
    double mean_net_stock = 0.0;                // base_stock - mean_shortfall
    double fill_rate = 0.0;                     // P(shortfall < base_stock) from the histogram
    std::optional<double> exact_fill_rate;      // from PGF point masses, base_stock <= 21
    std::vector<std::uint64_t> shortfall_histogram;
};

struct SelspReport {
    std::vector<ProductReport> products;
    bool exact_available = false;
};

/// Polling model of a lot-scheduling spec, plus the product -> queue map.
struct SelspModel {
    PollingModel model;
    std::vector<std::size_t> queue_of_product;
};

SelspModel build_selsp_model(const SelspSpec& spec);

/// Throws InputError (bad spec) or UnstableError (rho >= 1).
SelspReport selsp_evaluate(const SelspSpec& spec, const sim::SimConfig& cfg);

/// Fill rate P(L < b) from a histogram whose last bin collects levels >= cap.
/// Returns nullopt when b exceeds the cap (the histogram cannot resolve it).
std::optional<double> fill_rate_from_histogram(const std::vector<std::uint64_t>& histogram, std::uint64_t b);

struct BaseStockChoice {
    std::uint64_t base_stock = 0;
    double fill_rate = 0.0;
    bool lower_bound = false;  // histogram cap reached before the target
};

/// Smallest base stock per product whose estimated fill rate reaches the
/// target. One simulation serves every b because the shortfall does not
/// depend on the base-stock levels.
std::vector<BaseStockChoice> selsp_basestock_search(const SelspSpec& spec, double target_fill,
                                                     const sim::SimConfig& cfg);

// ---- Signalized intersection ----
//
// Each traffic flow is a queue, vehicle discharge is service and the
// all-red clearance after a phase is the switch-over.

using SignalControl = std::variant<Exhaustive, KLimited, TimeLimited>;

struct Flow {
    std::string name;
    double arrival_rate = 0.0;
    RandVar headway = RandVar::deterministic(2.0);
    SignalControl control = Exhaustive{};
};

struct TrafficSpec {
    std::vector<Flow> flows;
    std::vector<RandVar> clearance;  // clearance[i] follows the green of flow i
};

enum class Engine { Auto, Exact, Simulation };

struct FlowReport {
    double mean_delay = 0.0;                // waiting time before discharge starts
    std::optional<double> delay_half_width;  // absent for exact results
    double mean_overflow = 0.0;             // queue left at the end of green
    std::optional<double> overflow_half_width;
};

struct TrafficReport {
    std::vector<FlowReport> flows;
    Engine engine = Engine::Exact;  // engine actually used
};

PollingModel build_traffic_model(const TrafficSpec& spec);

/// Auto uses the exact engine when every flow is exhaustive and the
/// simulator otherwise.
TrafficReport traffic_evaluate(const TrafficSpec& spec, const sim::SimConfig& cfg, Engine engine = Engine::Auto);

}  // namespace polling::scenarios
