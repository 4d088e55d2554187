#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "polling/rng.hpp"

namespace polling {

struct Deterministic {
    double value;
};

struct Exponential {
    double rate;
};

struct Erlang {
    std::uint32_t shape;
    double rate;
};

struct HyperExponential {
    std::vector<double> weights;
    std::vector<double> rates;
};

struct Uniform {
    double lower;
    double upper;
};

/// A nonnegative random variable from a closed family: every moment and
/// transform used by the exact engine is available in closed form.
///
/// Values are immutable once constructed; construction validates parameters
/// and throws `InputError` on violation. A point mass at zero is allowed so
/// that zero switch-over and turnaround legs can be expressed.
class RandVar {
public:
    using Family = std::variant<Deterministic, Exponential, Erlang, HyperExponential, Uniform>;

    static RandVar deterministic(double value);
    static RandVar exponential(double rate);
    static RandVar erlang(std::uint32_t shape, double rate);
    static RandVar hyperexponential(std::vector<double> weights, std::vector<double> rates);
    static RandVar uniform(double lower, double upper);

    /// Two-moment fit. scv == 0 gives a point mass, scv == 1/k an Erlang-k,
    /// scv >= 1 a balanced-means two-phase hyperexponential. Other scv < 1
    /// cannot be matched within the family and are rejected.
    static RandVar from_mean_scv(double mean, double scv);

    /// Parses `det(v)`, `exp(rate)`, `erlang(k,rate)`,
    /// `hyperexp(w1:r1,w2:r2,...)` or `uniform(a,b)`. Whitespace is allowed
    /// between tokens.
    static RandVar parse(std::string_view text);

    const Family& family() const noexcept { return family_; }

    double mean() const;
    double moment2() const;
    double variance() const { return moment2() - mean() * mean(); }
    double scv() const;

    /// E[exp(-omega X)]. Throws std::domain_error for omega < 0.
    double lst(double omega) const;
    /// Analytic continuation to Re(omega) >= 0.
    std::complex<double> lst(std::complex<double> omega) const;

    double sample(Rng& rng) const;

    bool is_zero() const noexcept;

    /// Canonical text form; `parse(to_string())` reproduces the value exactly.
    std::string to_string() const;

    friend bool operator==(const RandVar& a, const RandVar& b) { return a.to_string() == b.to_string(); }

private:
    explicit RandVar(Family f) : family_(std::move(f)) {}
    Family family_;
};

}  // namespace polling
