#include "polling/randvar.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "polling/errors.hpp"

namespace polling {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

// sinh(u) / u without cancellation near u = 0, for real and complex u.
template <class T>
T sinhc(T u) {
    if (std::abs(u) < 0.5) {
        // Taylor series; the next omitted term is below 1e-17.
        const T u2 = u * u;
        T acc = 1.0;
        for (int k = 8; k >= 1; --k) acc = T(1.0) + acc * u2 / static_cast<double>((2 * k) * (2 * k + 1));
        return acc;
    }
    return std::sinh(u) / u;
}

template <class T>
T lst_impl(const RandVar::Family& family, T omega) {
    return std::visit(
        overloaded{
            [&](const Deterministic& d) -> T { return std::exp(-omega * d.value); },
            [&](const Exponential& e) -> T { return e.rate / (e.rate + omega); },
            [&](const Erlang& e) -> T {
                const T base = e.rate / (e.rate + omega);
                T out = 1.0;
                for (std::uint32_t i = 0; i < e.shape; ++i) out *= base;
                return out;
            },
            [&](const HyperExponential& h) -> T {
                T out = 0.0;
                for (std::size_t i = 0; i < h.rates.size(); ++i) out += h.weights[i] * h.rates[i] / (h.rates[i] + omega);
                return out;
            },
            [&](const Uniform& u) -> T {
                // Midpoint form: exp(-w m) sinh(w h) / (w h), m the midpoint, h the half-width.
                const double mid = 0.5 * (u.lower + u.upper), half = 0.5 * (u.upper - u.lower);
                return std::exp(-omega * mid) * sinhc<T>(omega * half);
            },
        },
        family);
}

void append_number(std::string& out, double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    out.append(buf, res.ptr);
}

// Minimal recursive-descent reader for the distribution syntax.
class Reader {
public:
    explicit Reader(std::string_view s) : s_(s) {}

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    std::string_view ident() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        return s_.substr(start, pos_ - start);
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    double number() {
        skip_ws();
        double value = 0.0;
        const char* first = s_.data() + pos_;
        const char* last = s_.data() + s_.size();
        if (pos_ < s_.size() && s_[pos_] == '+') ++first;
        auto res = std::from_chars(first, last, value);
        if (res.ec != std::errc{}) fail("expected a number");
        pos_ = static_cast<std::size_t>(res.ptr - s_.data());
        return value;
    }

    void end() {
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing text");
    }

    [[noreturn]] void fail(const std::string& why) const {
        throw InputError("bad distribution '" + std::string(s_) + "' at offset " + std::to_string(pos_) + ": " + why);
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

RandVar RandVar::deterministic(double value) {
    require(std::isfinite(value) && value >= 0.0, "det: value must be finite and nonnegative");
    return RandVar(Deterministic{value});
}

RandVar RandVar::exponential(double rate) {
    require(finite_positive(rate), "exp: rate must be positive");
    return RandVar(Exponential{rate});
}

RandVar RandVar::erlang(std::uint32_t shape, double rate) {
    require(shape >= 1, "erlang: shape must be at least 1");
    require(finite_positive(rate), "erlang: rate must be positive");
    return RandVar(Erlang{shape, rate});
}

RandVar RandVar::hyperexponential(std::vector<double> weights, std::vector<double> rates) {
    require(!weights.empty() && weights.size() == rates.size(), "hyperexp: need matching nonempty weight and rate lists");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        require(std::isfinite(weights[i]) && weights[i] >= 0.0, "hyperexp: weights must be nonnegative");
        require(finite_positive(rates[i]), "hyperexp: rates must be positive");
        total += weights[i];
    }
    require(std::abs(total - 1.0) <= 1e-12, "hyperexp: weights must sum to 1");
    return RandVar(HyperExponential{std::move(weights), std::move(rates)});
}

RandVar RandVar::uniform(double lower, double upper) {
    require(std::isfinite(lower) && std::isfinite(upper) && lower >= 0.0 && lower < upper,
            "uniform: need 0 <= lower < upper");
    return RandVar(Uniform{lower, upper});
}

RandVar RandVar::from_mean_scv(double mean, double scv) {
    require(finite_positive(mean), "from_mean_scv: mean must be positive");
    require(std::isfinite(scv) && scv >= 0.0, "from_mean_scv: scv must be nonnegative");
    if (scv == 0.0) return deterministic(mean);
    if (scv >= 1.0) {
        if (scv == 1.0) return exponential(1.0 / mean);
        // Balanced means: w1/r1 = w2/r2 = mean/2.
        const double w1 = 0.5 * (1.0 + std::sqrt((scv - 1.0) / (scv + 1.0)));
        const double w2 = 1.0 - w1;
        return hyperexponential({w1, w2}, {2.0 * w1 / mean, 2.0 * w2 / mean});
    }
    const double k = std::round(1.0 / scv);
    if (k >= 1.0 && std::abs(1.0 / k - scv) <= 1e-12) {
        const auto shape = static_cast<std::uint32_t>(k);
        return erlang(shape, k / mean);
    }
    throw InputError("from_mean_scv: scv in (0,1) must equal 1/k for an integer k");
}

RandVar RandVar::parse(std::string_view text) {
    Reader r(text);
    const std::string_view name = r.ident();
    r.expect('(');
    RandVar out = [&]() -> RandVar {
        if (name == "det") return deterministic(r.number());
        if (name == "exp") return exponential(r.number());
        if (name == "erlang") {
            const double k = r.number();
            if (k < 1.0 || k != std::floor(k) || k > 1e9) r.fail("erlang shape must be a positive integer");
            r.expect(',');
            return erlang(static_cast<std::uint32_t>(k), r.number());
        }
        if (name == "hyperexp") {
            std::vector<double> w, rates;
            do {
                w.push_back(r.number());
                r.expect(':');
                rates.push_back(r.number());
            } while (r.accept(','));
            return hyperexponential(std::move(w), std::move(rates));
        }
        if (name == "uniform") {
            const double a = r.number();
            r.expect(',');
            return uniform(a, r.number());
        }
        r.fail("unknown family '" + std::string(name) + "'");
    }();
    r.expect(')');
    r.end();
    return out;
}

double RandVar::mean() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [](const Exponential& e) { return 1.0 / e.rate; },
                          [](const Erlang& e) { return e.shape / e.rate; },
                          [](const HyperExponential& h) {
                              double m = 0.0;
                              for (std::size_t i = 0; i < h.rates.size(); ++i) m += h.weights[i] / h.rates[i];
                              return m;
                          },
                          [](const Uniform& u) { return 0.5 * (u.lower + u.upper); },
                      },
                      family_);
}

double RandVar::moment2() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value * d.value; },
                          [](const Exponential& e) { return 2.0 / (e.rate * e.rate); },
                          [](const Erlang& e) { return e.shape * (e.shape + 1.0) / (e.rate * e.rate); },
                          [](const HyperExponential& h) {
                              double m = 0.0;
                              for (std::size_t i = 0; i < h.rates.size(); ++i)
                                  m += 2.0 * h.weights[i] / (h.rates[i] * h.rates[i]);
                              return m;
                          },
                          [](const Uniform& u) {
                              return (u.lower * u.lower + u.lower * u.upper + u.upper * u.upper) / 3.0;
                          },
                      },
                      family_);
}

double RandVar::scv() const {
    const double m = mean();
    return m > 0.0 ? variance() / (m * m) : 0.0;
}

double RandVar::lst(double omega) const {
    if (!(omega >= 0.0)) throw std::domain_error("lst: omega must be nonnegative");
    if (omega == 0.0) return 1.0;
    return lst_impl<double>(family_, omega);
}

std::complex<double> RandVar::lst(std::complex<double> omega) const {
    if (!(omega.real() >= 0.0)) throw std::domain_error("lst: Re(omega) must be nonnegative");
    if (omega == 0.0) return 1.0;
    return lst_impl<std::complex<double>>(family_, omega);
}

double RandVar::sample(Rng& rng) const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [&](const Exponential& e) { return -std::log1p(-rng.uniform()) / e.rate; },
                          [&](const Erlang& e) {
                              double s = 0.0;
                              for (std::uint32_t i = 0; i < e.shape; ++i) s -= std::log1p(-rng.uniform());
                              return s / e.rate;
                          },
                          [&](const HyperExponential& h) {
                              const double u = rng.uniform();
                              std::size_t phase = h.rates.size() - 1;
                              double acc = 0.0;
                              for (std::size_t i = 0; i < h.rates.size(); ++i) {
                                  acc += h.weights[i];
                                  if (u < acc) {
                                      phase = i;
                                      break;
                                  }
                              }
                              return -std::log1p(-rng.uniform()) / h.rates[phase];
                          },
                          [&](const Uniform& u) { return u.lower + (u.upper - u.lower) * rng.uniform(); },
                      },
                      family_);
}

bool RandVar::is_zero() const noexcept {
    const auto* d = std::get_if<Deterministic>(&family_);
    return d != nullptr && d->value == 0.0;
}

std::string RandVar::to_string() const {
    std::string out;
    std::visit(overloaded{
                   [&](const Deterministic& d) {
                       out = "det(";
                       append_number(out, d.value);
                   },
                   [&](const Exponential& e) {
                       out = "exp(";
                       append_number(out, e.rate);
                   },
                   [&](const Erlang& e) {
                       out = "erlang(" + std::to_string(e.shape) + ",";
                       append_number(out, e.rate);
                   },
                   [&](const HyperExponential& h) {
                       out = "hyperexp(";
                       for (std::size_t i = 0; i < h.rates.size(); ++i) {
                           if (i) out += ',';
                           append_number(out, h.weights[i]);
                           out += ':';
                           append_number(out, h.rates[i]);
                       }
                   },
                   [&](const Uniform& u) {
                       out = "uniform(";
                       append_number(out, u.lower);
                       out += ',';
                       append_number(out, u.upper);
                   },
               },
               family_);
    out += ')';
    return out;
}

}  // namespace polling
