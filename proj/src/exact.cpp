#include "polling/exact.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "polling/errors.hpp"

namespace polling::exact {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr std::size_t kBusyPeriodCap = 1'000'000;
constexpr double kBusyPeriodTol = 1e-14;  // must be met; iteration continues to machine precision
constexpr double kUlp = 2.3e-16;
constexpr std::size_t kBusyPeriodTail = 4000;
constexpr std::size_t kCycleCap = 1'000'000;
constexpr double kConditionWarn = 1e10;

enum class Kind { Exhaustive, Gated, GloballyGated };

// Per-queue and per-leg moments of a cyclic model, 0-based; leg i is Q_i -> Q_{i+1}.
struct Cyclic {
    std::size_t n = 0;
    Vec lambda, b, b2, s, s2;
    std::vector<Kind> kind;
    std::vector<const RandVar*> service, leg;
    double rho = 0.0, es = 0.0, es2 = 0.0;  // es2: second moment of the total switch-over
    std::vector<double> rho_i;
    std::optional<std::size_t> parent;  // set iff globally gated
};

Kind kind_of(const Discipline& d, std::size_t queue) {
    if (std::holds_alternative<Exhaustive>(d)) return Kind::Exhaustive;
    if (std::holds_alternative<Gated>(d)) return Kind::Gated;
    if (std::holds_alternative<GloballyGated>(d)) return Kind::GloballyGated;
    throw UnsupportedError("exact analysis needs exhaustive, gated or globally gated service; queue " +
                           std::to_string(queue + 1) + " is " + discipline_name(d) + " (use simulation instead)");
}

void require_stable(const ValidatedModel& vm) {
    if (vm.load().rho >= 1.0)
        throw UnstableError("unstable system: total load rho = " + std::to_string(vm.load().rho) + " >= 1",
                            vm.load().rho);
}

void require_cyclic_structure(const ValidatedModel& vm) {
    if (!std::holds_alternative<polling::Cyclic>(vm.model().routing))
        throw UnsupportedError("exact analysis covers cyclic routing only");
    if (!vm.load().switchover_mean || *vm.load().switchover_mean <= 0.0)
        throw UnsupportedError("exact analysis needs a strictly positive mean total switch-over time");
}

Cyclic prepare(const ValidatedModel& vm) {
    require_cyclic_structure(vm);
    const auto& m = vm.model();
    Cyclic c;
    c.n = m.size();
    c.lambda.resize(c.n);
    c.b.resize(c.n);
    c.b2.resize(c.n);
    c.s.resize(c.n);
    c.s2.resize(c.n);
    std::size_t gg = 0;
    for (std::size_t i = 0; i < c.n; ++i) {
        const auto& q = m.queues[i];
        c.kind.push_back(kind_of(q.discipline, i));
        if (c.kind.back() == Kind::GloballyGated) {
            ++gg;
            c.parent = std::get<GloballyGated>(q.discipline).parent;
        }
        c.lambda[i] = q.lambda;
        c.b[i] = q.service.mean();
        c.b2[i] = q.service.moment2();
        c.service.push_back(&q.service);
        const RandVar& leg = *m.switchover.at(i, (i + 1) % c.n);
        c.leg.push_back(&leg);
        c.s[i] = leg.mean();
        c.s2[i] = leg.moment2();
    }
    if (gg != 0 && gg != c.n)
        throw UnsupportedError("exact analysis of globally gated service needs every queue to be globally gated");
    c.rho_i = vm.load().rho_i;
    c.rho = vm.load().rho;
    c.es = c.s.sum();
    double var = 0.0;
    for (std::size_t i = 0; i < c.n; ++i) var += c.s2[i] - c.s[i] * c.s[i];
    c.es2 = var + c.es * c.es;
    require_stable(vm);
    return c;
}

// Queue order starting at the parent of the globally gated cycle.
std::vector<std::size_t> parent_order(const Cyclic& c) {
    std::vector<std::size_t> ord(c.n);
    for (std::size_t m = 0; m < c.n; ++m) ord[m] = (*c.parent + m) % c.n;
    return ord;
}

struct Solved {
    Vec x;
    double condition;
};

Solved solve_dense(const Mat& a, const Vec& rhs) {
    Eigen::PartialPivLU<Mat> lu(a);
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || !std::isfinite(rcond))
        throw NumericalError("singular linear system in epoch moment computation (rcond = " + std::to_string(rcond) +
                             ")");
    Solved out{lu.solve(rhs), 1.0 / rcond};
    if (!out.x.allFinite()) throw NumericalError("non-finite solution in epoch moment computation");
    return out;
}

// Solves X = P^T X P + K for symmetric X, using the N(N+1)/2 free entries as unknowns.
Solved solve_stein(const Mat& p, const Mat& k) {
    const auto n = p.rows();
    const auto dim = n * (n + 1) / 2;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    pairs.reserve(dim);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = r; c < n; ++c) pairs.emplace_back(r, c);
    Mat a(dim, dim);
    Vec rhs(dim);
    for (Eigen::Index col = 0; col < dim; ++col) {
        const auto [u, v] = pairs[col];
        // Basis E = e_u e_v^T + e_v e_u^T (or e_u e_u^T); P^T E P in closed form.
        Mat pe = p.row(u).transpose() * p.row(v);
        if (u != v) pe += p.row(v).transpose() * p.row(u);
        for (Eigen::Index row = 0; row < dim; ++row) {
            const auto [r, c] = pairs[row];
            double e = 0.0;
            if ((r == u && c == v) || (r == v && c == u)) e = 1.0;
            a(row, col) = e - pe(r, c);
        }
    }
    for (Eigen::Index row = 0; row < dim; ++row) rhs[row] = k(pairs[row].first, pairs[row].second);
    Solved s = solve_dense(a, rhs);
    Mat x(n, n);
    for (Eigen::Index idx = 0; idx < dim; ++idx) {
        const auto [r, c] = pairs[idx];
        x(r, c) = x(c, r) = s.x[idx];
    }
    return {Eigen::Map<Vec>(x.data(), n * n), s.condition};
}

// Derivatives of the offspring PGF h_i at z = 1.
struct Offspring {
    Vec grad;
    Mat hess;
};

Offspring offspring(const Cyclic& c, std::size_t i) {
    Offspring o{Vec::Zero(c.n), Mat::Zero(c.n, c.n)};
    if (c.kind[i] == Kind::Gated) {
        o.grad = c.b[i] * c.lambda;
        o.hess = c.b2[i] * c.lambda * c.lambda.transpose();
    } else {
        const double idle = 1.0 - c.rho_i[i];
        const double bp = c.b[i] / idle;
        const double bp2 = c.b2[i] / (idle * idle * idle);
        Vec lam = c.lambda;
        lam[i] = 0.0;
        o.grad = bp * lam;
        o.hess = bp2 * lam * lam.transpose();
    }
    return o;
}

struct EpochState {
    Vec first;
    Mat second;
};

// Laws of motion for cyclic exhaustive/gated models, differentiated once and twice.
class CyclicMotion {
public:
    explicit CyclicMotion(const Cyclic& c) : c_(c) {
        for (std::size_t i = 0; i < c.n; ++i) {
            Offspring o = offspring(c, i);
            Mat g = Mat::Identity(c.n, c.n);
            g.row(static_cast<Eigen::Index>(i)) = o.grad.transpose();
            jac_.push_back(std::move(g));
            hess_.push_back(std::move(o.hess));
        }
    }

    EpochState complete(std::size_t i, const EpochState& begin) const {
        const Mat& g = jac_[i];
        return {g.transpose() * begin.first,
                g.transpose() * begin.second * g + begin.first[static_cast<Eigen::Index>(i)] * hess_[i]};
    }

    EpochState switch_over(std::size_t i, const EpochState& end) const {
        const Vec& lam = c_.lambda;
        const Mat cross = end.first * lam.transpose();
        return {end.first + c_.s[i] * lam,
                end.second + c_.s[i] * (cross + cross.transpose()) + c_.s2[i] * lam * lam.transpose()};
    }

    // Product of the stage Jacobians around one cycle starting at Q_0.
    Mat cycle_jacobian() const {
        Mat p = Mat::Identity(c_.n, c_.n);
        for (const auto& g : jac_) p = p * g;
        return p;
    }

    EpochState around(const EpochState& start) const {
        EpochState st = start;
        for (std::size_t i = 0; i < c_.n; ++i) st = switch_over(i, complete(i, st));
        return st;
    }

private:
    const Cyclic& c_;
    std::vector<Mat> jac_;
    std::vector<Mat> hess_;
};

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }
std::vector<double> to_std(const Mat& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index col = 0; col < m.cols(); ++col) out[static_cast<std::size_t>(r * m.cols() + col)] = m(r, col);
    return out;
}

MomentTable cyclic_moments(const Cyclic& c) {
    const CyclicMotion motion(c);
    const auto n = static_cast<Eigen::Index>(c.n);
    const Mat p = motion.cycle_jacobian();

    // Affine cycle map on first moments: f -> P^T f + c1.
    const EpochState zero{Vec::Zero(n), Mat::Zero(n, n)};
    const Vec c1 = motion.around(zero).first;
    Solved first = solve_dense(Mat::Identity(n, n) - p.transpose(), c1);

    // Second moments: constant part from a pass that starts at the true first moments.
    const Mat k = motion.around({first.x, Mat::Zero(n, n)}).second;
    Solved second = solve_stein(p, k);

    MomentTable t;
    t.n = c.n;
    t.condition_estimate = std::max(first.condition, second.condition);
    EpochState st{first.x, Eigen::Map<Mat>(second.x.data(), n, n)};
    for (std::size_t i = 0; i < c.n; ++i) {
        t.begin_first.push_back(to_std(st.first));
        t.begin_second.push_back(to_std(st.second));
        EpochState end = motion.complete(i, st);
        t.end_first.push_back(to_std(end.first));
        t.end_second.push_back(to_std(end.second));
        st = motion.switch_over(i, end);
    }
    return t;
}

// Globally gated: the parent's visit beginning gates every queue. X = counts
// at that epoch; every other epoch is "arrivals since the gate + ungated part of X".
struct GloballyGatedState {
    Vec first;   // E[X]
    Mat second;  // E[X_j (X_k - [j == k])]
    Mat raw;     // E[X_j X_k]
    double condition = 1.0;
};

GloballyGatedState globally_gated_state(const Cyclic& c) {
    const auto n = static_cast<Eigen::Index>(c.n);
    // Each gated customer of queue j is replaced by the arrivals during its service.
    const Mat jac = c.b * c.lambda.transpose();
    Solved first = solve_dense(Mat::Identity(n, n) - jac.transpose(), c.es * c.lambda);
    const Vec fc = jac.transpose() * first.x;
    const Mat cross = fc * c.lambda.transpose();
    const Mat k = (c.b2.dot(first.x) + c.es2) * c.lambda * c.lambda.transpose() + c.es * (cross + cross.transpose());
    Solved second = solve_stein(jac, k);
    GloballyGatedState st;
    st.first = first.x;
    st.second = Eigen::Map<Mat>(second.x.data(), n, n);
    st.raw = st.second;
    st.raw.diagonal() += st.first;
    st.condition = std::max(first.condition, second.condition);
    return st;
}

// Moments of tau = (service of the gated customers in `served`) + (legs in `legs`).
struct ElapsedMoments {
    double mean = 0.0;
    double second = 0.0;
    Vec with_x;  // E[tau X_k]
};

ElapsedMoments elapsed(const Cyclic& c, const GloballyGatedState& st, const std::vector<std::size_t>& served,
                       const std::vector<std::size_t>& legs) {
    ElapsedMoments e;
    e.with_x = Vec::Zero(static_cast<Eigen::Index>(c.n));
    double work_mean = 0.0, work_second = 0.0;
    for (std::size_t j : served) {
        const auto jj = static_cast<Eigen::Index>(j);
        work_mean += st.first[jj] * c.b[jj];
        for (std::size_t k : served) {
            const auto kk = static_cast<Eigen::Index>(k);
            work_second += st.raw(jj, kk) * c.b[jj] * c.b[kk];
        }
        work_second += st.first[jj] * (c.b2[jj] - c.b[jj] * c.b[jj]);
        e.with_x += c.b[jj] * st.raw.row(jj).transpose();
    }
    double leg_mean = 0.0, leg_var = 0.0;
    for (std::size_t j : legs) {
        leg_mean += c.s[static_cast<Eigen::Index>(j)];
        leg_var += c.s2[static_cast<Eigen::Index>(j)] - c.s[static_cast<Eigen::Index>(j)] * c.s[static_cast<Eigen::Index>(j)];
    }
    e.mean = work_mean + leg_mean;
    e.second = work_second + 2.0 * work_mean * leg_mean + leg_var + leg_mean * leg_mean;
    e.with_x += leg_mean * st.first;
    return e;
}

// Joint moments of L_j = A_j(tau) + u_j X_j.
void fill_epoch(const Cyclic& c, const GloballyGatedState& st, const ElapsedMoments& e, const std::vector<char>& unserved,
                std::vector<double>& first, std::vector<double>& second) {
    const std::size_t n = c.n;
    first.assign(n, 0.0);
    second.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        first[j] = c.lambda[jj] * e.mean + (unserved[j] ? st.first[jj] : 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            double v = c.lambda[jj] * c.lambda[kk] * e.second;
            if (unserved[k]) v += c.lambda[jj] * e.with_x[kk];
            if (unserved[j]) v += c.lambda[kk] * e.with_x[jj];
            if (unserved[j] && unserved[k]) v += st.second(jj, kk);
            second[j * n + k] = v;
        }
    }
}

MomentTable globally_gated_moments(const Cyclic& c) {
    const GloballyGatedState st = globally_gated_state(c);
    const auto ord = parent_order(c);
    MomentTable t;
    t.n = c.n;
    t.condition_estimate = st.condition;
    t.begin_first.resize(c.n);
    t.begin_second.resize(c.n);
    t.end_first.resize(c.n);
    t.end_second.resize(c.n);
    std::vector<std::size_t> served, legs;
    std::vector<char> unserved(c.n, 1);
    for (std::size_t r = 0; r < c.n; ++r) {
        const std::size_t q = ord[r];
        fill_epoch(c, st, elapsed(c, st, served, legs), unserved, t.begin_first[q], t.begin_second[q]);
        served.push_back(q);
        unserved[q] = 0;
        fill_epoch(c, st, elapsed(c, st, served, legs), unserved, t.end_first[q], t.end_second[q]);
        legs.push_back(q);
    }
    return t;
}

template <class T>
T busy_period_impl(const RandVar& service, double lambda, T omega) {
    if (omega == T(0.0)) return T(1.0);
    if (lambda == 0.0) return service.lst(omega);
    T pi = 1.0;
    double damping = 1.0;
    double last_step = std::numeric_limits<double>::infinity();
    std::size_t tail = 0;
    for (std::size_t it = 0; it < kBusyPeriodCap; ++it) {
        const T next = service.lst(omega + lambda * (T(1.0) - pi));
        const double step = std::abs(next - pi);
        // Near omega = 0 the signal is 1 - pi, so keep refining past the
        // required tolerance until rounding level, with a bounded tail.
        if (step <= 2.0 * kUlp * std::abs(next)) return next;
        if (step <= kBusyPeriodTol && ++tail > kBusyPeriodTail) return next;
        if (step > last_step && step > kBusyPeriodTol) damping = 0.5;
        last_step = step;
        pi = pi + damping * (next - pi);
    }
    throw NumericalError("busy-period fixed point did not converge");
}

// PGF evaluation along the laws of motion, for real or complex arguments.
template <class T>
class PgfEvaluator {
public:
    explicit PgfEvaluator(const Cyclic& c) : c_(c) {}

    T arrivals_exponent(const std::vector<T>& y, std::optional<std::size_t> skip = std::nullopt) const {
        T a = 0.0;
        for (std::size_t j = 0; j < c_.n; ++j)
            if (!skip || *skip != j) a += c_.lambda[static_cast<Eigen::Index>(j)] * (T(1.0) - y[j]);
        return a;
    }

    T h(std::size_t i, const std::vector<T>& y) const {
        if (c_.kind[i] == Kind::Gated) return c_.service[i]->lst(arrivals_exponent(y));
        return busy_period_impl<T>(*c_.service[i], c_.lambda[static_cast<Eigen::Index>(i)], arrivals_exponent(y, i));
    }

    static double max_gap(const std::vector<T>& y) {
        double g = 0.0;
        for (const T& v : y) g = std::max(g, std::abs(v - T(1.0)));
        return g;
    }

    // The remaining factors differ from 1 by O(|1 - y|); stop at rounding level.
    static bool at_one(const std::vector<T>& y) {
        for (const T& v : y)
            if (std::abs(v - T(1.0)) > 2.0 * kUlp) return false;
        return true;
    }

    // Visit-beginning PGF of Q_0 (cyclic) by iterating the cycle map to its fixed point 1.
    T anchor(std::vector<T> y) const {
        T acc = 1.0;
        for (std::size_t it = 0; it < kCycleCap; ++it) {
            if (at_one(y)) return acc;
            const std::vector<T> before = y;
            for (std::size_t i = c_.n; i-- > 0;) {
                acc *= c_.leg[i]->lst(arrivals_exponent(y));
                y[i] = h(i, y);
            }
            if (y == before && max_gap(y) < 1e-14) return acc;
        }
        throw NumericalError("PGF cycle iteration did not converge");
    }

    T visit_begin(std::size_t i, std::vector<T> y) const {
        T acc = 1.0;
        for (std::size_t j = i; j-- > 0;) {
            acc *= c_.leg[j]->lst(arrivals_exponent(y));
            y[j] = h(j, y);
        }
        return acc * anchor(std::move(y));
    }

    T visit_end(std::size_t i, std::vector<T> y) const {
        y[i] = h(i, y);
        return visit_begin(i, std::move(y));
    }

    // Globally gated: joint PGF of X at the parent's visit beginning.
    T gated_anchor(std::vector<T> y) const {
        T acc = 1.0;
        for (std::size_t it = 0; it < kCycleCap; ++it) {
            if (at_one(y)) return acc;
            const std::vector<T> before = y;
            const T a = arrivals_exponent(y);
            for (std::size_t i = 0; i < c_.n; ++i) acc *= c_.leg[i]->lst(a);
            for (std::size_t j = 0; j < c_.n; ++j) y[j] = c_.service[j]->lst(a);
            if (y == before && max_gap(y) < 1e-14) return acc;
        }
        throw NumericalError("PGF cycle iteration did not converge");
    }

    // Marginal PGF of queue i at its visit beginning (end = false) or completion.
    T marginal(std::size_t i, T z, bool end) const {
        if (!c_.parent) {
            std::vector<T> y(c_.n, T(1.0));
            y[i] = z;
            return end ? visit_end(i, std::move(y)) : visit_begin(i, std::move(y));
        }
        const auto ord = parent_order(c_);
        const T theta = c_.lambda[static_cast<Eigen::Index>(i)] * (T(1.0) - z);
        std::vector<T> y(c_.n, T(1.0));
        T acc = 1.0;
        for (std::size_t r = 0; r < c_.n; ++r) {
            const std::size_t q = ord[r];
            if (q == i) {
                y[q] = end ? c_.service[q]->lst(theta) : z;
                break;
            }
            y[q] = c_.service[q]->lst(theta);
            acc *= c_.leg[q]->lst(theta);
        }
        return acc * gated_anchor(std::move(y));
    }

private:
    const Cyclic& c_;
};

template <class T>
T marginal_ql_impl(const ValidatedModel& vm, std::size_t i, T z) {
    const Cyclic c = prepare(vm);
    if (i >= c.n) throw std::out_of_range("queue index out of range");
    const double lambda = c.lambda[static_cast<Eigen::Index>(i)];
    if (z == T(1.0) || lambda == 0.0) return T(1.0);
    const PgfEvaluator<T> eval(c);
    const double rho_i = c.rho_i[i];
    const double intervisit = (1.0 - rho_i) * c.es / (1.0 - c.rho);
    const T bz = c.service[i]->lst(lambda * (T(1.0) - z));
    const T mg1 = (1.0 - rho_i) * bz / (bz - z);  // (1 - z) factor cancelled against the intervisit term
    const T intervisit_part = (eval.marginal(i, z, true) - eval.marginal(i, z, false)) / (lambda * intervisit);
    return mg1 * intervisit_part;
}

}  // namespace

BasicQuantities basic_quantities(const ValidatedModel& vm) {
    require_cyclic_structure(vm);
    for (std::size_t i = 0; i < vm.size(); ++i) kind_of(vm.queue(i).discipline, i);
    require_stable(vm);
    const auto& lp = vm.load();
    BasicQuantities out;
    out.cycle = *lp.switchover_mean / (1.0 - lp.rho);
    for (double r : lp.rho_i) {
        out.visit.push_back(r * out.cycle);
        out.intervisit.push_back((1.0 - r) * out.cycle);
    }
    return out;
}

double busy_period_lst(const ValidatedModel& vm, std::size_t i, double omega) {
    if (!(omega >= 0.0)) throw std::domain_error("busy_period_lst: omega must be nonnegative");
    const auto& q = vm.queue(i);
    if (vm.load().rho_i[i] >= 1.0) throw UnstableError("busy period is infinite: rho_i >= 1", vm.load().rho_i[i]);
    return busy_period_impl<double>(q.service, q.lambda, omega);
}

std::complex<double> busy_period_lst(const ValidatedModel& vm, std::size_t i, std::complex<double> omega) {
    if (!(omega.real() >= 0.0)) throw std::domain_error("busy_period_lst: Re(omega) must be nonnegative");
    const auto& q = vm.queue(i);
    if (vm.load().rho_i[i] >= 1.0) throw UnstableError("busy period is infinite: rho_i >= 1", vm.load().rho_i[i]);
    return busy_period_impl<std::complex<double>>(q.service, q.lambda, omega);
}

double branching_pgf(const ValidatedModel& vm, std::size_t i, std::span<const double> z) {
    const std::size_t n = vm.size();
    if (i >= n) throw std::out_of_range("queue index out of range");
    if (z.size() != n) throw std::invalid_argument("branching_pgf: z must have one entry per queue");
    for (double v : z)
        if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("branching_pgf: z must lie in [0,1]^N");
    const auto& q = vm.queue(i);
    const bool gated = std::holds_alternative<Gated>(q.discipline);
    if (!gated && !std::holds_alternative<Exhaustive>(q.discipline))
        throw UnsupportedError("offspring PGF is defined for exhaustive and gated queues only; queue " +
                               std::to_string(i + 1) + " is " + discipline_name(q.discipline));
    double a = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (gated || j != i) a += vm.queue(j).lambda * (1.0 - z[j]);
    return gated ? q.service.lst(a) : busy_period_lst(vm, i, a);
}

MomentTable epoch_moments(const ValidatedModel& vm) {
    const Cyclic c = prepare(vm);
    return c.parent ? globally_gated_moments(c) : cyclic_moments(c);
}

double marginal_ql_pgf(const ValidatedModel& vm, std::size_t i, double z) {
    if (!(z >= 0.0 && z <= 1.0)) throw std::domain_error("marginal_ql_pgf: z must lie in [0,1]");
    return marginal_ql_impl<double>(vm, i, z);
}

std::complex<double> marginal_ql_pgf(const ValidatedModel& vm, std::size_t i, std::complex<double> z) {
    if (!(std::abs(z) <= 1.0)) throw std::domain_error("marginal_ql_pgf: |z| must be at most 1");
    return marginal_ql_impl<std::complex<double>>(vm, i, z);
}

std::vector<double> ql_point_masses(const ValidatedModel& vm, std::size_t i, std::size_t kmax) {
    if (kmax > 20) throw std::invalid_argument("ql_point_masses: kmax must not exceed 20");
    constexpr std::size_t points = 256;
    constexpr double radius = 0.8;
    std::vector<std::complex<double>> values(points);
    for (std::size_t m = 0; m < points; ++m) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) / points;
        values[m] = marginal_ql_pgf(vm, i, std::polar(radius, theta));
    }
    std::vector<double> out(kmax + 1);
    for (std::size_t k = 0; k <= kmax; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t m = 0; m < points; ++m) {
            const double theta = 2.0 * std::numbers::pi * static_cast<double>(m * k % points) / points;
            acc += values[m] * std::polar(1.0, -theta);
        }
        out[k] = acc.real() / (points * std::pow(radius, static_cast<double>(k)));
    }
    return out;
}

ExactReport mean_waits(const ValidatedModel& vm) {
    const Cyclic c = prepare(vm);
    const MomentTable t = c.parent ? globally_gated_moments(c) : cyclic_moments(c);
    ExactReport r;
    r.basics = basic_quantities(vm);
    r.rho_i = c.rho_i;
    r.rho = c.rho;
    r.condition_estimate = t.condition_estimate;
    if (t.condition_estimate > kConditionWarn)
        r.warnings.push_back("ill-conditioned epoch moment system (condition ~ " + std::to_string(t.condition_estimate) +
                             ")");
    if (c.parent) r.parent_cycle_second_moment = globally_gated_cycle_second_moment(vm);
    for (std::size_t i = 0; i < c.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double lambda = c.lambda[ii];
        if (lambda == 0.0) {
            r.mean_wait.emplace_back();
            r.mean_queue_length.push_back(0.0);
            r.cycle_second_moment.push_back(c.parent ? r.parent_cycle_second_moment : std::nullopt);
            continue;
        }
        // Derivative at z = 1 of the decomposition: isolated M/G/1 part plus
        // intervisit part (difference of epoch factorial moments).
        const double idle = 1.0 - c.rho_i[i];
        const double fb = t.begin2(i, i, i);
        const double fc = t.end2(i, i, i);
        const double mean_length = c.rho_i[i] + lambda * lambda * c.b2[ii] / (2.0 * idle) +
                                   (fb - fc) / (2.0 * lambda * r.basics.intervisit[i]);
        const double w = mean_length / lambda - c.b[ii];
        r.mean_wait.emplace_back(w);
        r.mean_queue_length.push_back(mean_length);
        switch (c.kind[i]) {
            case Kind::Gated: r.cycle_second_moment.emplace_back(fb / (lambda * lambda)); break;
            case Kind::Exhaustive: r.cycle_second_moment.emplace_back(2.0 * r.basics.cycle * w / idle); break;
            case Kind::GloballyGated: r.cycle_second_moment.push_back(r.parent_cycle_second_moment); break;
        }
    }
    r.pcl = pcl_check(vm, r.mean_wait);
    return r;
}

double waiting_lst(const ValidatedModel& vm, std::size_t i, double omega) {
    const auto& q = vm.queue(i);
    if (q.order != QueueOrder::Fcfs)
        throw UnsupportedError("waiting-time LST needs FCFS order; under LCFS the waiting-time distribution differs");
    if (q.lambda == 0.0) throw std::domain_error("waiting_lst: undefined for a queue without arrivals");
    if (!(omega >= 0.0)) throw std::domain_error("waiting_lst: omega must be nonnegative");
    const double z = 1.0 - omega / q.lambda;
    if (z < 0.0) throw std::domain_error("waiting_lst: omega exceeds lambda_i, PGF argument below 0");
    if (omega == 0.0) {
        prepare(vm);
        return 1.0;
    }
    return marginal_ql_pgf(vm, i, z) / q.service.lst(omega);
}

PclResult pcl_check(const ValidatedModel& vm, std::span<const std::optional<double>> mean_wait) {
    PclResult out;
    const auto& m = vm.model();
    if (mean_wait.size() != m.size()) throw std::invalid_argument("pcl_check: one mean wait per queue required");
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& d = m.queues[i].discipline;
        if (!std::holds_alternative<Exhaustive>(d) && !std::holds_alternative<Gated>(d)) {
            out.reason = "work left behind at visit completion is unknown for " + discipline_name(d) + " (queue " +
                         std::to_string(i + 1) + ")";
            return out;
        }
    }
    const Cyclic c = prepare(vm);
    double lhs = 0.0, arrivals_b2 = 0.0, rho_sq = 0.0, left_behind = 0.0;
    for (std::size_t i = 0; i < c.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (c.rho_i[i] > 0.0) {
            if (!mean_wait[i]) throw std::invalid_argument("pcl_check: missing mean wait for a loaded queue");
            lhs += c.rho_i[i] * *mean_wait[i];
        }
        arrivals_b2 += c.lambda[ii] * c.b2[ii];
        rho_sq += c.rho_i[i] * c.rho_i[i];
        if (c.kind[i] == Kind::Gated) left_behind += c.rho_i[i] * c.rho_i[i] * c.es / (1.0 - c.rho);
    }
    const double rho = c.rho;
    out.rhs = rho * arrivals_b2 / (2.0 * (1.0 - rho)) + rho * c.es2 / (2.0 * c.es) +
              c.es / (2.0 * (1.0 - rho)) * (rho * rho - rho_sq) + left_behind;
    out.lhs = lhs;
    out.residual = std::abs(out.lhs - out.rhs);
    out.residual_rel = out.rhs != 0.0 ? out.residual / std::abs(out.rhs) : out.residual;
    out.status = PclStatus::Checked;
    return out;
}

double gated_wait_from_cycle(const ValidatedModel& vm, const MomentTable& table, std::size_t i) {
    const auto& q = vm.queue(i);
    if (!std::holds_alternative<Gated>(q.discipline)) throw UnsupportedError("queue is not gated");
    if (q.lambda == 0.0) throw std::domain_error("gated_wait_from_cycle: lambda_i = 0");
    const BasicQuantities bq = basic_quantities(vm);
    const double c2 = table.begin2(i, i, i) / (q.lambda * q.lambda);
    return (1.0 + vm.load().rho_i[i]) * c2 / (2.0 * bq.cycle);
}

double globally_gated_cycle_second_moment(const ValidatedModel& vm) {
    const Cyclic c = prepare(vm);
    if (!c.parent) throw UnsupportedError("model is not globally gated");
    const double ec = c.es / (1.0 - c.rho);
    const double arrivals_b2 = c.lambda.dot(c.b2);
    // E[C^2] = rho^2 E[C^2] + E[C] sum(lambda_j E[B_j^2]) + 2 rho E[C] E[S] + E[S^2]
    return (ec * arrivals_b2 + 2.0 * c.rho * ec * c.es + c.es2) / (1.0 - c.rho * c.rho);
}

std::vector<double> globally_gated_waits(const ValidatedModel& vm) {
    const Cyclic c = prepare(vm);
    if (!c.parent) throw UnsupportedError("model is not globally gated");
    const double ec = c.es / (1.0 - c.rho);
    const double c2 = globally_gated_cycle_second_moment(vm);
    std::vector<double> out(c.n);
    double legs_before = 0.0, rho_before = 0.0;
    for (std::size_t q : parent_order(c)) {
        out[q] = legs_before + (1.0 + 2.0 * rho_before + c.rho_i[q]) * c2 / (2.0 * ec);
        legs_before += c.s[static_cast<Eigen::Index>(q)];
        rho_before += c.rho_i[q];
    }
    return out;
}

}  // namespace polling::exact
