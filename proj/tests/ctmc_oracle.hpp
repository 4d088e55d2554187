#pragma once

// Stationary queue lengths of a small cyclic polling system with exponential
// service and switch-over times, by solving the truncated continuous-time
// Markov chain directly. Independent of the branching-process machinery.

#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace testing {

struct CtmcQueue {
    double lambda;
    double mu;       // service rate
    double gamma;    // rate of the switch-over leaving this queue
    bool gated;
};

struct CtmcResult {
    std::vector<double> mean_length;              // customer in service included
    std::vector<std::vector<double>> marginal;    // P(L_i = k)
    double lost_mass = 0.0;                       // probability of sitting at the truncation level
};

class CtmcOracle {
public:
    CtmcOracle(std::vector<CtmcQueue> q, int cap) : q_(std::move(q)), cap_(cap), n_(q_.size()) {}

    CtmcResult solve() {
        // State: counts, phase (2i = serving i, 2i+1 = switching after i), gated remainder.
        State start{std::vector<int>(n_, 0), 1, 0};
        index(start);
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t s = 0; s < states_.size(); ++s) {
            const State st = states_[s];
            double out = 0.0;
            auto add = [&](const State& to, double rate) {
                if (rate <= 0.0) return;
                const std::size_t t = index(to);
                trip.emplace_back(static_cast<int>(t), static_cast<int>(s), rate);
                out += rate;
            };
            for (std::size_t j = 0; j < n_; ++j)
                if (st.n[j] < cap_) {
                    State to = st;
                    ++to.n[j];
                    add(to, q_[j].lambda);
                }
            const std::size_t i = static_cast<std::size_t>(st.phase / 2);
            if (st.phase % 2 == 0) {
                State to = st;
                --to.n[i];
                if (q_[i].gated) --to.g;
                const bool more = q_[i].gated ? to.g > 0 : to.n[i] > 0;
                if (!more) {
                    to.phase = static_cast<int>(2 * i + 1);
                    to.g = 0;
                }
                add(to, q_[i].mu);
            } else {
                add(arrive_at((i + 1) % n_, st), q_[i].gamma);
            }
            trip.emplace_back(static_cast<int>(s), static_cast<int>(s), -out);
        }
        const int m = static_cast<int>(states_.size());
        // Replace the first balance equation by the normalization.
        std::vector<Eigen::Triplet<double>> a;
        for (const auto& t : trip)
            if (t.row() != 0) a.push_back(t);
        for (int c = 0; c < m; ++c) a.emplace_back(0, c, 1.0);
        Eigen::SparseMatrix<double> mat(m, m);
        mat.setFromTriplets(a.begin(), a.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(mat);
        if (lu.info() != Eigen::Success) throw std::runtime_error("ctmc factorization failed");
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        rhs[0] = 1.0;
        const Eigen::VectorXd pi = lu.solve(rhs);

        CtmcResult r;
        r.mean_length.assign(n_, 0.0);
        r.marginal.assign(n_, std::vector<double>(cap_ + 1, 0.0));
        for (int s = 0; s < m; ++s)
            for (std::size_t j = 0; j < n_; ++j) {
                r.mean_length[j] += pi[s] * states_[s].n[j];
                r.marginal[j][states_[s].n[j]] += pi[s];
                if (states_[s].n[j] == cap_) r.lost_mass += pi[s];
            }
        return r;
    }

private:
    struct State {
        std::vector<int> n;
        int phase;
        int g;
        bool operator<(const State& o) const {
            if (n != o.n) return n < o.n;
            if (phase != o.phase) return phase < o.phase;
            return g < o.g;
        }
    };

    // Server reaches queue i; an empty visit takes no time.
    State arrive_at(std::size_t i, State st) const {
        if (st.n[i] > 0) {
            st.phase = static_cast<int>(2 * i);
            st.g = q_[i].gated ? st.n[i] : 0;
        } else {
            st.phase = static_cast<int>(2 * i + 1);
            st.g = 0;
        }
        return st;
    }

    std::size_t index(const State& s) {
        auto it = ids_.find(s);
        if (it != ids_.end()) return it->second;
        ids_.emplace(s, states_.size());
        states_.push_back(s);
        return states_.size() - 1;
    }

    std::vector<CtmcQueue> q_;
    int cap_;
    std::size_t n_;
    std::map<State, std::size_t> ids_;
    std::vector<State> states_;
};

}  // namespace testing
