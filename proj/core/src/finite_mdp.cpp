#include "dpreach/finite_mdp.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "dpreach/errors.hpp"
#include "dpreach/rng.hpp"

namespace dpreach {
namespace {

constexpr double kRowSumTol = 1e-12;

// P_sigma d, using the sparse rows.
ValueVector propagate(const FiniteMDP& mdp, const FinitePolicy& sigma, const ValueVector& d) {
    ValueVector out(mdp.n_states());
    for (std::size_t x = 0; x < mdp.n_states(); ++x) out[x] = mdp.expectation(x, sigma.action[x], d);
    return out;
}

}  // namespace

Distribution Distribution::delta(std::size_t n_states, std::size_t state) {
    if (state >= n_states) throw std::out_of_range("delta: state out of range");
    Distribution rho{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_states))};
    rho.p[static_cast<Eigen::Index>(state)] = 1.0;
    return rho;
}

Distribution Distribution::uniform(std::size_t n_states) {
    return Distribution{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_states),
                                                  1.0 / static_cast<double>(n_states))};
}

void Distribution::validate() const {
    if ((p.array() < 0.0).any()) throw std::invalid_argument("distribution has negative weight");
    if (std::abs(p.sum() - 1.0) > kRowSumTol) throw std::invalid_argument("distribution does not sum to one");
}

FiniteMDP::FiniteMDP(std::size_t n_states, std::size_t n_actions, double beta)
    : n_states_(n_states),
      n_actions_(n_actions),
      beta_(beta),
      feasible_mask_(n_states * n_actions, false),
      feasible_(n_states),
      reward_(n_states * n_actions, 0.0),
      rows_(n_states * n_actions) {
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("FiniteMDP: empty state or action set");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("FiniteMDP: beta must lie in (0,1)");
}

void FiniteMDP::set_action(std::size_t x, std::size_t a, double reward, std::span<const double> dense_row) {
    if (dense_row.size() != n_states_) throw std::invalid_argument("FiniteMDP: row length mismatch");
    std::vector<Transition> row;
    for (std::size_t y = 0; y < n_states_; ++y) {
        if (dense_row[y] != 0.0) row.push_back({y, dense_row[y]});
        else if (std::signbit(dense_row[y])) throw std::invalid_argument("FiniteMDP: negative probability");
    }
    set_action(x, a, reward, std::move(row));
}

void FiniteMDP::set_action(std::size_t x, std::size_t a, double reward, std::vector<Transition> row) {
    if (x >= n_states_ || a >= n_actions_) throw std::out_of_range("FiniteMDP: state/action out of range");
    if (!std::isfinite(reward)) throw std::invalid_argument("FiniteMDP: non-finite reward");
    double total = 0.0;
    for (const auto& t : row) {
        if (t.next >= n_states_) throw std::out_of_range("FiniteMDP: transition target out of range");
        if (!(t.prob >= 0.0)) throw std::invalid_argument("FiniteMDP: negative probability");
        total += t.prob;
    }
    if (std::abs(total - 1.0) > kRowSumTol)
        throw std::invalid_argument("FiniteMDP: transition row (" + std::to_string(x) + "," + std::to_string(a) +
                                    ") sums to " + std::to_string(total));

    const auto s = slot(x, a);
    if (!feasible_mask_[s]) {
        feasible_mask_[s] = true;
        auto& acts = feasible_[x];
        acts.insert(std::upper_bound(acts.begin(), acts.end(), a), a);
    }
    reward_[s] = reward;
    rows_[s] = std::move(row);
}

void FiniteMDP::validate() const {
    for (std::size_t x = 0; x < n_states_; ++x)
        if (feasible_[x].empty()) throw std::invalid_argument("FiniteMDP: state " + std::to_string(x) + " has no feasible action");
}

double FiniteMDP::expectation(std::size_t x, std::size_t a, const ValueVector& v) const {
    double acc = 0.0;
    for (const auto& t : rows_[slot(x, a)]) acc += t.prob * v[static_cast<Eigen::Index>(t.next)];
    return acc;
}

double FiniteMDP::action_value(std::size_t x, std::size_t a, const ValueVector& v) const {
    return reward_[slot(x, a)] + beta_ * expectation(x, a, v);
}

void FiniteMDP::check_policy(const FinitePolicy& sigma) const {
    if (sigma.size() != n_states_) throw std::invalid_argument("policy length does not match state count");
    for (std::size_t x = 0; x < n_states_; ++x) {
        if (sigma.action[x] >= n_actions_ || !is_feasible(x, sigma.action[x]))
            throw FeasibilityError("policy action " + std::to_string(sigma.action[x]) + " infeasible at state " +
                                   std::to_string(x));
    }
}

Eigen::MatrixXd FiniteMDP::policy_matrix(const FinitePolicy& sigma) const {
    check_policy(sigma);
    const auto n = static_cast<Eigen::Index>(n_states_);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t x = 0; x < n_states_; ++x)
        for (const auto& t : row(x, sigma.action[x]))
            P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t.next)) += t.prob;
    return P;
}

ValueVector FiniteMDP::policy_reward(const FinitePolicy& sigma) const {
    check_policy(sigma);
    ValueVector r(static_cast<Eigen::Index>(n_states_));
    for (std::size_t x = 0; x < n_states_; ++x) r[static_cast<Eigen::Index>(x)] = reward(x, sigma.action[x]);
    return r;
}

FiniteMDP build_two_state() {
    FiniteMDP mdp(2, 2, 0.9);
    const double stay_first[] = {1.0, 0.0};
    const double stay_second[] = {0.0, 1.0};
    mdp.set_action(0, 0, 0.0, stay_first);
    mdp.set_action(0, 1, 1.0, stay_first);
    // Gamma(2) = {2}: action index 0 is infeasible at state index 1.
    mdp.set_action(1, 1, 2.0, stay_second);
    return mdp;
}

FiniteMDP random_mdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed) {
    FiniteMDP mdp(n_states, n_actions, 0.9);
    Rng rng = make_stream(seed, {0x6d6470});
    std::uniform_real_distribution<double> reward(-1.0, 1.0);
    std::exponential_distribution<double> gamma1(1.0);
    std::vector<double> row(n_states);
    for (std::size_t x = 0; x < n_states; ++x) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            double total = 0.0;
            for (auto& p : row) total += (p = gamma1(rng));
            for (auto& p : row) p /= total;
            mdp.set_action(x, a, reward(rng), row);
        }
    }
    return mdp;
}

ValueVector policy_value(const FiniteMDP& mdp, const FinitePolicy& sigma) {
    const Eigen::MatrixXd P = mdp.policy_matrix(sigma);
    const ValueVector r = mdp.policy_reward(sigma);
    const auto n = P.rows();
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mdp.beta() * P;
    ValueVector v = A.partialPivLu().solve(r);
    if (!v.allFinite()) throw NumericalError("policy_value: linear solve produced non-finite values");
    return v;
}

ValueVector apply_policy_operator(const FiniteMDP& mdp, const FinitePolicy& sigma, const ValueVector& v) {
    mdp.check_policy(sigma);
    ValueVector out(v.size());
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        out[static_cast<Eigen::Index>(x)] = mdp.action_value(x, sigma.action[x], v);
    return out;
}

BellmanResult bellman_backup(const FiniteMDP& mdp, const ValueVector& v) {
    mdp.validate();
    BellmanResult out{ValueVector(v.size()), FinitePolicy{std::vector<std::size_t>(mdp.n_states())}};
    for (std::size_t x = 0; x < mdp.n_states(); ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_a = 0;
        for (std::size_t a : mdp.feasible(x)) {
            const double q = mdp.action_value(x, a, v);
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        out.value[static_cast<Eigen::Index>(x)] = best;
        out.greedy.action[x] = best_a;
    }
    return out;
}

OpiResult solve_opi(const FiniteMDP& mdp, int m, double tol, std::size_t max_iterations) {
    if (m < 1) throw std::invalid_argument("solve_opi: m must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("solve_opi: tol must be positive");
    const double beta = mdp.beta();
    const double residual_bound = tol * (1.0 + beta) / (1.0 - beta);

    ValueVector v = ValueVector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
    double last_change = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iterations; ++it) {
        BellmanResult step = bellman_backup(mdp, v);
        const double residual = (step.value - v).lpNorm<Eigen::Infinity>();
        if (last_change <= tol && residual <= residual_bound)
            return OpiResult{std::move(v), std::move(step.greedy), it, residual};

        ValueVector next = std::move(step.value);
        for (int j = 1; j < m; ++j) next = apply_policy_operator(mdp, step.greedy, next);
        last_change = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (!v.allFinite()) throw NumericalError("solve_opi: non-finite value iterate");
    }
    throw NumericalError("solve_opi: no convergence after " + std::to_string(max_iterations) + " iterations");
}

ValueVector optimal_value(const FiniteMDP& mdp) {
    const OpiResult opi = solve_opi(mdp, 20, 1e-12);
    return policy_value(mdp, opi.policy);
}

double local_optimality_residual(const FiniteMDP& mdp, const FinitePolicy& sigma, std::size_t x, int n_max) {
    return local_optimality_residual(mdp, sigma, x, n_max, optimal_value(mdp));
}

double local_optimality_residual(const FiniteMDP& mdp, const FinitePolicy& sigma, std::size_t x, int n_max,
                                 const ValueVector& v_star) {
    if (x >= mdp.n_states()) throw std::out_of_range("local_optimality_residual: state out of range");
    // Round-off can leave v* - v_sigma at -1e-16; the gap is nonnegative in exact arithmetic.
    ValueVector gap = (v_star - policy_value(mdp, sigma)).cwiseMax(0.0);
    double total = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        gap = propagate(mdp, sigma, gap);
        total += gap[static_cast<Eigen::Index>(x)];
    }
    return total;
}

double distribution_value(const FiniteMDP& mdp, const FinitePolicy& sigma, const Distribution& rho) {
    rho.validate();
    if (static_cast<std::size_t>(rho.p.size()) != mdp.n_states())
        throw std::invalid_argument("distribution_value: size mismatch");
    return rho.p.dot(policy_value(mdp, sigma));
}

std::vector<FinitePolicy> enumerate_policies(const FiniteMDP& mdp, std::size_t limit) {
    mdp.validate();
    std::size_t count = 1;
    for (std::size_t x = 0; x < mdp.n_states(); ++x) {
        count *= mdp.feasible(x).size();
        if (count > limit) throw std::length_error("enumerate_policies: too many policies");
    }
    std::vector<FinitePolicy> out;
    out.reserve(count);
    std::vector<std::size_t> digit(mdp.n_states(), 0);
    for (std::size_t k = 0; k < count; ++k) {
        FinitePolicy p{std::vector<std::size_t>(mdp.n_states())};
        for (std::size_t x = 0; x < mdp.n_states(); ++x) p.action[x] = mdp.feasible(x)[digit[x]];
        out.push_back(std::move(p));
        for (std::size_t x = mdp.n_states(); x-- > 0;) {
            if (++digit[x] < mdp.feasible(x).size()) break;
            digit[x] = 0;
        }
    }
    return out;
}

CsvTable value_csv(const ValueVector& v, std::size_t label_offset) {
    CsvTable table;
    table.header = {"state", "value"};
    for (Eigen::Index x = 0; x < v.size(); ++x)
        table.add_row({std::to_string(static_cast<std::size_t>(x) + label_offset), format_real(v[x])});
    return table;
}

}  // namespace dpreach
