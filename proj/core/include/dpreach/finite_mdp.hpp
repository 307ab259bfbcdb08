#pragma once

// Finite-state, finite-action Markov decision processes.
//
// States and actions are 0-based. Each feasible (state, action) pair owns a
// reward and a sparse transition row. Values are Eigen column vectors.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dpreach/csv.hpp"

namespace dpreach {

using ValueVector = Eigen::VectorXd;

struct Transition {
    std::size_t next;
    double prob;
};

struct FinitePolicy {
    std::vector<std::size_t> action;

    std::size_t size() const { return action.size(); }
    bool operator==(const FinitePolicy&) const = default;
};

struct Distribution {
    Eigen::VectorXd p;

    // Point mass at `state`.
    static Distribution delta(std::size_t n_states, std::size_t state);
    static Distribution uniform(std::size_t n_states);
    void validate() const;
};

class FiniteMDP {
public:
    FiniteMDP(std::size_t n_states, std::size_t n_actions, double beta);

    // Makes `a` feasible at `x`. Rows must be nonnegative and sum to one
    // within 1e-12; zero entries of a dense row are dropped.
    void set_action(std::size_t x, std::size_t a, double reward, std::span<const double> dense_row);
    void set_action(std::size_t x, std::size_t a, double reward, std::vector<Transition> row);

    // Checks that every state has at least one feasible action.
    void validate() const;

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double beta() const { return beta_; }

    bool is_feasible(std::size_t x, std::size_t a) const { return feasible_mask_[slot(x, a)]; }
    std::span<const std::size_t> feasible(std::size_t x) const { return feasible_[x]; }
    double reward(std::size_t x, std::size_t a) const { return reward_[slot(x, a)]; }
    std::span<const Transition> row(std::size_t x, std::size_t a) const { return rows_[slot(x, a)]; }

    // r(x,a) + beta * sum_x' P(x,a,x') v(x')
    double action_value(std::size_t x, std::size_t a, const ValueVector& v) const;
    double expectation(std::size_t x, std::size_t a, const ValueVector& v) const;

    void check_policy(const FinitePolicy& sigma) const;
    Eigen::MatrixXd policy_matrix(const FinitePolicy& sigma) const;
    ValueVector policy_reward(const FinitePolicy& sigma) const;

private:
    std::size_t slot(std::size_t x, std::size_t a) const { return x * n_actions_ + a; }

    std::size_t n_states_;
    std::size_t n_actions_;
    double beta_;
    std::vector<bool> feasible_mask_;
    std::vector<std::vector<std::size_t>> feasible_;
    std::vector<double> reward_;
    std::vector<std::vector<Transition>> rows_;
};

// The two-state counterexample: states {1,2}, Gamma(1)={1,2}, Gamma(2)={2},
// r = [[0,1],[0,2]], beta = 0.9, every action keeps the state where it is.
FiniteMDP build_two_state();

// Uniform rewards in [-1,1], flat-Dirichlet rows, all actions feasible.
FiniteMDP random_mdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed);

// Solves (I - beta P_sigma) v = r_sigma with a dense LU factorization.
ValueVector policy_value(const FiniteMDP& mdp, const FinitePolicy& sigma);

// T_sigma v = r_sigma + beta P_sigma v.
ValueVector apply_policy_operator(const FiniteMDP& mdp, const FinitePolicy& sigma, const ValueVector& v);

struct BellmanResult {
    ValueVector value;
    FinitePolicy greedy;
};

// (Tv)(x) = max_a r(x,a) + beta E v; ties go to the lowest action index.
BellmanResult bellman_backup(const FiniteMDP& mdp, const ValueVector& v);

struct OpiResult {
    ValueVector value;
    FinitePolicy policy;  // greedy for `value`
    std::size_t iterations = 0;
    double bellman_residual = 0.0;  // ||Tv - v||_inf at the returned v
};

// Optimistic policy iteration: greedy step, then m sweeps of T_sigma.
// Stops once successive values differ by at most tol and the Bellman
// residual of the returned value is at most tol (1+beta)/(1-beta).
OpiResult solve_opi(const FiniteMDP& mdp, int m, double tol, std::size_t max_iterations = 100000);

// sum_{n=1..n_max} (P_sigma^n (v* - v_sigma))(x). v* is the exact value of
// the policy returned by a tight OPI solve.
double local_optimality_residual(const FiniteMDP& mdp, const FinitePolicy& sigma, std::size_t x,
                                 int n_max);
double local_optimality_residual(const FiniteMDP& mdp, const FinitePolicy& sigma, std::size_t x,
                                 int n_max, const ValueVector& v_star);

// Exact optimal value: policy_value of the greedy policy from a tight OPI solve.
ValueVector optimal_value(const FiniteMDP& mdp);

// sum_x rho(x) v_sigma(x)
double distribution_value(const FiniteMDP& mdp, const FinitePolicy& sigma, const Distribution& rho);

// Every feasible policy, in lexicographic order of action vectors. Throws
// std::length_error if there are more than `limit`.
std::vector<FinitePolicy> enumerate_policies(const FiniteMDP& mdp, std::size_t limit = 1u << 20);

// Columns state,value. `label_offset` shifts state labels (1 for 1-based output).
CsvTable value_csv(const ValueVector& v, std::size_t label_offset = 0);

}  // namespace dpreach
