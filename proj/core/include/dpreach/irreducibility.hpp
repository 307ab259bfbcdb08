#pragma once

// Reachability and irreducibility of transition kernels.
//
// Finite kernels get two independent verdicts: a graph search over positive
// entries and a brute-force sum of matrix powers. Continuous kernels are
// probed by simulation: a positive hit rate certifies that an interval is
// reachable, a zero rate is only evidence against it.

#include <cstdint>
#include <functional>
#include <set>

#include <Eigen/Core>

#include "dpreach/csv.hpp"
#include "dpreach/finite_mdp.hpp"
#include "dpreach/rng.hpp"

namespace dpreach {

class FiniteKernel {
public:
    // Throws std::invalid_argument unless P is square, nonnegative and
    // row-stochastic within 1e-12.
    explicit FiniteKernel(Eigen::MatrixXd P);

    static FiniteKernel from_policy(const FiniteMDP& mdp, const FinitePolicy& sigma);

    const Eigen::MatrixXd& matrix() const { return P_; }
    std::size_t size() const { return static_cast<std::size_t>(P_.rows()); }

private:
    Eigen::MatrixXd P_;
};

// True iff the graph x -> y (P[x][y] > 0) is strongly connected.
bool is_discretely_irreducible(const FiniteKernel& k);

// True iff every entry of P + P^2 + ... + P^n is positive.
bool is_strongly_irreducible_bruteforce(const FiniteKernel& k);

// States y with P^m(x,y) > 0 for some m >= 1.
std::set<std::size_t> accessible_set(const FiniteKernel& k, std::size_t x);

// Draws the next state given the current one.
using TransitionSampler = std::function<double(double, Rng&)>;

struct OpenInterval {
    double lo;
    double hi;

    bool contains(double x) const { return lo < x && x < hi; }
};

struct ReachabilityReport {
    double origin = 0.0;
    OpenInterval target{0.0, 0.0};
    int n_max = 0;
    long long n_paths = 0;
    long long hits = 0;
    double estimate = 0.0;
};

// Fraction of n_paths trajectories from x0 that enter `target` at some step
// 1..n_max. Path i draws from make_stream(seed, {i}).
ReachabilityReport mc_reachability(const TransitionSampler& sampler, double x0, OpenInterval target, int n_max,
                                   long long n_paths, std::uint64_t seed);

// Columns origin,target_lo,target_hi,n_max,n_paths,estimate.
CsvTable reachability_csv(std::span<const ReachabilityReport> reports);

// Supremum of wealth reachable from w0 when returns are at most eta_bar and
// income at most y_bar: eta_bar * w0 + y_bar / (1 - eta_bar).
double reducible_wealth_bound(double eta_bar, double y_bar, double w0);

// Next-period wealth with zero consumption and both shocks at their upper
// bounds: eta_bar * w + y_bar.
double upper_bound_next_wealth(double eta_bar, double y_bar, double w);

// Fixed point of upper_bound_next_wealth, y_bar / (1 - eta_bar).
double upper_bound_fixed_point(double eta_bar, double y_bar);

}  // namespace dpreach
