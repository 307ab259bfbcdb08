#pragma once

// The optimal-savings problem
//
//     w' = clip(eta' (w - c) + y', w_min, w_max),   0 < c <= w,
//
// with CRRA utility. Two variants share the code: full-support log-normal
// shocks (irreducible) and bounded uniform shocks (reducible).
//
// The oracle solver discretizes wealth on a geometric grid, consumption as a
// fraction of wealth, and the shock expectation by quantile quadrature;
// off-grid next wealth is linearly interpolated, which makes the discretized
// problem an ordinary FiniteMDP solved by OPI.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dpreach/config.hpp"
#include "dpreach/csv.hpp"
#include "dpreach/finite_mdp.hpp"
#include "dpreach/rng.hpp"

namespace dpreach {

enum class SavingsVariant { irreducible, reducible };

struct ShockSpec {
    enum class Family { lognormal, uniform };

    Family family = Family::lognormal;
    double a = 0.0;  // log-location, or lower bound
    double b = 1.0;  // log-scale, or upper bound

    static ShockSpec lognormal(double mu, double sigma) { return {Family::lognormal, mu, sigma}; }
    static ShockSpec uniform(double lo, double hi) { return {Family::uniform, lo, hi}; }

    double quantile(double p) const;
    double sample(Rng& rng) const;
    // Upper end of the support; +inf for log-normal.
    double support_max() const;
    void validate() const;
};

struct SavingsModel {
    SavingsVariant variant = SavingsVariant::irreducible;
    double beta = 0.96;
    double gamma = 2.0;
    ShockSpec eta = ShockSpec::lognormal(-0.025, 0.05);
    ShockSpec y = ShockSpec::lognormal(0.5, 0.5);
    double w_min = 0.1;
    double w_max = 100.0;

    static SavingsModel irreducible();
    static SavingsModel reducible();
    void validate() const;
};

struct SavingsSolverConfig {
    std::size_t n_grid = 200;
    std::size_t n_consumption = 200;
    std::size_t quad_nodes = 20;
    int opi_m = 20;
    double opi_tol = 1e-8;
    // Smallest consumption fraction c/w in the action set.
    double min_fraction = 1e-3;
};

// Keys understood by savings_from_config.
std::span<const std::string_view> savings_config_keys();

struct SavingsSetup {
    SavingsModel model;
    SavingsSolverConfig solver;
};

// Starts from the variant's defaults and applies every key present.
SavingsSetup savings_from_config(const KeyValueConfig& cfg);

struct WealthGrid {
    std::vector<double> points;

    static WealthGrid geometric(double w_min, double w_max, std::size_t n);
    std::size_t size() const { return points.size(); }
    void validate() const;
};

struct QuadNode {
    double value;
    double weight;
};

struct ShockNodes {
    std::vector<QuadNode> eta;
    std::vector<QuadNode> y;

    // K nodes per shock at probabilities (i - 0.5)/K, equal weights.
    static ShockNodes quantile(const SavingsModel& model, std::size_t k);
    void validate() const;
};

double crra_utility(double c, double gamma);
double crra_marginal_utility(double c, double gamma);

// clip(eta (w - c) + y, w_min, w_max)
inline double next_wealth(const SavingsModel& m, double w, double c, double eta, double y) {
    const double raw = eta * (w - c) + y;
    return raw < m.w_min ? m.w_min : (raw > m.w_max ? m.w_max : raw);
}

// Draws eta' then y' from `rng`. Throws FeasibilityError unless 0 < c <= w.
double sample_transition(const SavingsModel& model, double w, double c, Rng& rng);

// Pre-sampled shocks, row-major [path][t]. Path i draws from
// make_stream(stream_seed, {i}), eta before y at every step, exactly as
// sample_transition would.
struct ShockArrays {
    std::size_t n_paths = 0;
    std::size_t horizon = 0;
    std::vector<double> eta;
    std::vector<double> y;

    double eta_at(std::size_t i, std::size_t t) const { return eta[i * horizon + t]; }
    double y_at(std::size_t i, std::size_t t) const { return y[i * horizon + t]; }
};

ShockArrays sample_shocks(const SavingsModel& model, std::size_t n_paths, std::size_t horizon,
                          std::uint64_t stream_seed);

// Maps a batch of wealth levels to consumption levels of the same length.
using BatchPolicy = std::function<void(std::span<const double> wealth, std::span<double> consumption)>;

BatchPolicy constant_fraction_policy(double fraction);
// Piecewise-linear interpolation of grid consumption, flat outside the grid.
BatchPolicy interpolated_policy(const WealthGrid& grid, std::vector<double> consumption);

struct SavingsSolution {
    WealthGrid grid;
    std::vector<double> fractions;  // action set
    ValueVector value;
    std::vector<double> consumption;
    OpiResult opi;
};

FiniteMDP build_savings_mdp(const SavingsModel& model, const WealthGrid& grid, const ShockNodes& nodes,
                            std::span<const double> fractions);
std::vector<double> consumption_fractions(std::size_t n_consumption, double min_fraction);

SavingsSolution solve_savings_opi(const SavingsModel& model, const WealthGrid& grid, const ShockNodes& nodes,
                                  std::size_t n_consumption, int m, double tol, double min_fraction = 1e-3);
SavingsSolution solve_savings_opi(const SavingsModel& model, const SavingsSolverConfig& cfg);

// (1/N) sum_i sum_{t<T} beta^t u(c_{i,t}) along the given shocks, all paths
// starting at w0. Throws FeasibilityError if the policy leaves (0, w].
double rollout_value(const SavingsModel& model, const BatchPolicy& policy, double w0, const ShockArrays& shocks);

// Wealth paths, shape [path][t] for t = 0..T, flattened row-major.
std::vector<double> simulate_wealth(const SavingsModel& model, const BatchPolicy& policy, double w0,
                                    const ShockArrays& shocks);

double policy_lifetime_value(const SavingsModel& model, const BatchPolicy& policy, double w0, std::size_t n_paths,
                             std::size_t t_rollout, std::uint64_t seed);

// Grid point g uses stream seed derive_seed(seed, {g}).
std::vector<double> evaluate_policy_on_grid(const SavingsModel& model, const BatchPolicy& policy,
                                            std::span<const double> grid, std::size_t n_paths,
                                            std::size_t t_rollout, std::uint64_t seed);

// Columns wealth,v_star,sigma_star.
CsvTable savings_solution_csv(const SavingsSolution& sol);
// Columns wealth,v_policy.
CsvTable policy_value_csv(std::span<const double> grid, std::span<const double> values);

}  // namespace dpreach
