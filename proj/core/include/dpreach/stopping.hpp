#pragma once

// Firm entry as optimal stopping with state-dependent discounting:
//
//     v(x) = max{ pi(x), -c + beta(x) E[v(x') | x] },
//
// with x following an AR(1) process discretized onto an equispaced grid.
// K = diag(beta) Q is the discount operator; values are well defined when its
// spectral radius is below one.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dpreach/config.hpp"
#include "dpreach/csv.hpp"

namespace dpreach {

struct StoppingSpec {
    double ar_rho = 0.9;
    double ar_sigma = 0.25;
    std::size_t n_grid = 201;
    double grid_span = 3.0;  // half-width in stationary standard deviations
    double cost = 0.1;
    double beta_base = 0.95;
    double beta_slope = 0.04;  // beta(x) = beta_base + beta_slope * logistic(x)
};

std::span<const std::string_view> stopping_config_keys();
StoppingSpec stopping_spec_from(const KeyValueConfig& cfg);

struct StoppingModel {
    Eigen::VectorXd grid;
    Eigen::MatrixXd Q;
    Eigen::VectorXd pi;
    double cost = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd K;
    double spectral_radius = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(grid.size()); }
};

struct StoppingPolicy {
    std::vector<bool> stop;

    static StoppingPolicy threshold(std::size_t n, std::size_t k);  // stop iff index >= k
    bool operator==(const StoppingPolicy&) const = default;
};

// Cell-integrated normal transition probabilities (Tauchen), profit
// logistic(x). Throws NumericalError if r(K) >= 1.
StoppingModel build_stopping_model(const StoppingSpec& spec);

// Assembles a model from explicit pieces and checks its invariants.
StoppingModel make_stopping_model(Eigen::VectorXd grid, Eigen::MatrixXd Q, Eigen::VectorXd pi, double cost,
                                  Eigen::VectorXd beta);

struct SpectralEstimate {
    double radius;
    std::size_t iterations;
};

// Power iteration from the all-ones vector on a nonnegative matrix; stops
// when successive growth ratios differ by at most tol.
SpectralEstimate spectral_radius(const Eigen::MatrixXd& K, double tol = 1e-12, std::size_t max_iterations = 1000000);

struct StoppingSolution {
    Eigen::VectorXd value;
    StoppingPolicy policy;
    std::size_t iterations = 0;
};

// v <- max(pi, -c + K v) from v = pi until the sup change is <= tol.
// The policy stops where pi >= -c + K v.
StoppingSolution solve_stopping_vfi(const StoppingModel& model, double tol, std::size_t max_iterations = 10000000);

// Solves v = stop*pi + (1 - stop)(-c + K v) directly.
Eigen::VectorXd stopping_policy_value(const StoppingModel& model, const StoppingPolicy& sigma);

struct ThresholdChoice {
    std::size_t threshold = 0;
    Eigen::VectorXd value;
    std::vector<double> value_at_ref;  // one entry per threshold 0..n
    std::size_t ref_index = 0;
};

// Evaluates all n+1 thresholds (k = 0 stops everywhere, k = n never stops)
// and keeps the one with the highest value at `ref_index`; ties go to the
// lowest k. ref_index defaults to the grid midpoint.
ThresholdChoice best_threshold_policy(const StoppingModel& model);
ThresholdChoice best_threshold_policy(const StoppingModel& model, std::size_t ref_index);

struct LocalGlobalReport {
    bool local_match = false;   // |v_sigma(x) - v*(x)| <= tol
    bool global_match = false;  // max_j |v_sigma - v*| <= global_tol
    bool verified = false;      // local_match && global_match
    double local_deviation = 0.0;
    double max_deviation = 0.0;
    std::vector<double> deviation;  // v* - v_sigma on the grid
};

// Evaluates sigma exactly and compares with v* from VFI at tolerance vfi_tol.
LocalGlobalReport local_global_check(const StoppingModel& model, const StoppingPolicy& sigma, std::size_t x_index,
                                     double tol);
LocalGlobalReport local_global_check(const StoppingModel& model, const StoppingPolicy& sigma, std::size_t x_index,
                                     double tol, double global_tol, const Eigen::VectorXd& v_star);

// Columns x,pi,v_star,stop_flag.
CsvTable stopping_solution_csv(const StoppingModel& model, const StoppingSolution& sol);
// Columns threshold,value_at_ref.
CsvTable threshold_csv(const ThresholdChoice& choice);

}  // namespace dpreach
