#pragma once

// Feed-forward consumption policy c = w * s(w; theta).
//
// Inputs are the features [w, log(1+w)] (or just [w] when input_dim == 1),
// hidden layers use tanh, and the single output unit is squashed by the
// logistic function and clamped to [1e-4, 1 - 1e-4], so 0 < c < w always.
//
// rollout_loss_and_grad differentiates the discounted utility of N simulated
// wealth paths with respect to theta, including the dependence of future
// wealth on current consumption (backpropagation through time). Clamps and
// wealth clipping contribute a zero derivative when saturated.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dpreach/savings.hpp"

namespace dpreach {

inline constexpr double kMinConsumptionShare = 1e-4;
inline constexpr double kMaxConsumptionShare = 1.0 - 1e-4;

struct Architecture {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden{32, 32};

    // input_dim, hidden..., 1
    std::vector<std::size_t> layer_sizes() const;
    std::size_t parameter_count() const;
    void validate() const;
};

struct PolicyParams {
    Architecture arch;
    // Layer by layer: weight matrix (out x in) row-major, then bias.
    Eigen::VectorXd theta;

    void validate() const;
};

PolicyParams init_network(const Architecture& arch, std::uint64_t seed);

// Consumption at a single wealth level.
double forward(const PolicyParams& params, double w);
void forward_batch(const PolicyParams& params, std::span<const double> wealth, std::span<double> consumption);
BatchPolicy as_batch_policy(const PolicyParams& params);

struct LossAndGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

// L(theta) = -(1/N) sum_i sum_{t<T} beta^t u(c_{i,t}), w_{i,0} = w0.
LossAndGrad rollout_loss_and_grad(const SavingsModel& model, const PolicyParams& params, double w0,
                                  const ShockArrays& shocks, double beta);

// Forward only. `saturation`, when given, receives one flag per (path, t)
// for the share clamp and one for the wealth clip; grad_check uses it to
// spot perturbations that cross a kink.
double rollout_loss(const SavingsModel& model, const PolicyParams& params, double w0, const ShockArrays& shocks,
                    double beta, std::vector<std::uint8_t>* saturation = nullptr);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::vector<std::size_t> excluded;  // coordinates whose perturbation crossed a kink
};

// Compares the analytic gradient with central differences on `n_coords`
// randomly chosen coordinates. Relative error is |g - fd| / max(|g|, |fd|, floor)
// where floor = 1e-8 * max(1, ||g||_inf).
GradCheckReport grad_check(const SavingsModel& model, const PolicyParams& params, double w0, std::size_t n_paths,
                           std::size_t horizon, std::uint64_t seed, std::size_t n_coords = 20, double step = 1e-5);

// "mlp-policy v1" text format with 17 significant digits.
void write_params(std::ostream& out, const PolicyParams& params);
PolicyParams read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_params(const std::filesystem::path& path);

}  // namespace dpreach
