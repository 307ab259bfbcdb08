#include "dpreach/stopping.hpp"

#include <Eigen/LU>
#include <fmt/format.h>

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpreach/errors.hpp"

namespace dpreach {
namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// P(a < Z < b) for standard normal Z, evaluated in whichever tail keeps
// precision so that far-away cells stay strictly positive.
double normal_mass(double a, double b) {
    constexpr double r = 0.70710678118654752440;
    if (a >= 0.0) return 0.5 * (std::erfc(a * r) - std::erfc(b * r));
    if (b <= 0.0) return 0.5 * (std::erfc(-b * r) - std::erfc(-a * r));
    return 1.0 - 0.5 * std::erfc(b * r) - 0.5 * std::erfc(-a * r);
}

}  // namespace

std::span<const std::string_view> stopping_config_keys() {
    static constexpr std::array<std::string_view, 7> keys = {"ar_rho", "ar_sigma", "n_grid",    "grid_span",
                                                             "cost",   "beta_base", "beta_slope"};
    return keys;
}

StoppingSpec stopping_spec_from(const KeyValueConfig& cfg) {
    StoppingSpec s;
    s.ar_rho = cfg.get_double("ar_rho", s.ar_rho);
    s.ar_sigma = cfg.get_double("ar_sigma", s.ar_sigma);
    const long long n = cfg.get_int("n_grid", static_cast<long long>(s.n_grid));
    if (n < 3) throw ConfigError("n_grid must be >= 3");
    s.n_grid = static_cast<std::size_t>(n);
    s.grid_span = cfg.get_double("grid_span", s.grid_span);
    s.cost = cfg.get_double("cost", s.cost);
    s.beta_base = cfg.get_double("beta_base", s.beta_base);
    s.beta_slope = cfg.get_double("beta_slope", s.beta_slope);
    return s;
}

StoppingPolicy StoppingPolicy::threshold(std::size_t n, std::size_t k) {
    StoppingPolicy p{std::vector<bool>(n, false)};
    for (std::size_t j = k; j < n; ++j) p.stop[j] = true;
    return p;
}

StoppingModel make_stopping_model(Eigen::VectorXd grid, Eigen::MatrixXd Q, Eigen::VectorXd pi, double cost,
                                  Eigen::VectorXd beta) {
    const auto n = grid.size();
    if (n < 1 || Q.rows() != n || Q.cols() != n || pi.size() != n || beta.size() != n)
        throw std::invalid_argument("make_stopping_model: inconsistent sizes");
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("make_stopping_model: grid must increase strictly");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(Q.row(i).sum() - 1.0) > 1e-12)
            throw std::invalid_argument(fmt::format("make_stopping_model: row {} of Q is not stochastic", i));
        if (i > 0 && pi[i] < pi[i - 1]) throw std::invalid_argument("make_stopping_model: profit must be non-decreasing");
    }
    if (!(Q.array() > 0.0).all()) throw std::invalid_argument("make_stopping_model: Q must have full support");
    if (!(beta.array() > 0.0).all()) throw std::invalid_argument("make_stopping_model: discount factors must be positive");
    if (!(cost > 0.0)) throw std::invalid_argument("make_stopping_model: cost must be positive");

    StoppingModel m;
    m.grid = std::move(grid);
    m.Q = std::move(Q);
    m.pi = std::move(pi);
    m.cost = cost;
    m.beta = std::move(beta);
    m.K = m.beta.asDiagonal() * m.Q;
    m.spectral_radius = spectral_radius(m.K).radius;
    if (!(m.spectral_radius < 1.0))
        throw NumericalError(fmt::format("spectral radius of K is {} (must be < 1)", m.spectral_radius));
    return m;
}

StoppingModel build_stopping_model(const StoppingSpec& spec) {
    if (!(std::abs(spec.ar_rho) < 1.0)) throw ConfigError("ar_rho must satisfy |ar_rho| < 1");
    if (!(spec.ar_sigma > 0.0)) throw ConfigError("ar_sigma must be positive");
    if (spec.n_grid < 3) throw ConfigError("n_grid must be >= 3");
    if (!(spec.grid_span > 0.0)) throw ConfigError("grid_span must be positive");

    const auto n = static_cast<Eigen::Index>(spec.n_grid);
    const double sigma_x = spec.ar_sigma / std::sqrt(1.0 - spec.ar_rho * spec.ar_rho);
    const double half = spec.grid_span * sigma_x;
    Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n, -half, half);
    const double step = grid[1] - grid[0];

    Eigen::MatrixXd Q(n, n);
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = spec.ar_rho * grid[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            const double lo = j == 0 ? -inf : (grid[j] - 0.5 * step - mean) / spec.ar_sigma;
            const double hi = j == n - 1 ? inf : (grid[j] + 0.5 * step - mean) / spec.ar_sigma;
            Q(i, j) = normal_mass(lo, hi);
        }
        Q.row(i) /= Q.row(i).sum();
    }

    Eigen::VectorXd pi(n), beta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        pi[i] = logistic(grid[i]);
        beta[i] = spec.beta_base + spec.beta_slope * logistic(grid[i]);
    }
    try {
        return make_stopping_model(std::move(grid), std::move(Q), std::move(pi), spec.cost, std::move(beta));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

SpectralEstimate spectral_radius(const Eigen::MatrixXd& K, double tol, std::size_t max_iterations) {
    if (K.rows() != K.cols() || K.rows() == 0) throw std::invalid_argument("spectral_radius: matrix must be square");
    if ((K.array() < 0.0).any()) throw std::invalid_argument("spectral_radius: matrix must be nonnegative");
    Eigen::VectorXd x = Eigen::VectorXd::Ones(K.rows());
    double ratio = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        Eigen::VectorXd y = K * x;
        const double next = y.lpNorm<Eigen::Infinity>();
        if (next == 0.0) return {0.0, it};
        x = y / next;
        if (std::abs(next - ratio) <= tol) return {next, it};
        ratio = next;
    }
    throw NumericalError("spectral_radius: power iteration did not converge");
}

StoppingSolution solve_stopping_vfi(const StoppingModel& model, double tol, std::size_t max_iterations) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_stopping_vfi: tol must be positive");
    StoppingSolution sol;
    Eigen::VectorXd v = model.pi;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        const Eigen::VectorXd cont = (model.K * v).array() - model.cost;
        Eigen::VectorXd next = model.pi.cwiseMax(cont);
        const double change = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (change <= tol) {
            sol.iterations = it;
            const Eigen::VectorXd final_cont = (model.K * v).array() - model.cost;
            sol.policy.stop.resize(model.size());
            for (std::size_t j = 0; j < model.size(); ++j)
                sol.policy.stop[j] = model.pi[static_cast<Eigen::Index>(j)] >= final_cont[static_cast<Eigen::Index>(j)];
            sol.value = std::move(v);
            return sol;
        }
    }
    throw NumericalError("solve_stopping_vfi: iteration limit reached");
}

Eigen::VectorXd stopping_policy_value(const StoppingModel& model, const StoppingPolicy& sigma) {
    const auto n = static_cast<Eigen::Index>(model.size());
    if (sigma.stop.size() != model.size()) throw std::invalid_argument("stopping_policy_value: policy size mismatch");
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (sigma.stop[static_cast<std::size_t>(i)]) {
            b[i] = model.pi[i];
        } else {
            A.row(i) -= model.K.row(i);
            b[i] = -model.cost;
        }
    }
    Eigen::VectorXd v = A.partialPivLu().solve(b);
    if (!v.allFinite()) throw NumericalError("stopping_policy_value: singular system");
    return v;
}

ThresholdChoice best_threshold_policy(const StoppingModel& model) {
    return best_threshold_policy(model, model.size() / 2);
}

ThresholdChoice best_threshold_policy(const StoppingModel& model, std::size_t ref_index) {
    const std::size_t n = model.size();
    if (ref_index >= n) throw std::out_of_range("best_threshold_policy: reference index out of range");
    ThresholdChoice best;
    best.ref_index = ref_index;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= n; ++k) {
        Eigen::VectorXd v = stopping_policy_value(model, StoppingPolicy::threshold(n, k));
        const double at_ref = v[static_cast<Eigen::Index>(ref_index)];
        best.value_at_ref.push_back(at_ref);
        if (at_ref > best_value) {
            best_value = at_ref;
            best.threshold = k;
            best.value = std::move(v);
        }
    }
    return best;
}

LocalGlobalReport local_global_check(const StoppingModel& model, const StoppingPolicy& sigma, std::size_t x_index,
                                     double tol) {
    // Reference v* well inside the comparison tolerance.
    const double vfi_tol = std::max(tol * 1e-3, 1e-14);
    return local_global_check(model, sigma, x_index, tol, 10.0 * tol, solve_stopping_vfi(model, vfi_tol).value);
}

LocalGlobalReport local_global_check(const StoppingModel& model, const StoppingPolicy& sigma, std::size_t x_index,
                                     double tol, double global_tol, const Eigen::VectorXd& v_star) {
    if (x_index >= model.size()) throw std::out_of_range("local_global_check: index out of range");
    const Eigen::VectorXd v_sigma = stopping_policy_value(model, sigma);
    const Eigen::VectorXd dev = v_star - v_sigma;
    LocalGlobalReport r;
    r.deviation.assign(dev.data(), dev.data() + dev.size());
    r.local_deviation = std::abs(dev[static_cast<Eigen::Index>(x_index)]);
    r.max_deviation = dev.cwiseAbs().maxCoeff();
    r.local_match = r.local_deviation <= tol;
    r.global_match = r.max_deviation <= global_tol;
    r.verified = r.local_match && r.global_match;
    return r;
}

CsvTable stopping_solution_csv(const StoppingModel& model, const StoppingSolution& sol) {
    CsvTable table;
    table.header = {"x", "pi", "v_star", "stop_flag"};
    for (std::size_t j = 0; j < model.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        table.add_row({format_real(model.grid[jj]), format_real(model.pi[jj]), format_real(sol.value[jj]),
                       sol.policy.stop[j] ? "1" : "0"});
    }
    return table;
}

CsvTable threshold_csv(const ThresholdChoice& choice) {
    CsvTable table;
    table.header = {"threshold", "value_at_ref"};
    for (std::size_t k = 0; k < choice.value_at_ref.size(); ++k)
        table.add_row({std::to_string(k), format_real(choice.value_at_ref[k])});
    return table;
}

}  // namespace dpreach
