#include "dpreach/savings.hpp"

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "dpreach/errors.hpp"

namespace dpreach {

double ShockSpec::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("ShockSpec::quantile: p must lie in (0,1)");
    if (family == Family::uniform) return a + p * (b - a);
    const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
    return std::exp(a + b * boost::math::quantile(std_normal, p));
}

double ShockSpec::sample(Rng& rng) const {
    if (family == Family::uniform) return std::uniform_real_distribution<double>(a, b)(rng);
    return std::lognormal_distribution<double>(a, b)(rng);
}

double ShockSpec::support_max() const {
    return family == Family::uniform ? b : std::numeric_limits<double>::infinity();
}

void ShockSpec::validate() const {
    if (family == Family::uniform) {
        if (!(a >= 0.0 && a < b)) throw ConfigError("uniform shock needs 0 <= lo < hi");
    } else if (!(b > 0.0) || !std::isfinite(a)) {
        throw ConfigError("log-normal shock needs a finite location and sigma > 0");
    }
}

SavingsModel SavingsModel::irreducible() { return SavingsModel{}; }

SavingsModel SavingsModel::reducible() {
    SavingsModel m;
    m.variant = SavingsVariant::reducible;
    m.eta = ShockSpec::uniform(0.5, 0.8);
    m.y = ShockSpec::uniform(1.0, 8.0);
    return m;
}

void SavingsModel::validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0,1)");
    if (!(gamma > 0.0) || gamma == 1.0) throw ConfigError("gamma must be positive and different from 1");
    if (!(w_min > 0.0 && w_min < w_max)) throw ConfigError("wealth bounds need 0 < w_min < w_max");
    eta.validate();
    y.validate();
    const auto want = variant == SavingsVariant::reducible ? ShockSpec::Family::uniform : ShockSpec::Family::lognormal;
    if (eta.family != want || y.family != want)
        throw ConfigError("shock families do not match the model variant");
}

std::span<const std::string_view> savings_config_keys() {
    static constexpr std::array<std::string_view, 18> keys = {
        "variant", "beta",  "gamma", "eta_mu", "eta_sigma", "y_mu",          "y_sigma",    "eta_lo", "eta_hi",
        "y_lo",    "y_hi",  "w_min", "w_max",  "n_grid",    "n_consumption", "quad_nodes", "opi_m",  "opi_tol"};
    return keys;
}

SavingsSetup savings_from_config(const KeyValueConfig& cfg) {
    const std::string variant = cfg.get_string("variant", "irreducible");
    SavingsSetup s;
    if (variant == "irreducible") {
        s.model = SavingsModel::irreducible();
        if (cfg.has("eta_lo") || cfg.has("eta_hi") || cfg.has("y_lo") || cfg.has("y_hi"))
            throw ConfigError("uniform-shock keys are only valid with variant=reducible");
        s.model.eta = ShockSpec::lognormal(cfg.get_double("eta_mu", s.model.eta.a), cfg.get_double("eta_sigma", s.model.eta.b));
        s.model.y = ShockSpec::lognormal(cfg.get_double("y_mu", s.model.y.a), cfg.get_double("y_sigma", s.model.y.b));
    } else if (variant == "reducible") {
        s.model = SavingsModel::reducible();
        if (cfg.has("eta_mu") || cfg.has("eta_sigma") || cfg.has("y_mu") || cfg.has("y_sigma"))
            throw ConfigError("log-normal keys are only valid with variant=irreducible");
        s.model.eta = ShockSpec::uniform(cfg.get_double("eta_lo", s.model.eta.a), cfg.get_double("eta_hi", s.model.eta.b));
        s.model.y = ShockSpec::uniform(cfg.get_double("y_lo", s.model.y.a), cfg.get_double("y_hi", s.model.y.b));
    } else {
        throw ConfigError("variant must be 'irreducible' or 'reducible', got '" + variant + "'");
    }
    s.model.beta = cfg.get_double("beta", s.model.beta);
    s.model.gamma = cfg.get_double("gamma", s.model.gamma);
    s.model.w_min = cfg.get_double("w_min", s.model.w_min);
    s.model.w_max = cfg.get_double("w_max", s.model.w_max);
    s.model.validate();

    auto positive = [&](const char* key, long long fallback, long long min) {
        const long long v = cfg.get_int(key, fallback);
        if (v < min) throw ConfigError(fmt::format("{} must be >= {}", key, min));
        return v;
    };
    s.solver.n_grid = static_cast<std::size_t>(positive("n_grid", static_cast<long long>(s.solver.n_grid), 2));
    s.solver.n_consumption =
        static_cast<std::size_t>(positive("n_consumption", static_cast<long long>(s.solver.n_consumption), 2));
    s.solver.quad_nodes = static_cast<std::size_t>(positive("quad_nodes", static_cast<long long>(s.solver.quad_nodes), 1));
    s.solver.opi_m = static_cast<int>(positive("opi_m", s.solver.opi_m, 1));
    s.solver.opi_tol = cfg.get_double("opi_tol", s.solver.opi_tol);
    if (!(s.solver.opi_tol > 0.0)) throw ConfigError("opi_tol must be positive");
    return s;
}

WealthGrid WealthGrid::geometric(double w_min, double w_max, std::size_t n) {
    if (n < 2 || !(w_min > 0.0 && w_min < w_max)) throw std::invalid_argument("WealthGrid: need n >= 2, 0 < w_min < w_max");
    WealthGrid g;
    g.points.resize(n);
    const double ratio = std::log(w_max / w_min) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g.points[i] = w_min * std::exp(ratio * static_cast<double>(i));
    g.points.front() = w_min;
    g.points.back() = w_max;
    return g;
}

void WealthGrid::validate() const {
    if (points.size() < 2) throw std::invalid_argument("WealthGrid: need at least two points");
    for (std::size_t i = 1; i < points.size(); ++i)
        if (!(points[i] > points[i - 1])) throw std::invalid_argument("WealthGrid: points must increase strictly");
}

ShockNodes ShockNodes::quantile(const SavingsModel& model, std::size_t k) {
    if (k == 0) throw std::invalid_argument("ShockNodes: need at least one node");
    ShockNodes nodes;
    const double weight = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
        nodes.eta.push_back({model.eta.quantile(p), weight});
        nodes.y.push_back({model.y.quantile(p), weight});
    }
    return nodes;
}

void ShockNodes::validate() const {
    for (const auto* set : {&eta, &y}) {
        double total = 0.0;
        for (const auto& n : *set) {
            if (!(n.weight > 0.0)) throw std::invalid_argument("ShockNodes: weights must be positive");
            total += n.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("ShockNodes: weights must sum to one");
    }
}

double crra_utility(double c, double gamma) {
    if (!(c > 0.0)) throw std::domain_error("crra_utility: consumption must be positive");
    if (gamma == 1.0) throw std::domain_error("crra_utility: gamma = 1 (log utility) is not supported");
    if (gamma == 2.0) return -1.0 / c;
    return std::pow(c, 1.0 - gamma) / (1.0 - gamma);
}

double crra_marginal_utility(double c, double gamma) {
    if (!(c > 0.0)) throw std::domain_error("crra_marginal_utility: consumption must be positive");
    if (gamma == 2.0) return 1.0 / (c * c);
    return std::pow(c, -gamma);
}

double sample_transition(const SavingsModel& model, double w, double c, Rng& rng) {
    if (!(c > 0.0 && c <= w)) throw FeasibilityError(fmt::format("infeasible consumption c={} at wealth w={}", c, w));
    const double eta = model.eta.sample(rng);
    const double y = model.y.sample(rng);
    return next_wealth(model, w, c, eta, y);
}

ShockArrays sample_shocks(const SavingsModel& model, std::size_t n_paths, std::size_t horizon,
                          std::uint64_t stream_seed) {
    ShockArrays s;
    s.n_paths = n_paths;
    s.horizon = horizon;
    s.eta.resize(n_paths * horizon);
    s.y.resize(n_paths * horizon);
    for (std::size_t i = 0; i < n_paths; ++i) {
        Rng rng = make_stream(stream_seed, {i});
        for (std::size_t t = 0; t < horizon; ++t) {
            s.eta[i * horizon + t] = model.eta.sample(rng);
            s.y[i * horizon + t] = model.y.sample(rng);
        }
    }
    return s;
}

BatchPolicy constant_fraction_policy(double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("constant_fraction_policy: need 0 < f <= 1");
    return [fraction](std::span<const double> w, std::span<double> c) {
        for (std::size_t i = 0; i < w.size(); ++i) c[i] = fraction * w[i];
    };
}

BatchPolicy interpolated_policy(const WealthGrid& grid, std::vector<double> consumption) {
    grid.validate();
    if (consumption.size() != grid.size()) throw std::invalid_argument("interpolated_policy: size mismatch");
    return [pts = grid.points, cons = std::move(consumption)](std::span<const double> w, std::span<double> c) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double x = w[i];
            if (x <= pts.front()) {
                c[i] = cons.front() * (x / pts.front());
            } else if (x >= pts.back()) {
                c[i] = cons.back();
            } else {
                const auto hi = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), x) - pts.begin());
                const std::size_t lo = hi - 1;
                const double lambda = (x - pts[lo]) / (pts[hi] - pts[lo]);
                c[i] = (1.0 - lambda) * cons[lo] + lambda * cons[hi];
            }
            // Rounding can push the interpolant an ulp above w.
            c[i] = std::min(c[i], x);
        }
    };
}

std::vector<double> consumption_fractions(std::size_t n_consumption, double min_fraction) {
    if (n_consumption < 2) throw std::invalid_argument("consumption_fractions: need at least two actions");
    if (!(min_fraction > 0.0 && min_fraction < 1.0)) throw std::invalid_argument("consumption_fractions: bad floor");
    std::vector<double> f(n_consumption);
    const double step = (1.0 - min_fraction) / static_cast<double>(n_consumption - 1);
    for (std::size_t j = 0; j < n_consumption; ++j) f[j] = min_fraction + step * static_cast<double>(j);
    f.back() = 1.0;
    return f;
}

FiniteMDP build_savings_mdp(const SavingsModel& model, const WealthGrid& grid, const ShockNodes& nodes,
                            std::span<const double> fractions) {
    model.validate();
    grid.validate();
    nodes.validate();
    const auto& pts = grid.points;
    const std::size_t n = pts.size();
    if (std::abs(pts.front() - model.w_min) > 1e-12 || std::abs(pts.back() - model.w_max) > 1e-12)
        throw std::invalid_argument("build_savings_mdp: grid must span [w_min, w_max]");

    FiniteMDP mdp(n, fractions.size(), model.beta);
    std::vector<double> dense(n, 0.0);
    std::vector<Transition> row;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = pts[i];
        for (std::size_t j = 0; j < fractions.size(); ++j) {
            const double c = fractions[j] * w;
            std::fill(dense.begin(), dense.end(), 0.0);
            for (const auto& e : nodes.eta) {
                for (const auto& yn : nodes.y) {
                    const double wp = next_wealth(model, w, c, e.value, yn.value);
                    const double weight = e.weight * yn.weight;
                    auto hi = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), wp) - pts.begin());
                    if (hi >= n) {
                        dense[n - 1] += weight;
                        continue;
                    }
                    if (hi == 0) hi = 1;
                    const std::size_t lo = hi - 1;
                    const double lambda = (wp - pts[lo]) / (pts[hi] - pts[lo]);
                    dense[lo] += weight * (1.0 - lambda);
                    dense[hi] += weight * lambda;
                }
            }
            row.clear();
            double total = 0.0;
            for (std::size_t k = 0; k < n; ++k) total += dense[k];
            for (std::size_t k = 0; k < n; ++k)
                if (dense[k] > 0.0) row.push_back({k, dense[k] / total});
            mdp.set_action(i, j, crra_utility(c, model.gamma), row);
        }
    }
    return mdp;
}

SavingsSolution solve_savings_opi(const SavingsModel& model, const WealthGrid& grid, const ShockNodes& nodes,
                                  std::size_t n_consumption, int m, double tol, double min_fraction) {
    SavingsSolution sol;
    sol.grid = grid;
    sol.fractions = consumption_fractions(n_consumption, min_fraction);
    const FiniteMDP mdp = build_savings_mdp(model, grid, nodes, sol.fractions);
    sol.opi = solve_opi(mdp, m, tol);
    sol.value = sol.opi.value;
    sol.consumption.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        sol.consumption[i] = sol.fractions[sol.opi.policy.action[i]] * grid.points[i];
    return sol;
}

SavingsSolution solve_savings_opi(const SavingsModel& model, const SavingsSolverConfig& cfg) {
    return solve_savings_opi(model, WealthGrid::geometric(model.w_min, model.w_max, cfg.n_grid),
                             ShockNodes::quantile(model, cfg.quad_nodes), cfg.n_consumption, cfg.opi_m, cfg.opi_tol,
                             cfg.min_fraction);
}

namespace {

// Shared lockstep simulation. `wealth_out`, when given, receives [path][t].
double simulate(const SavingsModel& model, const BatchPolicy& policy, double w0, const ShockArrays& shocks,
                std::vector<double>* wealth_out) {
    const std::size_t n = shocks.n_paths;
    const std::size_t horizon = shocks.horizon;
    if (n == 0) throw std::invalid_argument("rollout: need at least one path");
    std::vector<double> w(n, w0), c(n), total(n, 0.0);
    if (wealth_out) wealth_out->assign(n * (horizon + 1), 0.0);
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        policy(w, c);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(c[i] > 0.0 && c[i] <= w[i]))
                throw FeasibilityError(fmt::format("policy infeasible on path {} at t={}: w={} c={}", i, t, w[i], c[i]));
            if (wealth_out) (*wealth_out)[i * (horizon + 1) + t] = w[i];
            total[i] += discount * crra_utility(c[i], model.gamma);
            w[i] = next_wealth(model, w[i], c[i], shocks.eta_at(i, t), shocks.y_at(i, t));
        }
        discount *= model.beta;
    }
    if (wealth_out)
        for (std::size_t i = 0; i < n; ++i) (*wealth_out)[i * (horizon + 1) + horizon] = w[i];
    double sum = 0.0;
    for (double v : total) sum += v;
    return sum / static_cast<double>(n);
}

}  // namespace

double rollout_value(const SavingsModel& model, const BatchPolicy& policy, double w0, const ShockArrays& shocks) {
    return simulate(model, policy, w0, shocks, nullptr);
}

std::vector<double> simulate_wealth(const SavingsModel& model, const BatchPolicy& policy, double w0,
                                    const ShockArrays& shocks) {
    std::vector<double> out;
    simulate(model, policy, w0, shocks, &out);
    return out;
}

double policy_lifetime_value(const SavingsModel& model, const BatchPolicy& policy, double w0, std::size_t n_paths,
                             std::size_t t_rollout, std::uint64_t seed) {
    if (!(w0 >= model.w_min && w0 <= model.w_max)) throw std::invalid_argument("policy_lifetime_value: w0 outside bounds");
    return rollout_value(model, policy, w0, sample_shocks(model, n_paths, t_rollout, seed));
}

std::vector<double> evaluate_policy_on_grid(const SavingsModel& model, const BatchPolicy& policy,
                                            std::span<const double> grid, std::size_t n_paths,
                                            std::size_t t_rollout, std::uint64_t seed) {
    std::vector<double> out(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
        out[g] = policy_lifetime_value(model, policy, grid[g], n_paths, t_rollout, derive_seed(seed, {g}));
    return out;
}

CsvTable savings_solution_csv(const SavingsSolution& sol) {
    CsvTable table;
    table.header = {"wealth", "v_star", "sigma_star"};
    for (std::size_t i = 0; i < sol.grid.size(); ++i)
        table.add_row({format_real(sol.grid.points[i]), format_real(sol.value[static_cast<Eigen::Index>(i)]),
                       format_real(sol.consumption[i])});
    return table;
}

CsvTable policy_value_csv(std::span<const double> grid, std::span<const double> values) {
    if (grid.size() != values.size()) throw std::invalid_argument("policy_value_csv: size mismatch");
    CsvTable table;
    table.header = {"wealth", "v_policy"};
    for (std::size_t i = 0; i < grid.size(); ++i) table.add_row({format_real(grid[i]), format_real(values[i])});
    return table;
}

}  // namespace dpreach
