// dpreach: command-line experiments.
//
//   dpreach <subcommand> [--config PATH] [--out DIR] [--seed N] [--set key=value]...
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dpreach/config.hpp"
#include "dpreach/csv.hpp"
#include "dpreach/errors.hpp"
#include "dpreach/finite_mdp.hpp"
#include "dpreach/irreducibility.hpp"
#include "dpreach/policy_net.hpp"
#include "dpreach/savings.hpp"
#include "dpreach/stopping.hpp"
#include "dpreach/trainer.hpp"

namespace fs = std::filesystem;
using namespace dpreach;

namespace {

struct Run {
    KeyValueConfig cfg;
    std::uint64_t seed = 0;
    fs::path out;

    void emit(const std::string& name, CsvTable table) const {
        table.footer = provenance_footer(seed, cfg.hash());
        write_csv(out / name, table);
        fmt::print("wrote {}\n", (out / name).string());
    }
};

using KeyList = std::vector<std::string_view>;

KeyList keys(std::initializer_list<std::span<const std::string_view>> groups, std::initializer_list<std::string_view> extra) {
    KeyList all{"seed"};
    for (auto g : groups) all.insert(all.end(), g.begin(), g.end());
    all.insert(all.end(), extra.begin(), extra.end());
    return all;
}

std::size_t count(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
    const long long v = cfg.get_int(key, static_cast<long long>(fallback));
    if (v < 1) throw ConfigError(key + " must be >= 1");
    return static_cast<std::size_t>(v);
}

std::vector<double> real_list(const KeyValueConfig& cfg, const std::string& key, const std::string& fallback) {
    std::vector<double> out;
    const std::string s = cfg.get_string(key, fallback);
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        KeyValueConfig one;
        one.set(key, s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        out.push_back(one.get_double(key, 0.0));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string fmt_vec(std::string_view label, const Eigen::VectorXd& v) {
    std::string s(label);
    for (double x : v) s += fmt::format(",{:.12g}", x);
    return s;
}

// The saved network when policy_file is set, otherwise the interpolated OPI policy.
BatchPolicy policy_from(const Run& run, const SavingsSetup& setup) {
    if (run.cfg.has("policy_file")) return as_batch_policy(load_params(run.cfg.get_string("policy_file", "")));
    const SavingsSolution sol = solve_savings_opi(setup.model, setup.solver);
    return interpolated_policy(sol.grid, sol.consumption);
}

void cmd_two_state(const Run& run) {
    run.cfg.require_known(keys({}, {}));
    const FiniteMDP mdp = build_two_state();
    const FinitePolicy sigma{{1, 1}};
    const FinitePolicy pi{{0, 1}};
    const ValueVector v_sigma = policy_value(mdp, sigma);
    const ValueVector v_pi = policy_value(mdp, pi);
    const ValueVector v_star = optimal_value(mdp);
    const bool sigma_optimal = (v_sigma - v_star).lpNorm<Eigen::Infinity>() <= 1e-10;
    const FiniteKernel k_sigma = FiniteKernel::from_policy(mdp, sigma);
    const FiniteKernel k_pi = FiniteKernel::from_policy(mdp, pi);

    fmt::print("{}\n{}\n{}\n", fmt_vec("v_sigma", v_sigma), fmt_vec("v_pi", v_pi), fmt_vec("v_star", v_star));
    fmt::print("sigma_optimal,{:d}\n", sigma_optimal);
    fmt::print("P_sigma_irreducible,{:d}\n", is_discretely_irreducible(k_sigma));
    fmt::print("P_sigma_irreducible_bruteforce,{:d}\n", is_strongly_irreducible_bruteforce(k_sigma));
    fmt::print("P_pi_irreducible,{:d}\n", is_discretely_irreducible(k_pi));

    CsvTable t;
    t.header = {"quantity", "state_1", "state_2"};
    for (auto [name, v] : {std::pair{"v_sigma", &v_sigma}, {"v_pi", &v_pi}, {"v_star", &v_star}})
        t.add_row({name, format_real((*v)[0]), format_real((*v)[1])});
    run.emit("two_state.csv", t);
}

void cmd_solve_savings(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys()}, {}));
    const SavingsSetup s = savings_from_config(run.cfg);
    const SavingsSolution sol = solve_savings_opi(s.model, s.solver);
    fmt::print("opi_iterations,{}\nbellman_residual,{:.6g}\n", sol.opi.iterations, sol.opi.bellman_residual);
    run.emit("savings_solution.csv", savings_solution_csv(sol));
}

void cmd_train(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys(), train_config_keys()}, {}));
    const SavingsSetup s = savings_from_config(run.cfg);
    const TrainConfig tc = train_config_from(run.cfg, run.seed);
    const TrainResult r = train(s.model, architecture_from(run.cfg), tc);
    fmt::print("episodes_run,{}\nbest_episode,{}\nbest_value,{:.12g}\nstop_reason,{}\n", r.history.size(),
               r.history.best_episode, r.history.best_value, to_string(r.history.stop_reason));
    run.emit("history.csv", history_csv(r.history));
    save_params(run.out / "policy.txt", r.params);
    fmt::print("wrote {}\n", (run.out / "policy.txt").string());
}

void cmd_evaluate(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys()}, {"policy_file", "eval_paths", "eval_t"}));
    if (!run.cfg.has("policy_file")) throw ConfigError("evaluate needs policy_file");
    const SavingsSetup s = savings_from_config(run.cfg);
    const BatchPolicy policy = as_batch_policy(load_params(run.cfg.get_string("policy_file", "")));
    const SavingsSolution opi = solve_savings_opi(s.model, s.solver);
    const std::vector<double>& grid = opi.grid.points;
    const std::vector<double> v = evaluate_policy_on_grid(s.model, policy, grid, count(run.cfg, "eval_paths", 1000),
                                                          count(run.cfg, "eval_t", 200), run.seed);
    CsvTable gap;
    gap.header = {"wealth", "v_star", "v_policy", "rel_gap"};
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double vs = opi.value[static_cast<Eigen::Index>(i)];
        const double rel = std::abs(vs - v[i]) / std::abs(vs);
        sup = std::max(sup, rel);
        gap.add_row({format_real(grid[i]), format_real(vs), format_real(v[i]), format_real(rel)});
    }
    fmt::print("sup_rel_gap,{:.6g}\n", sup);
    run.emit("policy_values.csv", policy_value_csv(grid, v));
    run.emit("value_gap.csv", gap);
}

void cmd_reachability(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys()}, {"w_bar", "target_lo", "target_hi", "n_max", "n_paths",
                                                         "consume_fraction", "policy_file"}));
    const SavingsSetup s = savings_from_config(run.cfg);
    const double w_bar = run.cfg.get_double("w_bar", 1.0);
    const OpenInterval target{run.cfg.get_double("target_lo", 41.0), run.cfg.get_double("target_hi", 1000.0)};
    const int n_max = static_cast<int>(count(run.cfg, "n_max", 500));
    const auto n_paths = static_cast<long long>(count(run.cfg, "n_paths", 10000));

    BatchPolicy policy;
    if (run.cfg.has("policy_file")) {
        policy = as_batch_policy(load_params(run.cfg.get_string("policy_file", "")));
    } else {
        const double f = run.cfg.get_double("consume_fraction", 1e-3);
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("consume_fraction must lie in (0,1]");
        policy = constant_fraction_policy(f);
    }
    const SavingsModel model = s.model;
    const TransitionSampler sampler = [model, policy](double w, Rng& rng) {
        double c = 0.0;
        policy(std::span<const double>(&w, 1), std::span<double>(&c, 1));
        return sample_transition(model, w, c, rng);
    };
    const ReachabilityReport r = mc_reachability(sampler, w_bar, target, n_max, n_paths, run.seed);
    fmt::print("hits,{}\nestimate,{:.12g}\n", r.hits, r.estimate);
    run.emit("reachability.csv", reachability_csv(std::span(&r, 1)));

    const double eta_bar = model.eta.support_max(), y_bar = model.y.support_max();
    if (std::isfinite(eta_bar) && std::isfinite(y_bar) && eta_bar < 1.0) {
        fmt::print("wealth_bound,{:.12g}\nupper_bound_fixed_point,{:.12g}\n",
                   reducible_wealth_bound(eta_bar, y_bar, w_bar), upper_bound_fixed_point(eta_bar, y_bar));
        CsvTable t;
        t.header = {"w", "upper_bound_next_w"};
        const std::size_t n = 201;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = model.w_max * static_cast<double>(i) / static_cast<double>(n - 1);
            t.add_row({format_real(w), format_real(upper_bound_next_wealth(eta_bar, y_bar, w))});
        }
        run.emit("upper_bound.csv", t);
    }
}

void cmd_trajectory(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys()}, {"w_bars", "t_rollout", "policy_file"}));
    const SavingsSetup s = savings_from_config(run.cfg);
    const std::vector<double> w_bars = real_list(run.cfg, "w_bars", "1,50");
    const std::size_t horizon = count(run.cfg, "t_rollout", 120);
    const BatchPolicy policy = policy_from(run, s);
    // One shock path shared by every starting point.
    const ShockArrays shocks = sample_shocks(s.model, 1, horizon, derive_seed(run.seed, {0}));
    for (double w0 : w_bars) {
        const std::vector<double> w = simulate_wealth(s.model, policy, w0, shocks);
        CsvTable t;
        t.header = {"t", "w"};
        for (std::size_t k = 0; k < w.size(); ++k) t.add_row({std::to_string(k), format_real(w[k])});
        run.emit("trajectory_w" + format_real(w0) + ".csv", t);
    }
}

void cmd_stopping(const Run& run) {
    run.cfg.require_known(keys({stopping_config_keys()}, {"vfi_tol", "check_index"}));
    const StoppingModel m = build_stopping_model(stopping_spec_from(run.cfg));
    const double tol = run.cfg.get_double("vfi_tol", 1e-10);
    if (!(tol > 0.0)) throw ConfigError("vfi_tol must be positive");
    const long long check = run.cfg.get_int("check_index", static_cast<long long>(m.size() / 2));
    if (check < 0 || static_cast<std::size_t>(check) >= m.size()) throw ConfigError("check_index out of range");

    const StoppingSolution sol = solve_stopping_vfi(m, tol);
    const ThresholdChoice best = best_threshold_policy(m, static_cast<std::size_t>(check));
    const LocalGlobalReport r = local_global_check(m, StoppingPolicy::threshold(m.size(), best.threshold),
                                                   static_cast<std::size_t>(check), tol);
    std::size_t violations = 0;
    for (Eigen::Index i = 1; i < sol.value.size(); ++i) violations += sol.value[i] < sol.value[i - 1];

    fmt::print("spectral_radius,{:.12g}\nvfi_iterations,{}\nbest_threshold,{}\n", m.spectral_radius, sol.iterations,
               best.threshold);
    fmt::print("local_match,{:d}\nglobal_match,{:d}\nverified,{:d}\nmax_deviation,{:.6g}\nmonotone_violations,{}\n",
               r.local_match, r.global_match, r.verified, r.max_deviation, violations);

    run.emit("stopping_solution.csv", stopping_solution_csv(m, sol));
    run.emit("thresholds.csv", threshold_csv(best));
    CsvTable t;
    t.header = {"x", "v_star", "v_best_threshold", "deviation"};
    for (std::size_t j = 0; j < m.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        t.add_row({format_real(m.grid[jj]), format_real(sol.value[jj]), format_real(best.value[jj]),
                   format_real(r.deviation[j])});
    }
    run.emit("local_global.csv", t);
}

void cmd_gradcheck(const Run& run) {
    run.cfg.require_known(keys({savings_config_keys()}, {"hidden", "w_bar", "batch_n", "rollout_t", "n_coords"}));
    const SavingsSetup s = savings_from_config(run.cfg);
    const PolicyParams params = init_network(architecture_from(run.cfg), run.seed);
    const GradCheckReport r =
        grad_check(s.model, params, run.cfg.get_double("w_bar", 1.0), count(run.cfg, "batch_n", 8),
                   count(run.cfg, "rollout_t", 20), run.seed, count(run.cfg, "n_coords", 20));
    fmt::print("max_rel_error,{:.6g}\nchecked,{}\nexcluded,{}\n", r.max_rel_error, r.checked, r.excluded.size());
    CsvTable t;
    t.header = {"max_rel_error", "checked", "excluded"};
    t.add_row({format_real(r.max_rel_error), std::to_string(r.checked), std::to_string(r.excluded.size())});
    run.emit("gradcheck.csv", t);
}

int fail(std::string_view kind, std::string_view message, int code) {
    std::string flat(message);
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    std::cerr << fmt::format("error={} message={}\n", kind, flat);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic-programming experiments: finite MDPs, savings, policy gradients, optimal stopping"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "RNG seed (default: config key 'seed', else 0)");
    app.add_option("--set", overrides, "override a config key, key=value (repeatable)");

    using Handler = void (*)(const Run&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
        {"two-state", "two-state counterexample values and irreducibility verdicts", cmd_two_state},
        {"solve-savings", "OPI solution of the savings problem on the wealth grid", cmd_solve_savings},
        {"train", "train the consumption network from a single initial wealth", cmd_train},
        {"evaluate", "Monte-Carlo grid values of a saved policy against OPI", cmd_evaluate},
        {"reachability", "Monte-Carlo reachability of a wealth interval", cmd_reachability},
        {"trajectory", "wealth paths from several initial levels on common shocks", cmd_trajectory},
        {"stopping", "optimal stopping: VFI, threshold enumeration, local/global check", cmd_stopping},
        {"gradcheck", "analytic vs finite-difference rollout gradient", cmd_gradcheck},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help, fn] : commands) subs.push_back(app.add_subcommand(name, help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("usage", e.what(), 2);
    }

    try {
        Run run;
        if (!config_path.empty()) run.cfg = KeyValueConfig::load(config_path);
        for (const auto& o : overrides) run.cfg.apply_override(o);
        const long long cfg_seed = run.cfg.get_int("seed", 0);
        if (!seed && cfg_seed < 0) throw ConfigError("seed must be nonnegative");
        run.seed = seed ? *seed : static_cast<std::uint64_t>(cfg_seed);
        run.out = out_dir;
        std::error_code ec;
        fs::create_directories(run.out, ec);
        if (ec || !fs::is_directory(run.out)) throw IoError("cannot create output directory " + out_dir);

        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) std::get<2>(commands[i])(run);
        return 0;
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const IoError& e) {
        return fail("io", e.what(), 4);
    } catch (const fs::filesystem_error& e) {
        return fail("io", e.what(), 4);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), 3);
    } catch (const FeasibilityError& e) {
        return fail("numerical", e.what(), 3);
    } catch (const std::logic_error& e) {
        return fail("config", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("numerical", e.what(), 3);
    }
}
