#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <random>

#include "dpreach/errors.hpp"
#include "dpreach/rng.hpp"
#include "dpreach/stopping.hpp"

using namespace dpreach;

namespace {

StoppingModel model_with_cost(double cost) {
    StoppingSpec s;
    s.cost = cost;
    return build_stopping_model(s);
}

// Pointwise best over every threshold policy.
Eigen::VectorXd threshold_envelope(const StoppingModel& m) {
    Eigen::VectorXd env = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.size()), -1e300);
    for (std::size_t k = 0; k <= m.size(); ++k)
        env = env.cwiseMax(stopping_policy_value(m, StoppingPolicy::threshold(m.size(), k)));
    return env;
}

Eigen::VectorXd bellman(const StoppingModel& m, const Eigen::VectorXd& v) {
    const Eigen::VectorXd cont = (m.K * v).array() - m.cost;
    return m.pi.cwiseMax(cont);
}

Eigen::VectorXd policy_operator(const StoppingModel& m, const StoppingPolicy& s, const Eigen::VectorXd& v) {
    Eigen::VectorXd out = (m.K * v).array() - m.cost;
    for (std::size_t j = 0; j < m.size(); ++j)
        if (s.stop[j]) out[static_cast<Eigen::Index>(j)] = m.pi[static_cast<Eigen::Index>(j)];
    return out;
}

bool non_decreasing(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] < v[i - 1]) return false;
    return true;
}

}  // namespace

TEST_CASE("default model construction") {
    const StoppingModel m = build_stopping_model(StoppingSpec{});
    REQUIRE(m.size() == 201);
    CHECK((m.Q.array() > 0.0).all());
    for (Eigen::Index i = 0; i < 201; ++i) CHECK(std::abs(m.Q.row(i).sum() - 1.0) <= 1e-12);
    const double sx = 0.25 / std::sqrt(1 - 0.81);
    CHECK(m.grid[0] == doctest::Approx(-3 * sx));
    CHECK(m.grid[200] == doctest::Approx(3 * sx));
    CHECK(m.beta.minCoeff() > 0.95);
    CHECK(m.beta.maxCoeff() < 0.99);
    CHECK(m.spectral_radius < 0.99);
    CHECK(m.spectral_radius >= m.beta.minCoeff());
    CHECK(non_decreasing(m.pi));
    CHECK(m.pi[100] == doctest::Approx(0.5));
    CHECK(m.cost == 0.1);
}

TEST_CASE("constant discount gives r(K) = beta") {
    StoppingSpec s;
    s.beta_base = 0.9;
    s.beta_slope = 0.0;
    const StoppingModel m = build_stopping_model(s);
    CHECK((m.K - 0.9 * m.Q).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(m.spectral_radius == doctest::Approx(0.9).epsilon(1e-10));
}

TEST_CASE("construction errors") {
    StoppingSpec s;
    s.ar_rho = 1.0;
    CHECK_THROWS_AS(build_stopping_model(s), ConfigError);
    s = StoppingSpec{};
    s.ar_sigma = 0.0;
    CHECK_THROWS_AS(build_stopping_model(s), ConfigError);
    s = StoppingSpec{};
    s.n_grid = 2;
    CHECK_THROWS_AS(build_stopping_model(s), ConfigError);
    s = StoppingSpec{};
    s.beta_base = 1.0;
    s.beta_slope = 0.05;
    CHECK_THROWS_AS(build_stopping_model(s), NumericalError);
    s = StoppingSpec{};
    s.cost = 0.0;
    CHECK_THROWS_AS(build_stopping_model(s), ConfigError);

    // Discount factors above one are fine as long as r(K) < 1.
    const Eigen::VectorXd grid{{0.0, 1.0}};
    const Eigen::MatrixXd Q{{0.9, 0.1}, {0.9, 0.1}};
    const StoppingModel ok = make_stopping_model(grid, Q, Eigen::Vector2d(0.1, 0.2), 0.1, Eigen::Vector2d(0.9, 1.05));
    CHECK(ok.spectral_radius < 1.0);
    CHECK_THROWS_AS(make_stopping_model(grid, Q, Eigen::Vector2d(0.2, 0.1), 0.1, Eigen::Vector2d(0.9, 0.9)),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_stopping_model(grid, Eigen::MatrixXd{{1.0, 0.0}, {0.5, 0.5}}, Eigen::Vector2d(0.1, 0.2), 0.1,
                                        Eigen::Vector2d(0.9, 0.9)),
                    std::invalid_argument);
}

TEST_CASE("spectral radius") {
    CHECK(spectral_radius(Eigen::MatrixXd::Identity(4, 4)).radius == 1.0);
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Eigen::MatrixXd P(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i) {
        for (Eigen::Index j = 0; j < 6; ++j) P(i, j) = u(rng);
        P.row(i) /= P.row(i).sum();
    }
    CHECK(spectral_radius(0.9 * P).radius == doctest::Approx(0.9).epsilon(1e-10));

    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd K(5, 5);
        for (Eigen::Index i = 0; i < 25; ++i) K.data()[i] = u(rng);
        // Growth of ||K^n 1|| between n and 2n cancels the transient constant.
        Eigen::VectorXd x = Eigen::VectorXd::Ones(5);
        double log_n = 0.0, log_2n = 0.0;
        const int n = 200;
        for (int k = 1; k <= 2 * n; ++k) {
            x = K * x;
            const double s = x.lpNorm<Eigen::Infinity>();
            log_2n += std::log(s);
            x /= s;
            if (k == n) log_n = log_2n;
        }
        const double product_oracle = std::exp((log_2n - log_n) / n);
        const double estimate = spectral_radius(K).radius;
        CHECK(estimate == doctest::Approx(product_oracle).epsilon(1e-6));
        const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(K).eigenvalues();
        CHECK(estimate == doctest::Approx(ev.cwiseAbs().maxCoeff()).epsilon(1e-9));
    }

    CHECK_THROWS_AS(spectral_radius(Eigen::MatrixXd{{-1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(spectral_radius(Eigen::MatrixXd(2, 3)), std::invalid_argument);
    CHECK(spectral_radius(Eigen::MatrixXd::Zero(2, 2)).radius == 0.0);
    // Periodic matrix: growth ratios never settle.
    const Eigen::MatrixXd periodic{{0.0, 2.0}, {0.5, 0.0}};
    CHECK_THROWS_AS(spectral_radius(periodic, 1e-12, 1000), NumericalError);
}

TEST_CASE("VFI with prohibitive cost stops everywhere") {
    const StoppingModel m = model_with_cost(50.0);
    const StoppingSolution s = solve_stopping_vfi(m, 1e-10);
    CHECK(s.value == m.pi);
    CHECK(std::all_of(s.policy.stop.begin(), s.policy.stop.end(), [](bool b) { return b; }));
    CHECK(best_threshold_policy(m).threshold == 0);
    for (std::size_t x = 0; x < m.size(); x += 25) CHECK(local_global_check(m, s.policy, x, 1e-10).verified);
}

TEST_CASE("VFI with constant profit and discount matches the scalar fixed point") {
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Constant(5, 5, 0.2);
    const double beta = 0.9, cost = 0.1;
    for (double p : {-10.0, -0.5, 0.3}) {
        const StoppingModel m =
            make_stopping_model(grid, Q, Eigen::VectorXd::Constant(5, p), cost, Eigen::VectorXd::Constant(5, beta));
        // v = max(p, -c + beta v) has the solution max(p, -c / (1 - beta)).
        const double v_const = std::max(p, -cost / (1 - beta));
        const StoppingSolution s = solve_stopping_vfi(m, 1e-12);
        CHECK((s.value.array() - v_const).abs().maxCoeff() <= 1e-10);
        CHECK(s.policy.stop[0] == (p >= -cost / (1 - beta)));
    }
}

TEST_CASE("VFI on the default model") {
    for (double cost : {0.1, 0.02, 0.01}) {
        CAPTURE(cost);
        const StoppingModel m = model_with_cost(cost);
        const double tol = 1e-10;
        const StoppingSolution s = solve_stopping_vfi(m, tol);
        CHECK((s.value - m.pi).minCoeff() >= 0.0);
        CHECK(non_decreasing(s.value));

        const Eigen::VectorXd env = threshold_envelope(m);
        CHECK((s.value - env).cwiseAbs().maxCoeff() <= 10 * tol);

        const double r = m.spectral_radius;
        const Eigen::VectorXd greedy = stopping_policy_value(m, s.policy);
        CHECK((greedy - s.value).cwiseAbs().maxCoeff() <= tol * (1 + r) / (1 - r));
    }
    CHECK_THROWS_AS(solve_stopping_vfi(model_with_cost(0.01), 1e-14, 3), NumericalError);
    CHECK_THROWS_AS(solve_stopping_vfi(model_with_cost(0.01), 0.0), std::invalid_argument);
}

TEST_CASE("policy values") {
    const StoppingModel m = model_with_cost(0.05);
    const std::size_t n = m.size();
    CHECK(stopping_policy_value(m, StoppingPolicy::threshold(n, 0)) == m.pi);

    const Eigen::VectorXd never = stopping_policy_value(m, StoppingPolicy::threshold(n, n));
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(201, 201) - m.K;
    const Eigen::VectorXd oracle = A.fullPivLu().solve(Eigen::VectorXd::Constant(201, -m.cost));
    CHECK((never - oracle).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(never.maxCoeff() < 0.0);

    Rng rng(3);
    StoppingPolicy arbitrary{std::vector<bool>(n)};
    for (std::size_t j = 0; j < n; ++j) arbitrary.stop[j] = rng() % 2;
    const Eigen::VectorXd v = stopping_policy_value(m, arbitrary);
    CHECK((policy_operator(m, arbitrary, v) - v).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_THROWS_AS(stopping_policy_value(m, StoppingPolicy::threshold(3, 1)), std::invalid_argument);
}

TEST_CASE("T_sigma is globally stable") {
    const StoppingModel m = model_with_cost(0.01);
    Rng rng(8);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (std::size_t k : {0u, 50u, 120u, 201u}) {
        const StoppingPolicy s = StoppingPolicy::threshold(m.size(), k);
        Eigen::VectorXd a(201), b(201);
        for (Eigen::Index i = 0; i < 201; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        for (int it = 0; it < 3000; ++it) {
            a = policy_operator(m, s, a);
            b = policy_operator(m, s, b);
        }
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((a - stopping_policy_value(m, s)).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("T maps non-decreasing functions to non-decreasing functions") {
    const StoppingModel m = model_with_cost(0.01);
    Rng rng(12);
    std::exponential_distribution<double> step(1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd v(201);
        double level = -5.0;
        for (Eigen::Index i = 0; i < 201; ++i) v[i] = (level += 0.05 * step(rng));
        CHECK(non_decreasing(bellman(m, v)));
        CHECK(non_decreasing(m.K * v));
    }
}

TEST_CASE("v* dominates every threshold policy") {
    const StoppingModel m = model_with_cost(0.01);
    const double tol = 1e-10;
    const Eigen::VectorXd v_star = solve_stopping_vfi(m, tol).value;
    for (std::size_t k = 0; k <= m.size(); ++k) {
        const Eigen::VectorXd v = stopping_policy_value(m, StoppingPolicy::threshold(m.size(), k));
        CHECK(((v_star - v).array() >= -10 * tol).all());
    }
}

TEST_CASE("agreement at a continuation state bounds the expected gap") {
    const StoppingModel m = model_with_cost(0.01);
    const double tol = 1e-8;
    const StoppingSolution sol = solve_stopping_vfi(m, 1e-12);
    const Eigen::VectorXd v_star = stopping_policy_value(m, sol.policy);
    std::size_t tested = 0;
    for (std::size_t k = 0; k <= m.size(); ++k) {
        const StoppingPolicy s = StoppingPolicy::threshold(m.size(), k);
        const Eigen::VectorXd gap = v_star - stopping_policy_value(m, s);
        for (std::size_t x = 0; x < m.size(); ++x) {
            const auto xi = static_cast<Eigen::Index>(x);
            if (s.stop[x] || std::abs(gap[xi]) > tol) continue;
            ++tested;
            CHECK(m.Q.row(xi).dot(gap) <= tol / m.beta[xi] + 1e-12);
        }
    }
    CHECK(tested > 0);
}

TEST_CASE("best threshold policy") {
    SUBCASE("default cost: stopping everywhere is optimal") {
        const StoppingModel m = build_stopping_model(StoppingSpec{});
        const ThresholdChoice best = best_threshold_policy(m);
        CHECK(best.threshold == 0);
        CHECK(best.ref_index == 100);
        CHECK(best.value_at_ref.size() == 202);
        const Eigen::VectorXd v_star = solve_stopping_vfi(m, 1e-10).value;
        CHECK((best.value - v_star).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("reference point inside the continuation region") {
        const StoppingModel m = model_with_cost(0.01);
        const ThresholdChoice best = best_threshold_policy(m, 0);
        const StoppingSolution vfi = solve_stopping_vfi(m, 1e-10);
        std::size_t greedy_k = 0;
        while (greedy_k < m.size() && !vfi.policy.stop[greedy_k]) ++greedy_k;
        CHECK(best.threshold == greedy_k);
        CHECK(best.threshold > 0);
        CHECK((best.value - vfi.value).cwiseAbs().maxCoeff() <= 1e-9);
        for (std::size_t x = 0; x < m.size(); x += 10) {
            const LocalGlobalReport r = local_global_check(m, StoppingPolicy::threshold(m.size(), best.threshold), x, 1e-10);
            CHECK(r.verified);
        }
    }
    SUBCASE("ties go to the lowest threshold") {
        const StoppingModel m = model_with_cost(0.01);
        const ThresholdChoice best = best_threshold_policy(m, 200);
        CHECK(best.threshold == 0);
        for (std::size_t k = 0; k <= 200; ++k) CHECK(best.value_at_ref[k] == best.value_at_ref[0]);
    }
    CHECK_THROWS_AS(best_threshold_policy(model_with_cost(0.01), 201), std::out_of_range);
}

TEST_CASE("local_global_check") {
    const StoppingModel m = model_with_cost(0.01);
    const std::size_t n = m.size();

    SUBCASE("never stopping matches v* nowhere") {
        const LocalGlobalReport r = local_global_check(m, StoppingPolicy::threshold(n, n), 0, 1e-10);
        CHECK_FALSE(r.verified);
        CHECK_FALSE(r.local_match);
        CHECK(r.local_deviation > 0.0);
        CHECK(r.deviation.size() == n);
        CHECK(*std::min_element(r.deviation.begin(), r.deviation.end()) > 0.0);
    }
    SUBCASE("agreement at a stopping state does not force global agreement") {
        // Stopping everywhere earns pi, which is v* wherever v* stops.
        const LocalGlobalReport r = local_global_check(m, StoppingPolicy::threshold(n, 0), n - 1, 1e-10);
        CHECK(r.local_match);
        CHECK_FALSE(r.global_match);
        CHECK_FALSE(r.verified);
        CHECK(r.max_deviation > 1e-3);
    }
    CHECK_THROWS_AS(local_global_check(m, StoppingPolicy::threshold(n, 0), n, 1e-10), std::out_of_range);
}

TEST_CASE("stopping CSVs and config") {
    const StoppingModel m = model_with_cost(0.05);
    const StoppingSolution s = solve_stopping_vfi(m, 1e-10);
    const CsvTable t = stopping_solution_csv(m, s);
    CHECK(t.header == std::vector<std::string>{"x", "pi", "v_star", "stop_flag"});
    CHECK(t.rows.size() == 201);
    CHECK((t.rows[200][3] == "1"));
    const CsvTable th = threshold_csv(best_threshold_policy(m));
    CHECK(th.header == std::vector<std::string>{"threshold", "value_at_ref"});
    CHECK(th.rows.size() == 202);
    CHECK(th.rows[0][0] == "0");

    const StoppingSpec spec = stopping_spec_from(KeyValueConfig::parse("ar_rho=0.5\nn_grid=11\ncost=0.2\nbeta_slope=0\n"));
    CHECK(spec.ar_rho == 0.5);
    CHECK(spec.n_grid == 11);
    CHECK(spec.cost == 0.2);
    CHECK(spec.beta_slope == 0.0);
    CHECK(spec.beta_base == 0.95);
    CHECK_THROWS_AS(stopping_spec_from(KeyValueConfig::parse("n_grid=2")), ConfigError);
    CHECK_THROWS_AS(stopping_spec_from(KeyValueConfig::parse("cost=x")), ConfigError);
}
