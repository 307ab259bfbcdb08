#include "doctest.h"

#include <Eigen/LU>

#include <sstream>

#include "dpreach/errors.hpp"
#include "dpreach/finite_mdp.hpp"
#include "dpreach/rng.hpp"

using namespace dpreach;

namespace {

FinitePolicy constant_policy(std::size_t n, std::size_t a) { return {std::vector<std::size_t>(n, a)}; }

double sup(const Eigen::VectorXd& v) { return v.lpNorm<Eigen::Infinity>(); }

// v* by brute force: componentwise max over every deterministic policy.
Eigen::VectorXd enumerated_optimum(const FiniteMDP& mdp) {
    Eigen::VectorXd best = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mdp.n_states()), -1e300);
    for (const auto& p : enumerate_policies(mdp)) best = best.cwiseMax(policy_value(mdp, p));
    return best;
}

}  // namespace

TEST_CASE("two-state instance matches its definition") {
    const FiniteMDP mdp = build_two_state();
    CHECK(mdp.beta() == 0.9);
    CHECK(mdp.reward(0, 0) == 0.0);
    CHECK(mdp.reward(0, 1) == 1.0);
    CHECK(mdp.reward(1, 1) == 2.0);
    REQUIRE(mdp.feasible(1).size() == 1);
    CHECK(mdp.feasible(1)[0] == 1);
    CHECK_FALSE(mdp.is_feasible(1, 0));
    CHECK(mdp.feasible(0).size() == 2);

    const Eigen::MatrixXd P = mdp.policy_matrix(constant_policy(2, 1));
    CHECK(P == Eigen::MatrixXd::Identity(2, 2));
}

TEST_CASE("policy_value on the two-state instance") {
    const FiniteMDP mdp = build_two_state();
    const ValueVector v_sigma = policy_value(mdp, constant_policy(2, 1));
    CHECK(v_sigma[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(v_sigma[1] == doctest::Approx(20.0).epsilon(1e-12));

    const ValueVector v_pi = policy_value(mdp, FinitePolicy{{0, 1}});
    CHECK(std::abs(v_pi[0]) <= 1e-12);
    CHECK(v_pi[1] == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("policy_value of a single-state MDP is a geometric series") {
    FiniteMDP mdp(1, 1, 0.9);
    const double stay[] = {1.0};
    mdp.set_action(0, 0, 1.0, stay);
    CHECK(policy_value(mdp, constant_policy(1, 0))[0] == doctest::Approx(10.0).epsilon(1e-13));
}

TEST_CASE("policy_value is a fixed point of T_sigma") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FiniteMDP mdp = random_mdp(12, 3, seed);
        Rng rng = make_stream(seed, {1});
        FinitePolicy sigma{std::vector<std::size_t>(12)};
        for (auto& a : sigma.action) a = rng() % 3;
        const ValueVector v = policy_value(mdp, sigma);
        CHECK(sup(apply_policy_operator(mdp, sigma, v) - v) <= 1e-10);
    }
}

TEST_CASE("bellman_backup") {
    const FiniteMDP mdp = build_two_state();

    SUBCASE("at v_sigma = (10, 20)") {
        const BellmanResult b = bellman_backup(mdp, ValueVector{{10.0, 20.0}});
        CHECK(b.value[0] == doctest::Approx(10.0).epsilon(1e-14));
        CHECK(b.value[1] == doctest::Approx(20.0).epsilon(1e-14));
        CHECK(b.greedy == constant_policy(2, 1));
    }
    SUBCASE("at v = 0 returns the best feasible reward") {
        const FiniteMDP r = random_mdp(7, 4, 3);
        const BellmanResult b = bellman_backup(r, ValueVector::Zero(7));
        for (std::size_t x = 0; x < 7; ++x) {
            double best = -1e300;
            for (std::size_t a = 0; a < 4; ++a) best = std::max(best, r.reward(x, a));
            CHECK(b.value[static_cast<Eigen::Index>(x)] == best);
        }
    }
    SUBCASE("v* is a fixed point") {
        const FiniteMDP r = random_mdp(6, 3, 11);
        const ValueVector v_star = enumerated_optimum(r);
        CHECK(sup(bellman_backup(r, v_star).value - v_star) <= 1e-12);
    }
    SUBCASE("ties go to the lowest action index") {
        FiniteMDP tie(2, 3, 0.5);
        const double row[] = {0.5, 0.5};
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t a = 0; a < 3; ++a) tie.set_action(x, a, a == 0 ? 0.0 : 1.0, row);
        const BellmanResult b = bellman_backup(tie, ValueVector::Zero(2));
        CHECK(b.greedy == constant_policy(2, 1));
    }
}

TEST_CASE("monotonicity of T and T_sigma v <= T v") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const FiniteMDP mdp = random_mdp(9, 4, 100 + seed);
        Rng rng = make_stream(seed, {2});
        std::uniform_real_distribution<double> u(-5.0, 5.0), du(0.0, 2.0);
        ValueVector v(9), w(9);
        for (Eigen::Index i = 0; i < 9; ++i) {
            v[i] = u(rng);
            w[i] = v[i] + du(rng);
        }
        const ValueVector Tv = bellman_backup(mdp, v).value;
        const ValueVector Tw = bellman_backup(mdp, w).value;
        CHECK((Tv.array() <= Tw.array()).all());

        FinitePolicy sigma{std::vector<std::size_t>(9)};
        for (auto& a : sigma.action) a = rng() % 4;
        CHECK((apply_policy_operator(mdp, sigma, v).array() <= Tv.array() + 1e-14).all());
    }
}

TEST_CASE("solve_opi on the two-state instance") {
    const FiniteMDP mdp = build_two_state();
    const OpiResult r = solve_opi(mdp, 5, 1e-10);
    CHECK(std::abs(r.value[0] - 10.0) <= 1e-9);
    CHECK(std::abs(r.value[1] - 20.0) <= 1e-9);
    CHECK(r.policy == constant_policy(2, 1));
}

TEST_CASE("solve_opi with m = 1 is value function iteration") {
    const FiniteMDP mdp = random_mdp(8, 3, 5);
    const double tol = 1e-9;
    ValueVector v = ValueVector::Zero(8);
    std::size_t sweeps = 0;
    for (;;) {
        ValueVector next = bellman_backup(mdp, v).value;
        ++sweeps;
        const double change = sup(next - v);
        v = std::move(next);
        if (change <= tol) break;
    }
    const OpiResult r = solve_opi(mdp, 1, tol);
    CHECK(r.iterations == sweeps);
    CHECK(r.value == v);
}

TEST_CASE("solve_opi certificates on random MDPs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const FiniteMDP mdp = random_mdp(10, 3, 200 + seed);
        for (int m : {1, 5, 20}) {
            const double tol = 1e-10;
            const OpiResult r = solve_opi(mdp, m, tol);
            const BellmanResult b = bellman_backup(mdp, r.value);
            CHECK(sup(b.value - r.value) <= tol * (1 + 0.9) / (1 - 0.9));
            CHECK(b.greedy == r.policy);
            CHECK(sup(policy_value(mdp, r.policy) - r.value) <= 1e-8);
        }
    }
}

TEST_CASE("every policy is dominated by the OPI value") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const FiniteMDP mdp = random_mdp(4, 3, 300 + seed);
        const double tol = 1e-10;
        const OpiResult r = solve_opi(mdp, 20, tol);
        for (const auto& p : enumerate_policies(mdp))
            CHECK((policy_value(mdp, p).array() <= r.value.array() + tol).all());
        CHECK(sup(optimal_value(mdp) - enumerated_optimum(mdp)) <= 1e-10);
    }
}

TEST_CASE("solve_opi argument and limit errors") {
    const FiniteMDP mdp = random_mdp(5, 2, 1);
    CHECK_THROWS_AS(solve_opi(mdp, 0, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(solve_opi(mdp, 5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_opi(mdp, 1, 1e-12, 3), NumericalError);
}

TEST_CASE("local_optimality_residual") {
    const FiniteMDP mdp = build_two_state();
    const FinitePolicy sigma = constant_policy(2, 1);
    const FinitePolicy pi{{0, 1}};
    CHECK(std::abs(local_optimality_residual(mdp, sigma, 0, 50)) <= 1e-9);
    CHECK(std::abs(local_optimality_residual(mdp, pi, 1, 50)) <= 1e-9);
    // (v* - v_pi)(1) = 10 and P_pi = I, so every term contributes 10.
    CHECK(local_optimality_residual(mdp, pi, 0, 50) == doctest::Approx(500.0).epsilon(1e-10));
    CHECK_THROWS_AS(local_optimality_residual(mdp, pi, 2, 5), std::out_of_range);
}

TEST_CASE("local_optimality_residual agrees with explicit matrix powers") {
    const FiniteMDP mdp = random_mdp(6, 3, 17);
    const FinitePolicy sigma = constant_policy(6, 2);
    const Eigen::VectorXd gap = enumerated_optimum(mdp) - policy_value(mdp, sigma);
    const Eigen::MatrixXd P = mdp.policy_matrix(sigma);
    Eigen::MatrixXd Pn = Eigen::MatrixXd::Identity(6, 6);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(6);
    for (int n = 1; n <= 30; ++n) {
        Pn = Pn * P;
        total += Pn * gap;
    }
    for (std::size_t x = 0; x < 6; ++x)
        CHECK(local_optimality_residual(mdp, sigma, x, 30) ==
              doctest::Approx(total[static_cast<Eigen::Index>(x)]).epsilon(1e-9));
}

TEST_CASE("distribution_value") {
    const FiniteMDP mdp = build_two_state();
    const FinitePolicy sigma = constant_policy(2, 1);
    CHECK(distribution_value(mdp, sigma, Distribution::delta(2, 0)) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(distribution_value(mdp, sigma, Distribution::uniform(2)) == doctest::Approx(15.0).epsilon(1e-12));

    const FiniteMDP r = random_mdp(5, 2, 9);
    const FinitePolicy p{{0, 1, 1, 0, 1}};
    const ValueVector v = policy_value(r, p);
    for (std::size_t x = 0; x < 5; ++x)
        CHECK(distribution_value(r, p, Distribution::delta(5, x)) == doctest::Approx(v[static_cast<Eigen::Index>(x)]));

    CHECK_THROWS_AS((Distribution{Eigen::VectorXd{{0.7, 0.7}}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Distribution{Eigen::VectorXd{{1.5, -0.5}}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS(distribution_value(mdp, sigma, Distribution::uniform(3)), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::delta(2, 2), std::out_of_range);
}

TEST_CASE("equal distribution values force equal values on the support") {
    // Sample policies of small MDPs; whenever m(sigma) matches m(sigma*) for
    // a distribution, v_sigma must match v* wherever rho puts mass.
    std::size_t matched = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        FiniteMDP mdp(4, 2, 0.9);
        Rng rng = make_stream(seed, {3});
        std::uniform_real_distribution<double> u(0.0, 1.0);
        // State 3 is absorbing with one action, so policies differing only
        // off the support of rho tie on m.
        for (std::size_t x = 0; x < 4; ++x) {
            for (std::size_t a = 0; a < (x == 3 ? 1u : 2u); ++a) {
                std::vector<double> row(4, 0.0);
                if (x == 3) {
                    row[3] = 1.0;
                } else {
                    double total = 0.0;
                    for (auto& p : row) total += (p = u(rng));
                    for (auto& p : row) p /= total;
                }
                mdp.set_action(x, a, u(rng), row);
            }
        }
        const ValueVector v_star = enumerated_optimum(mdp);
        Distribution rho{Eigen::VectorXd{{0.0, 0.0, 0.0, 1.0}}};
        if (seed % 2 == 1) rho.p = Eigen::VectorXd{{0.5, 0.0, 0.0, 0.5}};
        const double m_star = rho.p.dot(v_star);
        for (const auto& p : enumerate_policies(mdp)) {
            if (std::abs(distribution_value(mdp, p, rho) - m_star) > 1e-10) continue;
            ++matched;
            const ValueVector v = policy_value(mdp, p);
            for (Eigen::Index x = 0; x < 4; ++x)
                if (rho.p[x] > 0.0) CHECK(std::abs(v[x] - v_star[x]) <= 1e-9);
        }
    }
    CHECK(matched > 40);
}

TEST_CASE("optimality at a state makes the point mass a witness") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const FiniteMDP mdp = random_mdp(3, 3, 400 + seed);
        const auto policies = enumerate_policies(mdp);
        std::vector<ValueVector> values;
        for (const auto& p : policies) values.push_back(policy_value(mdp, p));
        for (std::size_t x = 0; x < 3; ++x) {
            const auto xi = static_cast<Eigen::Index>(x);
            for (std::size_t i = 0; i < policies.size(); ++i) {
                bool best_at_x = true;
                for (const auto& w : values) best_at_x = best_at_x && values[i][xi] >= w[xi] - 1e-12;
                if (!best_at_x) continue;
                const double m = distribution_value(mdp, policies[i], Distribution::delta(3, x));
                for (const auto& p : policies)
                    CHECK(m >= distribution_value(mdp, p, Distribution::delta(3, x)) - 1e-12);
            }
        }
    }
}

TEST_CASE("local optimality at a state does not imply global optimality without irreducibility") {
    const FiniteMDP mdp = build_two_state();
    const FinitePolicy pi{{0, 1}};
    const ValueVector v_star = optimal_value(mdp);
    const ValueVector v_pi = policy_value(mdp, pi);
    CHECK(std::abs(v_pi[1] - v_star[1]) <= 1e-10);
    CHECK(v_pi[0] < v_star[0] - 1.0);
}

TEST_CASE("FiniteMDP construction errors") {
    CHECK_THROWS_AS(FiniteMDP(0, 1, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(FiniteMDP(2, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(FiniteMDP(2, 1, 0.0), std::invalid_argument);

    FiniteMDP mdp(2, 2, 0.9);
    const double short_row[] = {1.0};
    const double bad_sum[] = {0.5, 0.4};
    const double negative[] = {1.5, -0.5};
    const double ok[] = {0.25, 0.75};
    CHECK_THROWS_AS(mdp.set_action(0, 0, 0.0, short_row), std::invalid_argument);
    CHECK_THROWS_AS(mdp.set_action(0, 0, 0.0, bad_sum), std::invalid_argument);
    CHECK_THROWS_AS(mdp.set_action(0, 0, 0.0, negative), std::invalid_argument);
    CHECK_THROWS_AS(mdp.set_action(2, 0, 0.0, ok), std::out_of_range);
    CHECK_THROWS_AS(mdp.set_action(0, 0, std::nan(""), ok), std::invalid_argument);
    CHECK_THROWS_AS(mdp.set_action(0, 0, 0.0, std::vector<Transition>{{5, 1.0}}), std::out_of_range);

    mdp.set_action(0, 0, 0.0, ok);
    CHECK_THROWS_AS(mdp.validate(), std::invalid_argument);
    mdp.set_action(1, 1, 0.0, ok);
    CHECK_NOTHROW(mdp.validate());
    CHECK_THROWS_AS(mdp.check_policy(FinitePolicy{{1, 1}}), FeasibilityError);
    CHECK_THROWS_AS(mdp.check_policy(FinitePolicy{{0}}), std::invalid_argument);
    CHECK_THROWS_AS(policy_value(mdp, FinitePolicy{{0, 0}}), FeasibilityError);
}

TEST_CASE("enumerate_policies") {
    const FiniteMDP mdp = build_two_state();
    const auto all = enumerate_policies(mdp);
    REQUIRE(all.size() == 2);
    CHECK(all[0] == FinitePolicy{{0, 1}});
    CHECK(all[1] == FinitePolicy{{1, 1}});
    CHECK_THROWS_AS(enumerate_policies(random_mdp(10, 5, 0), 1000), std::length_error);
}

TEST_CASE("value_csv") {
    const CsvTable t = value_csv(ValueVector{{10.0, 0.1}}, 1);
    CHECK(t.header == std::vector<std::string>{"state", "value"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0] == std::vector<std::string>{"1", "10"});
    CHECK(t.rows[1] == std::vector<std::string>{"2", "0.1"});
    CHECK(value_csv(ValueVector{{1.0}}).rows[0][0] == "0");
}
