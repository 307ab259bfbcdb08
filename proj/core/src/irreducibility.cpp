#include "dpreach/irreducibility.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dpreach {
namespace {

std::vector<bool> reachable_from(const Eigen::MatrixXd& P, std::size_t start, bool reverse) {
    const auto n = static_cast<std::size_t>(P.rows());
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        for (std::size_t y = 0; y < n; ++y) {
            const double p = reverse ? P(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x))
                                     : P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
            if (p > 0.0 && !seen[y]) {
                seen[y] = true;
                stack.push_back(y);
            }
        }
    }
    return seen;
}

}  // namespace

FiniteKernel::FiniteKernel(Eigen::MatrixXd P) : P_(std::move(P)) {
    if (P_.rows() == 0 || P_.rows() != P_.cols()) throw std::invalid_argument("FiniteKernel: matrix must be square");
    if ((P_.array() < 0.0).any() || !P_.allFinite())
        throw std::invalid_argument("FiniteKernel: entries must be finite and nonnegative");
    for (Eigen::Index i = 0; i < P_.rows(); ++i)
        if (std::abs(P_.row(i).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("FiniteKernel: row " + std::to_string(i) + " is not stochastic");
}

FiniteKernel FiniteKernel::from_policy(const FiniteMDP& mdp, const FinitePolicy& sigma) {
    return FiniteKernel(mdp.policy_matrix(sigma));
}

bool is_discretely_irreducible(const FiniteKernel& k) {
    // Strongly connected iff state 0 reaches everything and everything reaches 0.
    const auto fwd = reachable_from(k.matrix(), 0, false);
    const auto bwd = reachable_from(k.matrix(), 0, true);
    for (std::size_t y = 0; y < k.size(); ++y)
        if (!fwd[y] || !bwd[y]) return false;
    return true;
}

bool is_strongly_irreducible_bruteforce(const FiniteKernel& k) {
    const Eigen::MatrixXd& P = k.matrix();
    Eigen::MatrixXd power = P;
    Eigen::MatrixXd total = P;
    for (std::size_t m = 2; m <= k.size(); ++m) {
        power = power * P;
        total += power;
    }
    return (total.array() > 0.0).all();
}

std::set<std::size_t> accessible_set(const FiniteKernel& k, std::size_t x) {
    if (x >= k.size()) throw std::out_of_range("accessible_set: state out of range");
    const Eigen::MatrixXd& P = k.matrix();
    // Seed the search with one-step successors so that x itself only appears
    // when it lies on a cycle.
    std::vector<bool> seen(k.size(), false);
    std::vector<std::size_t> stack;
    for (std::size_t y = 0; y < k.size(); ++y) {
        if (P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) > 0.0) {
            seen[y] = true;
            stack.push_back(y);
        }
    }
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t y = 0; y < k.size(); ++y) {
            if (P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(y)) > 0.0 && !seen[y]) {
                seen[y] = true;
                stack.push_back(y);
            }
        }
    }
    std::set<std::size_t> out;
    for (std::size_t y = 0; y < k.size(); ++y)
        if (seen[y]) out.insert(y);
    return out;
}

ReachabilityReport mc_reachability(const TransitionSampler& sampler, double x0, OpenInterval target, int n_max,
                                   long long n_paths, std::uint64_t seed) {
    if (!(target.lo < target.hi)) throw std::invalid_argument("mc_reachability: empty target interval");
    if (n_max < 1 || n_paths < 1) throw std::invalid_argument("mc_reachability: n_max and n_paths must be >= 1");

    long long hits = 0;
    for (long long i = 0; i < n_paths; ++i) {
        Rng rng = make_stream(seed, {static_cast<std::uint64_t>(i)});
        double x = x0;
        for (int t = 1; t <= n_max; ++t) {
            x = sampler(x, rng);
            if (target.contains(x)) {
                ++hits;
                break;
            }
        }
    }
    ReachabilityReport report;
    report.origin = x0;
    report.target = target;
    report.n_max = n_max;
    report.n_paths = n_paths;
    report.hits = hits;
    report.estimate = static_cast<double>(hits) / static_cast<double>(n_paths);
    return report;
}

CsvTable reachability_csv(std::span<const ReachabilityReport> reports) {
    CsvTable table;
    table.header = {"origin", "target_lo", "target_hi", "n_max", "n_paths", "estimate"};
    for (const auto& r : reports)
        table.add_row({format_real(r.origin), format_real(r.target.lo), format_real(r.target.hi),
                       std::to_string(r.n_max), std::to_string(r.n_paths), format_real(r.estimate)});
    return table;
}

double reducible_wealth_bound(double eta_bar, double y_bar, double w0) {
    if (!(eta_bar > 0.0 && eta_bar < 1.0)) throw std::domain_error("reducible_wealth_bound: eta_bar must lie in (0,1)");
    if (!(y_bar >= 0.0) || !(w0 >= 0.0)) throw std::domain_error("reducible_wealth_bound: negative income or wealth");
    return eta_bar * w0 + y_bar / (1.0 - eta_bar);
}

double upper_bound_next_wealth(double eta_bar, double y_bar, double w) { return eta_bar * w + y_bar; }

double upper_bound_fixed_point(double eta_bar, double y_bar) {
    if (!(eta_bar > 0.0 && eta_bar < 1.0)) throw std::domain_error("upper_bound_fixed_point: eta_bar must lie in (0,1)");
    // The closed form can sit an ulp or two off the fixed point of the
    // floating-point map; step toward the image until the map fixes it.
    double w = y_bar / (1.0 - eta_bar);
    for (int i = 0; i < 16; ++i) {
        const double image = upper_bound_next_wealth(eta_bar, y_bar, w);
        if (image == w) return w;
        w = std::nextafter(w, image);
    }
    return y_bar / (1.0 - eta_bar);
}

}  // namespace dpreach
