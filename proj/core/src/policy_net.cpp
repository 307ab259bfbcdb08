#include "dpreach/policy_net.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dpreach/errors.hpp"
#include "dpreach/rng.hpp"

namespace dpreach {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layer {
    Eigen::Index in;
    Eigen::Index out;
    std::size_t weight_offset;
    std::size_t bias_offset;
};

std::vector<Layer> layout(const Architecture& arch) {
    const auto sizes = arch.layer_sizes();
    std::vector<Layer> layers;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Layer layer{static_cast<Eigen::Index>(sizes[l]), static_cast<Eigen::Index>(sizes[l + 1]), offset, 0};
        offset += sizes[l] * sizes[l + 1];
        layer.bias_offset = offset;
        offset += sizes[l + 1];
        layers.push_back(layer);
    }
    return layers;
}

Eigen::Map<const RowMat> weights(const Eigen::VectorXd& theta, const Layer& l) {
    return {theta.data() + l.weight_offset, l.out, l.in};
}
Eigen::Map<const Eigen::VectorXd> bias(const Eigen::VectorXd& theta, const Layer& l) {
    return {theta.data() + l.bias_offset, l.out};
}

// tanh(x) = 1 - 2 / (exp(2x) + 1); Eigen vectorizes exp for doubles but not
// tanh. Absolute error stays at the 1e-16 level.
void tanh_in_place(Eigen::MatrixXd& h) {
    auto a = h.array();
    a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

// Activations of one batch through the network.
struct Activations {
    Eigen::MatrixXd input;               // input_dim x N
    std::vector<Eigen::MatrixXd> hidden;  // tanh outputs, width x N
    Eigen::RowVectorXd share;            // clamped logistic output
    std::vector<std::uint8_t> clamped;
};

class Network {
public:
    explicit Network(const PolicyParams& params) : params_(params), layers_(layout(params.arch)) {}

    void run(std::span<const double> w, Activations& act) const {
        const auto n = static_cast<Eigen::Index>(w.size());
        const auto in_dim = static_cast<Eigen::Index>(params_.arch.input_dim);
        act.input.resize(in_dim, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            act.input(0, i) = w[static_cast<std::size_t>(i)];
            if (in_dim > 1) act.input(1, i) = std::log1p(w[static_cast<std::size_t>(i)]);
        }
        act.hidden.resize(layers_.size() - 1);
        const Eigen::MatrixXd* prev = &act.input;
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            auto& h = act.hidden[l];
            h.resize(layers_[l].out, n);
            h.noalias() = weights(params_.theta, layers_[l]) * (*prev);
            h.colwise() += bias(params_.theta, layers_[l]);
            tanh_in_place(h);
            prev = &h;
        }
        const Layer& top = layers_.back();
        Eigen::RowVectorXd z = weights(params_.theta, top) * (*prev);
        z.array() += bias(params_.theta, top)[0];
        act.share.resize(n);
        act.clamped.assign(static_cast<std::size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 1.0 / (1.0 + std::exp(-z[i]));
            if (s < kMinConsumptionShare) {
                s = kMinConsumptionShare;
                act.clamped[static_cast<std::size_t>(i)] = 1;
            } else if (s > kMaxConsumptionShare) {
                s = kMaxConsumptionShare;
                act.clamped[static_cast<std::size_t>(i)] = 1;
            }
            act.share[i] = s;
        }
    }

    // Accumulates parameter gradients for upstream dL/dz (1 x N) and returns
    // dL/dinput (input_dim x N).
    Eigen::MatrixXd backward(const Activations& act, const Eigen::RowVectorXd& dz, Eigen::VectorXd& grad) const {
        Eigen::MatrixXd delta = dz;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const Layer& layer = layers_[l];
            const Eigen::MatrixXd& prev = l == 0 ? act.input : act.hidden[l - 1];
            Eigen::Map<RowMat> gw(grad.data() + layer.weight_offset, layer.out, layer.in);
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.bias_offset, layer.out);
            gw.noalias() += delta * prev.transpose();
            gb += delta.rowwise().sum();
            Eigen::MatrixXd down = weights(params_.theta, layer).transpose() * delta;
            if (l == 0) return down;
            delta = down.array() * (1.0 - prev.array().square());
        }
        return {};
    }

private:
    const PolicyParams& params_;
    std::vector<Layer> layers_;
};

struct StepTape {
    Activations act;
    std::vector<double> w;
    std::vector<double> c;
    std::vector<std::uint8_t> wealth_free;  // next-wealth clip inactive
};

void check_shocks(const PolicyParams& params, const ShockArrays& shocks, const SavingsModel& model, double w0) {
    params.validate();
    if (shocks.n_paths == 0) throw std::invalid_argument("rollout: need at least one path");
    if (shocks.eta.size() != shocks.n_paths * shocks.horizon || shocks.y.size() != shocks.eta.size())
        throw std::invalid_argument("rollout: shock arrays have the wrong shape");
    if (!(w0 >= model.w_min && w0 <= model.w_max)) throw std::invalid_argument("rollout: w0 outside wealth bounds");
}

// Forward rollout shared by rollout_loss and rollout_loss_and_grad.
double run_rollout(const SavingsModel& model, const PolicyParams& params, double w0, const ShockArrays& shocks,
                   double beta, std::vector<StepTape>* tape, std::vector<std::uint8_t>* saturation) {
    check_shocks(params, shocks, model, w0);
    const Network net(params);
    const std::size_t n = shocks.n_paths;
    const std::size_t horizon = shocks.horizon;
    std::vector<double> w(n, w0), c(n), total(n, 0.0);
    Activations scratch;
    if (tape) tape->resize(horizon);
    if (saturation) saturation->assign(2 * n * horizon, 0);

    double discount = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        Activations& act = tape ? (*tape)[t].act : scratch;
        net.run(w, act);
        std::vector<std::uint8_t> free_flags(n, 1);
        if (tape) (*tape)[t].w = w;
        for (std::size_t i = 0; i < n; ++i) {
            c[i] = w[i] * act.share[static_cast<Eigen::Index>(i)];
            const double u = crra_utility(c[i], model.gamma);
            total[i] += discount * u;
            if (!std::isfinite(total[i]))
                throw NumericalError(fmt::format("non-finite loss on path {} at t={} (w={}, c={})", i, t, w[i], c[i]));
            const double raw = shocks.eta_at(i, t) * (w[i] - c[i]) + shocks.y_at(i, t);
            if (raw < model.w_min || raw > model.w_max) free_flags[i] = 0;
            if (saturation) {
                (*saturation)[2 * (i * horizon + t)] = act.clamped[i];
                (*saturation)[2 * (i * horizon + t) + 1] = free_flags[i];
            }
            w[i] = next_wealth(model, w[i], c[i], shocks.eta_at(i, t), shocks.y_at(i, t));
        }
        if (tape) {
            (*tape)[t].c = c;
            (*tape)[t].wealth_free = std::move(free_flags);
        }
        discount *= beta;
    }
    double sum = 0.0;
    for (double v : total) sum += v;
    return -(sum / static_cast<double>(n));
}

}  // namespace

std::vector<std::size_t> Architecture::layer_sizes() const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return sizes;
}

std::size_t Architecture::parameter_count() const {
    const auto sizes = layer_sizes();
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) d += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return d;
}

void Architecture::validate() const {
    if (input_dim < 1 || input_dim > 2) throw ConfigError("input_dim must be 1 ([w]) or 2 ([w, log(1+w)])");
    for (std::size_t width : hidden)
        if (width < 1) throw ConfigError("hidden layer widths must be >= 1");
}

void PolicyParams::validate() const {
    arch.validate();
    if (static_cast<std::size_t>(theta.size()) != arch.parameter_count())
        throw std::invalid_argument("PolicyParams: parameter vector does not match architecture");
    if (!theta.allFinite()) throw NumericalError("PolicyParams: non-finite parameter");
}

PolicyParams init_network(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    PolicyParams p{arch, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.parameter_count()))};
    Rng rng = make_stream(seed, {0x696e6974});
    for (const Layer& l : layout(arch)) {
        const double a = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> dist(-a, a);
        for (std::size_t k = 0; k < static_cast<std::size_t>(l.in * l.out); ++k)
            p.theta[static_cast<Eigen::Index>(l.weight_offset + k)] = dist(rng);
    }
    return p;
}

void forward_batch(const PolicyParams& params, std::span<const double> wealth, std::span<double> consumption) {
    params.validate();
    if (wealth.size() != consumption.size()) throw std::invalid_argument("forward_batch: size mismatch");
    const Network net(params);
    Activations act;
    net.run(wealth, act);
    for (std::size_t i = 0; i < wealth.size(); ++i) consumption[i] = wealth[i] * act.share[static_cast<Eigen::Index>(i)];
}

double forward(const PolicyParams& params, double w) {
    double c = 0.0;
    forward_batch(params, std::span<const double>(&w, 1), std::span<double>(&c, 1));
    return c;
}

BatchPolicy as_batch_policy(const PolicyParams& params) {
    return [params](std::span<const double> w, std::span<double> c) { forward_batch(params, w, c); };
}

double rollout_loss(const SavingsModel& model, const PolicyParams& params, double w0, const ShockArrays& shocks,
                    double beta, std::vector<std::uint8_t>* saturation) {
    return run_rollout(model, params, w0, shocks, beta, nullptr, saturation);
}

LossAndGrad rollout_loss_and_grad(const SavingsModel& model, const PolicyParams& params, double w0,
                                  const ShockArrays& shocks, double beta) {
    std::vector<StepTape> tape;
    LossAndGrad out;
    out.loss = run_rollout(model, params, w0, shocks, beta, &tape, nullptr);
    out.grad = Eigen::VectorXd::Zero(params.theta.size());

    const Network net(params);
    const std::size_t n = shocks.n_paths;
    const std::size_t horizon = shocks.horizon;
    const auto n_idx = static_cast<Eigen::Index>(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    const bool log_feature = params.arch.input_dim > 1;

    std::vector<double> discount(horizon);
    double d = 1.0;
    for (std::size_t t = 0; t < horizon; ++t, d *= beta) discount[t] = d;

    // lambda[i] = dL/dw_{i,t+1}, zero beyond the horizon.
    std::vector<double> lambda(n, 0.0), g_c(n);
    Eigen::RowVectorXd dz(n_idx);
    for (std::size_t t = horizon; t-- > 0;) {
        const StepTape& step = tape[t];
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double carry = step.wealth_free[i] ? lambda[i] * shocks.eta_at(i, t) : 0.0;
            g_c[i] = -discount[t] * inv_n * crra_marginal_utility(step.c[i], model.gamma) - carry;
            const double s = step.act.share[ii];
            dz[ii] = step.act.clamped[i] ? 0.0 : g_c[i] * step.w[i] * s * (1.0 - s);
            lambda[i] = carry + g_c[i] * s;
        }
        const Eigen::MatrixXd d_input = net.backward(step.act, dz, out.grad);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            double dw = d_input(0, ii);
            if (log_feature) dw += d_input(1, ii) / (1.0 + step.w[i]);
            lambda[i] += dw;
        }
    }
    return out;
}

GradCheckReport grad_check(const SavingsModel& model, const PolicyParams& params, double w0, std::size_t n_paths,
                           std::size_t horizon, std::uint64_t seed, std::size_t n_coords, double step) {
    const ShockArrays shocks = sample_shocks(model, n_paths, horizon, derive_seed(seed, {0x6763}));
    const LossAndGrad analytic = rollout_loss_and_grad(model, params, w0, shocks, model.beta);
    std::vector<std::uint8_t> base_pattern;
    rollout_loss(model, params, w0, shocks, model.beta, &base_pattern);

    const auto d = static_cast<std::size_t>(params.theta.size());
    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    Rng rng = make_stream(seed, {0x636f6f7264});
    const std::size_t k = std::min(n_coords, d);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(coords[i], coords[pick(rng)]);
    }
    coords.resize(k);

    const double floor = 1e-8 * std::max(1.0, analytic.grad.lpNorm<Eigen::Infinity>());
    GradCheckReport report;
    PolicyParams probe = params;
    std::vector<std::uint8_t> pattern_plus, pattern_minus;
    for (std::size_t j : coords) {
        const auto jj = static_cast<Eigen::Index>(j);
        probe.theta[jj] = params.theta[jj] + step;
        const double plus = rollout_loss(model, probe, w0, shocks, model.beta, &pattern_plus);
        probe.theta[jj] = params.theta[jj] - step;
        const double minus = rollout_loss(model, probe, w0, shocks, model.beta, &pattern_minus);
        probe.theta[jj] = params.theta[jj];
        if (pattern_plus != base_pattern || pattern_minus != base_pattern) {
            report.excluded.push_back(j);
            continue;
        }
        const double fd = (plus - minus) / (2.0 * step);
        const double g = analytic.grad[jj];
        const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.checked;
    }
    return report;
}

void write_params(std::ostream& out, const PolicyParams& params) {
    params.validate();
    out << "mlp-policy v1\n";
    const auto sizes = params.arch.layer_sizes();
    for (std::size_t i = 0; i < sizes.size(); ++i) out << (i ? " " : "") << sizes[i];
    out << '\n';
    for (const Layer& l : layout(params.arch)) {
        for (Eigen::Index r = 0; r < l.out; ++r) {
            for (Eigen::Index col = 0; col < l.in; ++col)
                out << (col ? " " : "")
                    << fmt::format("{:.17g}", params.theta[static_cast<Eigen::Index>(l.weight_offset) + r * l.in + col]);
            out << '\n';
        }
        for (Eigen::Index r = 0; r < l.out; ++r)
            out << (r ? " " : "") << fmt::format("{:.17g}", params.theta[static_cast<Eigen::Index>(l.bias_offset) + r]);
        out << '\n';
    }
}

PolicyParams read_params(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "mlp-policy v1") throw ConfigError("policy file: missing 'mlp-policy v1' header");
    if (!std::getline(in, line)) throw ConfigError("policy file: missing layer sizes");
    std::istringstream sizes_line(line);
    std::vector<std::size_t> sizes;
    for (std::size_t s; sizes_line >> s;) sizes.push_back(s);
    if (sizes.size() < 2 || sizes.back() != 1) throw ConfigError("policy file: layer sizes must end with 1");
    PolicyParams p;
    p.arch.input_dim = sizes.front();
    p.arch.hidden.assign(sizes.begin() + 1, sizes.end() - 1);
    p.arch.validate();
    p.theta.resize(static_cast<Eigen::Index>(p.arch.parameter_count()));
    for (Eigen::Index k = 0; k < p.theta.size(); ++k) {
        std::string token;
        if (!(in >> token)) throw ConfigError("policy file: too few parameters");
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc{} || ptr != token.data() + token.size())
            throw ConfigError("policy file: bad number '" + token + "'");
        p.theta[k] = value;
    }
    std::string extra;
    if (in >> extra) throw ConfigError("policy file: trailing data");
    p.validate();
    return p;
}

void save_params(const std::filesystem::path& path, const PolicyParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_params(out, params);
    if (!out) throw IoError("write failed for " + path.string());
}

PolicyParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_params(in);
}

}  // namespace dpreach
