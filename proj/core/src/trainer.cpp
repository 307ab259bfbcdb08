#include "dpreach/trainer.hpp"

#include <fmt/format.h>

#include <array>
#include <charconv>
#include <cmath>
#include <limits>

#include "dpreach/errors.hpp"
#include "dpreach/rng.hpp"

namespace dpreach {
namespace {

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, Eigen::Index dim)
        : cfg_(cfg), m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
        if (cfg_.optimizer == OptimizerKind::plain) {
            theta -= cfg_.alpha * grad;
            return;
        }
        ++t_;
        m_ = cfg_.adam_beta1 * m_ + (1.0 - cfg_.adam_beta1) * grad;
        v_ = cfg_.adam_beta2 * v_ + (1.0 - cfg_.adam_beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
        theta.array() -= cfg_.alpha * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.adam_eps);
    }

private:
    const TrainConfig& cfg_;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    long long t_ = 0;
};

}  // namespace

void TrainConfig::validate(const SavingsModel& model) const {
    if (episodes < 1 || rollout_t < 1 || batch_n < 1 || patience < 1)
        throw ConfigError("episodes, rollout_t, batch_n and patience must be positive");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a nonnegative real");
    if (!(w_bar >= model.w_min && w_bar <= model.w_max)) throw ConfigError("w_bar must lie in [w_min, w_max]");
}

std::span<const std::string_view> train_config_keys() {
    static constexpr std::array<std::string_view, 9> keys = {"episodes", "rollout_t", "batch_n",  "alpha", "seed",
                                                             "w_bar",    "patience",  "optimizer", "hidden"};
    return keys;
}

TrainConfig train_config_from(const KeyValueConfig& cfg, std::uint64_t seed) {
    TrainConfig tc;
    auto count = [&](const char* key, std::size_t fallback) {
        const long long v = cfg.get_int(key, static_cast<long long>(fallback));
        if (v < 1) throw ConfigError(fmt::format("{} must be >= 1", key));
        return static_cast<std::size_t>(v);
    };
    tc.episodes = count("episodes", tc.episodes);
    tc.rollout_t = count("rollout_t", tc.rollout_t);
    tc.batch_n = count("batch_n", tc.batch_n);
    tc.patience = count("patience", tc.patience);
    tc.alpha = cfg.get_double("alpha", tc.alpha);
    tc.w_bar = cfg.get_double("w_bar", tc.w_bar);
    tc.seed = seed;
    const std::string opt = cfg.get_string("optimizer", "adam");
    if (opt == "adam") tc.optimizer = OptimizerKind::adam;
    else if (opt == "plain") tc.optimizer = OptimizerKind::plain;
    else throw ConfigError("optimizer must be 'adam' or 'plain', got '" + opt + "'");
    return tc;
}

Architecture architecture_from(const KeyValueConfig& cfg) {
    Architecture arch;
    if (cfg.has("hidden")) {
        arch.hidden.clear();
        const std::string list = cfg.get_string("hidden", "");
        std::size_t start = 0;
        while (start <= list.size()) {
            const auto comma = list.find(',', start);
            const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            std::size_t width = 0;
            const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), width);
            if (ec != std::errc{} || ptr != item.data() + item.size() || width == 0)
                throw ConfigError("hidden must be a comma-separated list of positive widths");
            arch.hidden.push_back(width);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    arch.validate();
    return arch;
}

std::string_view to_string(StopReason r) {
    return r == StopReason::patience ? "patience" : "max_episodes";
}

ShockArrays episode_shocks(const SavingsModel& model, const TrainConfig& cfg, std::size_t episode) {
    return sample_shocks(model, cfg.batch_n, cfg.rollout_t, derive_seed(cfg.seed, {episode}));
}

TrainResult train(const SavingsModel& model, const Architecture& arch, const TrainConfig& cfg) {
    return train(model, init_network(arch, cfg.seed), cfg);
}

TrainResult train(const SavingsModel& model, PolicyParams init, const TrainConfig& cfg) {
    model.validate();
    cfg.validate(model);
    init.validate();

    TrainResult result{init, {}};
    PolicyParams current = std::move(init);
    Optimizer opt(cfg, current.theta.size());
    double best_loss = std::numeric_limits<double>::infinity();
    double first_loss = 0.0;
    std::size_t since_best = 0;

    for (std::size_t k = 1; k <= cfg.episodes; ++k) {
        const ShockArrays shocks = episode_shocks(model, cfg, k);
        const LossAndGrad lg = rollout_loss_and_grad(model, current, cfg.w_bar, shocks, model.beta);
        if (k == 1) first_loss = lg.loss;
        if (std::abs(lg.loss) > 1e6 * std::abs(first_loss))
            throw NumericalError(fmt::format("training diverged at episode {}: loss {}", k, lg.loss));

        result.history.v_hat.push_back(-lg.loss);
        result.history.grad_norm.push_back(lg.grad.norm());
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            result.params = current;
            result.history.best_episode = k;
            result.history.best_value = -lg.loss;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            result.history.stop_reason = StopReason::patience;
            break;
        }
        opt.step(current.theta, lg.grad);
        if (!current.theta.allFinite()) throw NumericalError(fmt::format("non-finite parameters after episode {}", k));
    }
    return result;
}

CsvTable history_csv(const TrainHistory& history) {
    CsvTable table;
    table.header = {"episode", "v_hat", "grad_norm"};
    for (std::size_t k = 0; k < history.size(); ++k)
        table.add_row({std::to_string(k + 1), format_real(history.v_hat[k]), format_real(history.grad_norm[k])});
    return table;
}

void save_history(const TrainHistory& history, const std::filesystem::path& path) {
    write_csv(path, history_csv(history));
}

TrainHistory load_history(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    if (table.header != std::vector<std::string>{"episode", "v_hat", "grad_norm"})
        throw IoError("history file " + path.string() + " has an unexpected header");
    TrainHistory h;
    for (const auto& row : table.rows) {
        if (row.size() != 3) throw IoError("history file " + path.string() + ": malformed row");
        double v = 0.0, g = 0.0;
        std::from_chars(row[1].data(), row[1].data() + row[1].size(), v);
        std::from_chars(row[2].data(), row[2].data() + row[2].size(), g);
        h.v_hat.push_back(v);
        h.grad_norm.push_back(g);
    }
    return h;
}

}  // namespace dpreach
