#pragma once

// Deterministic policy-gradient training of the consumption network from a
// single frozen initial wealth level.
//
// Episode k draws its shocks from derive_seed(seed, {k}); the shocks do not
// depend on w_bar, so runs that differ only in w_bar see common random
// numbers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpreach/config.hpp"
#include "dpreach/csv.hpp"
#include "dpreach/policy_net.hpp"
#include "dpreach/savings.hpp"

namespace dpreach {

enum class OptimizerKind { plain, adam };

struct TrainConfig {
    std::size_t episodes = 2000;
    std::size_t rollout_t = 120;
    std::size_t batch_n = 512;
    double alpha = 1e-3;
    std::uint64_t seed = 0;
    double w_bar = 1.0;
    std::size_t patience = 150;
    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate(const SavingsModel& model) const;
};

// Keys understood by train_config_from (plus "hidden", a comma list of widths).
std::span<const std::string_view> train_config_keys();
// Starts from TrainConfig{} and applies every key present; `seed` is taken as is.
TrainConfig train_config_from(const KeyValueConfig& cfg, std::uint64_t seed);
Architecture architecture_from(const KeyValueConfig& cfg);

enum class StopReason { max_episodes, patience };
std::string_view to_string(StopReason r);

struct TrainHistory {
    std::vector<double> v_hat;      // -loss, one per episode
    std::vector<double> grad_norm;  // Euclidean norm of the loss gradient
    std::size_t best_episode = 0;   // 1-based; 0 when empty
    double best_value = 0.0;
    StopReason stop_reason = StopReason::max_episodes;

    std::size_t size() const { return v_hat.size(); }
};

struct TrainResult {
    PolicyParams params;  // parameters at the best recorded episode
    TrainHistory history;
};

// Shocks used in (1-based) episode k.
ShockArrays episode_shocks(const SavingsModel& model, const TrainConfig& cfg, std::size_t episode);

TrainResult train(const SavingsModel& model, const Architecture& arch, const TrainConfig& cfg);
// Continues from given parameters instead of a fresh initialization.
TrainResult train(const SavingsModel& model, PolicyParams init, const TrainConfig& cfg);

// Columns episode,v_hat,grad_norm.
CsvTable history_csv(const TrainHistory& history);
void save_history(const TrainHistory& history, const std::filesystem::path& path);
// Reads back v_hat and grad_norm; best/stop bookkeeping is not stored.
TrainHistory load_history(const std::filesystem::path& path);

}  // namespace dpreach
