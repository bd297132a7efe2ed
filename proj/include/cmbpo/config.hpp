#pragma once

#include <string>
#include <vector>

#include "cmbpo/env.hpp"
#include "cmbpo/eval.hpp"
#include "cmbpo/trainer.hpp"

namespace cmbpo {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Experiment configuration; defaults reproduce the robustness
/// protocol (100 training episodes of length 200, 100 evaluation
/// episodes per cell, 5 seeds, shifts id/near/far).
struct ExperimentConfig {
    EnvSpec env;
    TrainConfig train;
    int eval_episodes = 100;
    std::vector<Shift> eval_shifts = {Shift::Id, Shift::NearOod, Shift::FarOod};
    double near_ood_z = 0.0;
    std::string out_dir = "out";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int discovery_min_rows = kDefaultMinRows;

    void validate() const;
    nlohmann::json to_json() const;

    /// Strict parse: unknown keys are rejected; every offending key is
    /// listed in the error.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Parse and validate a JSON config file, applying defaults.
ExperimentConfig load_config(const std::string& path);

}  // namespace cmbpo
