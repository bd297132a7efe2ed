#pragma once

#include <map>
#include <string>
#include <vector>

#include "cmbpo/env.hpp"
#include "cmbpo/sac.hpp"

namespace cmbpo {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deploy the policy (deterministic actions) for `episodes` episodes;
/// returns the per-episode sum of rewards. Each episode draws from an
/// independent rng sub-stream.
std::vector<double> evaluate_policy(const SacAgent& agent, const EnvSpec& spec,
                                    int episodes, Rng& rng);

struct Summary {
    double mean = 0.0;
    double se = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
};

/// Sample mean, standard error, and normal-approximation 95% interval.
Summary summarize(const std::vector<double>& returns);

/// One (variant, shift) cell of the robustness experiment.
struct EvalCell {
    std::string variant;  // sac | mbpo | cmbpo
    Shift shift = Shift::Id;
    std::vector<double> returns;
    Summary summary;
    int episodes = 0;
    std::vector<std::uint64_t> seeds;
};

EvalCell make_cell(const std::string& variant, Shift shift,
                   std::vector<double> returns,
                   std::vector<std::uint64_t> seeds = {});

struct VariantVerdict {
    std::string variant;
    Shift shift = Shift::Id;
    double drop = 0.0;  // ID mean - shift mean
    bool intervals_overlap = false;
    double welch_p = 1.0;
};

struct RobustnessReport {
    std::vector<EvalCell> cells;
    std::vector<VariantVerdict> verdicts;

    const EvalCell& cell(const std::string& variant, Shift shift) const;
    nlohmann::json to_json() const;
    std::string to_table() const;
    std::string to_csv() const;  // variant,shift,mean,se,lo95,hi95,B
};

/// Requires all 3 variants x 3 shifts; throws naming any missing cell.
RobustnessReport compare_shift_robustness(const std::vector<EvalCell>& cells);

/// Welch's t-test two-sided p-value for difference in means.
double welch_p_value(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cmbpo
