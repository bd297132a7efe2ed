#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmbpo/discovery.hpp"
#include "cmbpo/sac.hpp"
#include "cmbpo/scm.hpp"

namespace cmbpo {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Variant { Sac, Mbpo, Cmbpo };

Variant variant_from_name(const std::string& name);
const std::string& variant_name(Variant v);

struct TrainConfig {
    Variant variant = Variant::Cmbpo;
    int episodes = 100;
    int horizon = 200;
    int warmup_steps = 2000;        // random-policy env steps before training
    int model_train_steps = 200;    // K: SCM gradient steps per episode
    int rollouts_per_step = 4;      // M_r: model rollouts per env step
    int rollout_depth = 1;          // h
    int updates_per_step = 1;       // G: gradient updates per env step
    // Real-data mixing schedule: `mix_initial` until `mix_hold_episodes`,
    // linear decay to `mix_final` by `mix_decay_end`, constant after.
    double mix_initial = 0.5;
    double mix_final = 0.0;
    int mix_hold_episodes = 20;
    int mix_decay_end = 50;
    // Discovery settings.
    double discovery_alpha = 0.01;
    bool oracle_ci = false;
    CiTestFamily ci_family = CiTestFamily::FisherZ;
    size_t buffer_capacity = 1000000;
    ScmHyper scm;
    SacConfig sac;

    void validate() const;
};

/// Realized real-data fraction for episode e (0-based).
double real_fraction(const TrainConfig& cfg, int episode);

/// Draw ceil(fraction * batch) transitions from the env buffer and the
/// remainder from the model buffer, uniformly. A shortage on one side
/// is filled from the other and counted.
struct MixedBatch {
    std::vector<Transition> transitions;
    int shortage = 0;  // samples redirected because a buffer was empty
};

MixedBatch mix_batches(const ReplayBuffer& env_buf,
                       const ReplayBuffer& model_buf, double fraction,
                       int batch, Rng& rng);

/// FNV-1a over the raw transition payloads; used to compare update
/// inputs across variants.
std::uint64_t batch_hash(const std::vector<Transition>& batch);

struct MetricsRow {
    int episode;
    long step;
    std::string variant;
    double episode_return;
    double critic_loss;
    double actor_loss;
    double temperature;
    double model_nll;
    double real_fraction;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

struct TrainResult {
    SacAgent agent;
    std::vector<double> returns;  // per-episode training return
    std::optional<CausalGraph> graph;  // discovery output (cmbpo)
    std::optional<LearnedSCM> scm;     // learned model (mbpo/cmbpo)
    std::vector<MetricsRow> metrics;
    std::vector<std::uint64_t> update_hashes;  // one per policy update
    double final_model_nll = 0.0;
    std::uint64_t rng_cursor_env = 0, rng_cursor_agent = 0,
                  rng_cursor_model = 0;
};

/// Shared training loop for the three agents. All variants consume the
/// env and agent rng sub-streams identically; model-side work draws
/// only from the model sub-stream, so MBPO/C-MBPO at real fraction 1
/// reproduce SAC's update inputs bit for bit.
TrainResult train_agent(const EnvSpec& base_spec, const TrainConfig& cfg,
                        std::uint64_t seed);

/// Fully connected candidate graph (the non-causal MBPO model).
CausalGraph fully_connected_graph();

/// Warmup-only data collection under the uniform random policy.
std::vector<Transition> collect_warmup(const EnvSpec& spec, int steps,
                                       Rng& env_rng, Rng& agent_rng);

/// Checkpoint bundle: config + agent + scm + graph + rng cursors.
nlohmann::json checkpoint_to_json(const TrainResult& result,
                                  const TrainConfig& cfg,
                                  const EnvSpec& spec);
struct Checkpoint {
    SacAgent agent;
    std::optional<LearnedSCM> scm;
    std::optional<CausalGraph> graph;
    EnvSpec spec;
    Variant variant;
};
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace cmbpo
