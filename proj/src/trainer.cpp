#include "cmbpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace cmbpo {

namespace {

// Fixed sub-stream labels; split order is part of the reproducibility
// contract.
constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kModelStream = 2;
constexpr std::uint64_t kAgentStream = 3;
constexpr std::uint64_t kDiscoveryStream = 4;

}  // namespace

Variant variant_from_name(const std::string& name) {
    if (name == "sac") return Variant::Sac;
    if (name == "mbpo") return Variant::Mbpo;
    if (name == "cmbpo") return Variant::Cmbpo;
    throw TrainError("unknown variant: " + name);
}

const std::string& variant_name(Variant v) {
    static const std::string names[] = {"sac", "mbpo", "cmbpo"};
    return names[static_cast<int>(v)];
}

void TrainConfig::validate() const {
    if (episodes < 0 || horizon < 1 || warmup_steps < 0 ||
        model_train_steps < 0 || rollouts_per_step < 0 || rollout_depth < 1 ||
        updates_per_step < 0)
        throw TrainError("train config: counts must be non-negative");
    if (mix_initial < 0.0 || mix_initial > 1.0 || mix_final < 0.0 ||
        mix_final > mix_initial)
        throw TrainError(
            "train config: real fraction must lie in [0,1] and be "
            "non-increasing");
    if (mix_decay_end < mix_hold_episodes)
        throw TrainError("train config: mix_decay_end before mix_hold_episodes");
    if (discovery_alpha <= 0.0 || discovery_alpha >= 1.0)
        throw TrainError("train config: alpha must lie in (0,1)");
}

double real_fraction(const TrainConfig& cfg, int episode) {
    if (cfg.variant == Variant::Sac) return 1.0;
    if (episode < cfg.mix_hold_episodes) return cfg.mix_initial;
    if (episode >= cfg.mix_decay_end) return cfg.mix_final;
    double span = cfg.mix_decay_end - cfg.mix_hold_episodes;
    double frac = (episode - cfg.mix_hold_episodes) / span;
    return cfg.mix_initial + frac * (cfg.mix_final - cfg.mix_initial);
}

MixedBatch mix_batches(const ReplayBuffer& env_buf,
                       const ReplayBuffer& model_buf, double fraction,
                       int batch, Rng& rng) {
    if (env_buf.empty() && model_buf.empty())
        throw TrainError("mix_batches: both buffers empty");
    int n_env = static_cast<int>(std::ceil(fraction * batch));
    n_env = std::min(n_env, batch);
    int n_model = batch - n_env;
    MixedBatch out;
    if (n_env > 0 && env_buf.empty()) {
        out.shortage += n_env;
        n_model += n_env;
        n_env = 0;
    }
    if (n_model > 0 && model_buf.empty()) {
        out.shortage += n_model;
        n_env += n_model;
        n_model = 0;
    }
    out.transitions.reserve(batch);
    for (int i = 0; i < n_env; ++i)
        out.transitions.push_back(env_buf.sample_one(rng));
    for (int i = 0; i < n_model; ++i)
        out.transitions.push_back(model_buf.sample_one(rng));
    return out;
}

std::uint64_t batch_hash(const std::vector<Transition>& batch) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&](const void* p, size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const Transition& t : batch) {
        double vals[6] = {t.x, t.z, t.a, t.r, t.x_next, t.z_next};
        mix(vals, sizeof(vals));
        unsigned char flags[2] = {static_cast<unsigned char>(t.terminal),
                                  static_cast<unsigned char>(t.from_model)};
        mix(flags, sizeof(flags));
    }
    return h;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "episode,step,variant,return,critic_loss,actor_loss,temperature,"
           "model_nll,real_fraction\n";
    for (const auto& r : rows)
        out << r.episode << ',' << r.step << ',' << r.variant << ','
            << r.episode_return << ',' << r.critic_loss << ',' << r.actor_loss
            << ',' << r.temperature << ',' << r.model_nll << ','
            << r.real_fraction << '\n';
    return out.str();
}

CausalGraph fully_connected_graph() {
    CausalGraph g;
    g.alpha = 0.0;
    for (Node target : kTargets)
        for (Node p : candidate_parents(target))
            g.edges.push_back({p, target, 0.0, 0.0});
    g.validate();
    return g;
}

std::vector<Transition> collect_warmup(const EnvSpec& spec, int steps,
                                       Rng& env_rng, Rng& agent_rng) {
    std::vector<Transition> out;
    out.reserve(steps);
    EnvState s = env_reset(spec, env_rng);
    for (int i = 0; i < steps; ++i) {
        double a = agent_rng.uniform(spec.action_lo, spec.action_hi);
        StepResult step = env_step(spec, s, a, env_rng);
        out.push_back({s.x, s.z, a, step.reward, step.next.x, step.next.z,
                       step.terminal, false});
        if (step.terminal)
            s = env_reset(spec, env_rng);
        else
            s = step.next;
    }
    return out;
}

TrainResult train_agent(const EnvSpec& base_spec, const TrainConfig& cfg,
                        std::uint64_t seed) {
    cfg.validate();
    EnvSpec spec = base_spec;
    spec.horizon = cfg.horizon;
    spec.validate();

    Rng root(seed);
    Rng env_rng = root.split(kEnvStream);
    Rng model_rng = root.split(kModelStream);
    Rng agent_rng = root.split(kAgentStream);
    Rng discovery_rng = root.split(kDiscoveryStream);

    const bool model_based = cfg.variant != Variant::Sac;

    TrainResult result;
    result.agent = make_sac_agent(cfg.sac, agent_rng);

    ReplayBuffer env_buf(cfg.buffer_capacity);
    ReplayBuffer model_buf(cfg.buffer_capacity);

    // Warmup under the uniform random policy (identical in all variants).
    std::vector<Transition> warmup =
        collect_warmup(spec, cfg.warmup_steps, env_rng, agent_rng);
    for (const auto& t : warmup) env_buf.push(t);

    if (model_based) {
        CausalGraph graph;
        if (cfg.variant == Variant::Cmbpo) {
            DiscoveryOptions opts;
            opts.alpha = cfg.discovery_alpha;
            opts.family = cfg.ci_family;
            opts.perm_seed = discovery_rng.next_u64();
            if (cfg.oracle_ci) opts.oracle_graph = true_graph(spec);
            graph = learn_local_cgm(Dataset::from_transitions(warmup), opts);
            result.graph = graph;
        } else {
            graph = fully_connected_graph();
        }
        result.scm = build_scm(graph, cfg.scm, model_rng);
    }

    long env_steps = static_cast<long>(cfg.warmup_steps);
    for (int e = 0; e < cfg.episodes; ++e) {
        double fraction = real_fraction(cfg, e);

        // Per-episode model training on the real buffer.
        double model_nll = 0.0;
        if (model_based && cfg.model_train_steps > 0 &&
            static_cast<int>(env_buf.size()) >= cfg.scm.batch_size) {
            std::vector<Transition> rows;
            rows.reserve(env_buf.size());
            for (size_t i = 0; i < env_buf.size(); ++i)
                rows.push_back(env_buf.at(i));
            ScmTrainMetrics m =
                train_scm(*result.scm, Dataset::from_transitions(rows),
                          cfg.model_train_steps, model_rng);
            model_nll =
                (m.final_nll(0) + m.final_nll(1) + m.final_nll(2)) / 3.0;
            result.final_model_nll = model_nll;
        }

        double episode_return = 0.0;
        double critic_loss = 0.0, actor_loss = 0.0, temperature = 0.0;
        long updates = 0;
        EnvState s = env_reset(spec, env_rng);
        for (int t = 0; t < cfg.horizon; ++t) {
            double a = select_action(result.agent, s.x, s.z,
                                     ActionMode::Stochastic, agent_rng);
            StepResult step = env_step(spec, s, a, env_rng);
            env_buf.push({s.x, s.z, a, step.reward, step.next.x, step.next.z,
                          step.terminal, false});
            episode_return += step.reward;

            if (model_based && result.scm->trained &&
                cfg.rollouts_per_step > 0) {
                std::vector<RolloutStart> starts;
                starts.reserve(cfg.rollouts_per_step);
                for (int r = 0; r < cfg.rollouts_per_step; ++r) {
                    Transition past = env_buf.sample_one(model_rng);
                    starts.push_back({past.x, past.z});
                }
                auto rollouts = counterfactual_rollout(
                    *result.scm,
                    [&](double x, double z) {
                        return select_action(result.agent, x, z,
                                             ActionMode::Stochastic, model_rng);
                    },
                    starts, cfg.rollout_depth, model_rng);
                for (const auto& tr : rollouts) model_buf.push(tr);
            }

            if (static_cast<int>(env_buf.size()) >= cfg.sac.batch_size) {
                for (int g = 0; g < cfg.updates_per_step; ++g) {
                    MixedBatch batch =
                        mix_batches(env_buf, model_buf, fraction,
                                    cfg.sac.batch_size, agent_rng);
                    result.update_hashes.push_back(
                        batch_hash(batch.transitions));
                    SacMetrics m =
                        sac_update(result.agent, batch.transitions, agent_rng);
                    critic_loss += m.critic_loss;
                    actor_loss += m.actor_loss;
                    temperature = m.temperature;
                    ++updates;
                }
            }
            s = step.next;
            ++env_steps;
        }

        result.returns.push_back(episode_return);
        MetricsRow row;
        row.episode = e;
        row.step = env_steps;
        row.variant = variant_name(cfg.variant);
        row.episode_return = episode_return;
        row.critic_loss = updates ? critic_loss / updates : 0.0;
        row.actor_loss = updates ? actor_loss / updates : 0.0;
        row.temperature = temperature;
        row.model_nll = model_nll;
        row.real_fraction = fraction;
        result.metrics.push_back(row);
    }

    result.rng_cursor_env = env_rng.cursor();
    result.rng_cursor_agent = agent_rng.cursor();
    result.rng_cursor_model = model_rng.cursor();
    return result;
}

nlohmann::json checkpoint_to_json(const TrainResult& result,
                                  const TrainConfig& cfg, const EnvSpec& spec) {
    nlohmann::json j;
    j["version"] = 1;
    j["variant"] = variant_name(cfg.variant);
    j["env"] = spec.to_json();
    j["agent"] = result.agent.to_json();
    if (result.scm.has_value()) j["scm"] = result.scm->to_json();
    if (result.graph.has_value()) j["graph"] = result.graph->to_json();
    j["rng"] = {{"env", result.rng_cursor_env},
                {"agent", result.rng_cursor_agent},
                {"model", result.rng_cursor_model}};
    return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint c;
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.spec = EnvSpec::from_json(j.at("env"));
    c.agent = SacAgent::from_json(j.at("agent"));
    if (j.contains("scm")) c.scm = LearnedSCM::from_json(j.at("scm"));
    if (j.contains("graph")) c.graph = CausalGraph::from_json(j.at("graph"));
    return c;
}

}  // namespace cmbpo
