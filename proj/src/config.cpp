#include "cmbpo/config.hpp"

#include <fstream>
#include <set>

namespace cmbpo {

namespace {

void check_keys(const nlohmann::json& j, const std::string& prefix,
                const std::set<std::string>& allowed,
                std::vector<std::string>& offenders) {
    if (!j.is_object()) {
        offenders.push_back(prefix + ": expected an object");
        return;
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            offenders.push_back(prefix + "." + it.key());
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        env.validate();
        train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (eval_episodes < 0) throw ConfigError("eval.episodes must be >= 0");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (eval_shifts.empty()) throw ConfigError("eval.shifts must be non-empty");
    if (discovery_min_rows < 10)
        throw ConfigError("discovery.min_rows too small");
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["env"] = env.to_json();
    j["train"] = {{"variant", variant_name(train.variant)},
                  {"episodes", train.episodes},
                  {"horizon", train.horizon},
                  {"warmup_steps", train.warmup_steps},
                  {"model_train_steps", train.model_train_steps},
                  {"rollouts_per_step", train.rollouts_per_step},
                  {"rollout_depth", train.rollout_depth},
                  {"updates_per_step", train.updates_per_step},
                  {"mix_initial", train.mix_initial},
                  {"mix_final", train.mix_final},
                  {"mix_hold_episodes", train.mix_hold_episodes},
                  {"mix_decay_end", train.mix_decay_end}};
    j["sac"] = {{"gamma", train.sac.gamma},
                {"tau", train.sac.tau},
                {"lr", train.sac.lr},
                {"batch_size", train.sac.batch_size},
                {"target_entropy", train.sac.target_entropy},
                {"hidden", train.sac.hidden},
                {"init_alpha", train.sac.init_alpha}};
    j["model"] = {{"ensemble_size", train.scm.ensemble_size},
                  {"hidden", train.scm.hidden},
                  {"activation",
                   train.scm.activation == Activation::Tanh ? "tanh" : "relu"},
                  {"lr", train.scm.lr},
                  {"batch_size", train.scm.batch_size}};
    j["discovery"] = {{"alpha", train.discovery_alpha},
                      {"oracle_ci", train.oracle_ci},
                      {"family", train.ci_family == CiTestFamily::FisherZ
                                     ? "fisher_z"
                                     : "cmi_perm"},
                      {"min_rows", discovery_min_rows}};
    nlohmann::json shifts = nlohmann::json::array();
    for (Shift s : eval_shifts) shifts.push_back(shift_name(s));
    j["eval"] = {{"episodes", eval_episodes},
                 {"shifts", shifts},
                 {"near_ood_z", near_ood_z}};
    j["out_dir"] = out_dir;
    j["seeds"] = seeds;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    std::vector<std::string> offenders;
    check_keys(j, "$",
               {"env", "train", "sac", "model", "discovery", "eval", "out_dir",
                "seeds"},
               offenders);

    if (j.contains("env")) {
        check_keys(j.at("env"), "env",
                   {"sigma_x", "sigma_z", "sigma_r", "horizon", "fx", "kappa",
                    "z_intervention", "seed"},
                   offenders);
        if (offenders.empty()) cfg.env = EnvSpec::from_json(j.at("env"));
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, "train",
                   {"variant", "episodes", "horizon", "warmup_steps",
                    "model_train_steps", "rollouts_per_step", "rollout_depth",
                    "updates_per_step", "mix_initial", "mix_final",
                    "mix_hold_episodes", "mix_decay_end"},
                   offenders);
        if (offenders.empty()) {
            if (t.contains("variant"))
                cfg.train.variant =
                    variant_from_name(t.at("variant").get<std::string>());
            get_if(t, "episodes", cfg.train.episodes);
            get_if(t, "horizon", cfg.train.horizon);
            get_if(t, "warmup_steps", cfg.train.warmup_steps);
            get_if(t, "model_train_steps", cfg.train.model_train_steps);
            get_if(t, "rollouts_per_step", cfg.train.rollouts_per_step);
            get_if(t, "rollout_depth", cfg.train.rollout_depth);
            get_if(t, "updates_per_step", cfg.train.updates_per_step);
            get_if(t, "mix_initial", cfg.train.mix_initial);
            get_if(t, "mix_final", cfg.train.mix_final);
            get_if(t, "mix_hold_episodes", cfg.train.mix_hold_episodes);
            get_if(t, "mix_decay_end", cfg.train.mix_decay_end);
        }
    }
    if (j.contains("sac")) {
        const auto& s = j.at("sac");
        check_keys(s, "sac",
                   {"gamma", "tau", "lr", "batch_size", "target_entropy",
                    "hidden", "init_alpha"},
                   offenders);
        if (offenders.empty()) {
            get_if(s, "gamma", cfg.train.sac.gamma);
            get_if(s, "tau", cfg.train.sac.tau);
            get_if(s, "lr", cfg.train.sac.lr);
            get_if(s, "batch_size", cfg.train.sac.batch_size);
            get_if(s, "target_entropy", cfg.train.sac.target_entropy);
            get_if(s, "hidden", cfg.train.sac.hidden);
            get_if(s, "init_alpha", cfg.train.sac.init_alpha);
        }
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model",
                   {"ensemble_size", "hidden", "activation", "lr", "batch_size"},
                   offenders);
        if (offenders.empty()) {
            get_if(m, "ensemble_size", cfg.train.scm.ensemble_size);
            get_if(m, "hidden", cfg.train.scm.hidden);
            get_if(m, "lr", cfg.train.scm.lr);
            get_if(m, "batch_size", cfg.train.scm.batch_size);
            if (m.contains("activation")) {
                std::string a = m.at("activation").get<std::string>();
                if (a == "tanh")
                    cfg.train.scm.activation = Activation::Tanh;
                else if (a == "relu")
                    cfg.train.scm.activation = Activation::Relu;
                else
                    offenders.push_back("model.activation: '" + a + "'");
            }
        }
    }
    if (j.contains("discovery")) {
        const auto& d = j.at("discovery");
        check_keys(d, "discovery", {"alpha", "oracle_ci", "family", "min_rows"},
                   offenders);
        if (offenders.empty()) {
            get_if(d, "alpha", cfg.train.discovery_alpha);
            get_if(d, "oracle_ci", cfg.train.oracle_ci);
            get_if(d, "min_rows", cfg.discovery_min_rows);
            if (d.contains("family")) {
                std::string f = d.at("family").get<std::string>();
                if (f == "fisher_z")
                    cfg.train.ci_family = CiTestFamily::FisherZ;
                else if (f == "cmi_perm")
                    cfg.train.ci_family = CiTestFamily::CmiPermutation;
                else
                    offenders.push_back("discovery.family: '" + f + "'");
            }
        }
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e, "eval", {"episodes", "shifts", "near_ood_z"}, offenders);
        if (offenders.empty()) {
            get_if(e, "episodes", cfg.eval_episodes);
            get_if(e, "near_ood_z", cfg.near_ood_z);
            if (e.contains("shifts")) {
                cfg.eval_shifts.clear();
                for (const auto& s : e.at("shifts"))
                    cfg.eval_shifts.push_back(
                        shift_from_name(s.get<std::string>()));
            }
        }
    }
    get_if(j, "out_dir", cfg.out_dir);
    if (j.contains("seeds"))
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

    if (!offenders.empty()) {
        std::string msg = "config schema violations:";
        for (const auto& o : offenders) msg += " " + o;
        throw ConfigError(msg);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

}  // namespace cmbpo
