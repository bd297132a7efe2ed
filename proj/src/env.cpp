#include "cmbpo/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmbpo {

namespace {

double clip(double v, double lo, double hi) {
    return std::min(std::max(v, lo), hi);
}

double f_x(const EnvSpec& spec, double x, double a) {
    if (spec.fx == FxForm::Linear) return 0.7 * x + 0.5 * a;
    return std::tanh(x + a) - 0.5 * x;
}

}  // namespace

Shift EnvSpec::shift() const {
    if (z_intervention.has_value()) return Shift::NearOod;
    if (kappa == -1) return Shift::FarOod;
    return Shift::Id;
}

void EnvSpec::validate() const {
    if (sigma_x < 0 || sigma_z < 0 || sigma_r < 0)
        throw EnvError("env spec: negative noise std");
    if (horizon < 1) throw EnvError("env spec: horizon must be >= 1");
    if (kappa != 1 && kappa != -1)
        throw EnvError("env spec: kappa must be +1 or -1");
    if (state_lo >= state_hi || action_lo >= action_hi || reward_lo >= reward_hi)
        throw EnvError("env spec: clip bounds not well-ordered");
    if (z_intervention.has_value() && kappa == -1)
        throw EnvError("env spec: shifts do not compose");
}

nlohmann::json EnvSpec::to_json() const {
    nlohmann::json j;
    j["sigma_x"] = sigma_x;
    j["sigma_z"] = sigma_z;
    j["sigma_r"] = sigma_r;
    j["horizon"] = horizon;
    j["fx"] = fx == FxForm::Linear ? "linear" : "nonlinear";
    j["kappa"] = kappa;
    if (z_intervention.has_value())
        j["z_intervention"] = *z_intervention;
    else
        j["z_intervention"] = nullptr;
    j["seed"] = seed;
    return j;
}

EnvSpec EnvSpec::from_json(const nlohmann::json& j) {
    EnvSpec s;
    if (j.contains("sigma_x")) s.sigma_x = j.at("sigma_x").get<double>();
    if (j.contains("sigma_z")) s.sigma_z = j.at("sigma_z").get<double>();
    if (j.contains("sigma_r")) s.sigma_r = j.at("sigma_r").get<double>();
    if (j.contains("horizon")) s.horizon = j.at("horizon").get<int>();
    if (j.contains("fx")) {
        std::string f = j.at("fx").get<std::string>();
        if (f == "linear")
            s.fx = FxForm::Linear;
        else if (f == "nonlinear")
            s.fx = FxForm::Nonlinear;
        else
            throw EnvError("env spec: unknown fx tag '" + f + "'");
    }
    if (j.contains("kappa")) s.kappa = j.at("kappa").get<int>();
    if (j.contains("z_intervention") && !j.at("z_intervention").is_null())
        s.z_intervention = j.at("z_intervention").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

Shift shift_from_name(const std::string& name) {
    if (name == "id") return Shift::Id;
    if (name == "near") return Shift::NearOod;
    if (name == "far") return Shift::FarOod;
    throw EnvError("unknown shift name: " + name);
}

const std::string& shift_name(Shift s) {
    static const std::string names[] = {"id", "near", "far"};
    return names[static_cast<int>(s)];
}

EnvState env_reset(const EnvSpec& spec, Rng& rng) {
    spec.validate();
    EnvState s;
    s.x = rng.uniform(spec.state_lo, spec.state_hi);
    s.z = rng.uniform(spec.state_lo, spec.state_hi);
    if (spec.z_intervention.has_value()) s.z = *spec.z_intervention;
    s.t = 0;
    return s;
}

StepResult env_step(const EnvSpec& spec, const EnvState& state, double action,
                    Rng& rng) {
    if (!std::isfinite(action)) throw EnvError("env_step: non-finite action");
    double a = clip(action, spec.action_lo, spec.action_hi);

    // Fixed draw order: eps_r, eps_x, eps_z.
    double eps_r = spec.sigma_r > 0 ? rng.normal(0.0, spec.sigma_r) : 0.0;
    double eps_x = spec.sigma_x > 0 ? rng.normal(0.0, spec.sigma_x) : 0.0;
    double eps_z = spec.sigma_z > 0 ? rng.normal(0.0, spec.sigma_z) : 0.0;

    double reward =
        clip(0.1 - 0.1 * state.x * state.x + eps_r, spec.reward_lo, spec.reward_hi);
    double x_next = clip(f_x(spec, state.x, a) + eps_x, spec.state_lo, spec.state_hi);
    double z_next;
    if (spec.z_intervention.has_value())
        z_next = *spec.z_intervention;
    else
        z_next = clip(spec.kappa * x_next + eps_z, spec.state_lo, spec.state_hi);

    StepResult out;
    out.next = {x_next, z_next, state.t + 1};
    out.reward = reward;
    out.terminal = (state.t + 1 >= spec.horizon);
    return out;
}

EnvSpec apply_shift(const EnvSpec& base, const ShiftSpec& shift) {
    if (base.shift() != Shift::Id)
        throw EnvError("apply_shift: base spec is already shifted");
    EnvSpec out = base;
    switch (shift.kind) {
        case Shift::Id: break;
        case Shift::NearOod: out.z_intervention = shift.z_value; break;
        case Shift::FarOod: out.kappa = -1; break;
    }
    return out;
}

CausalGraph true_graph(const EnvSpec& spec) {
    CausalGraph g;
    g.alpha = 0.0;
    g.edges.push_back({Node::X, Node::Xn, 0.0, 0.0});
    g.edges.push_back({Node::A, Node::Xn, 0.0, 0.0});
    if (!spec.z_intervention.has_value())
        g.edges.push_back({Node::Xn, Node::Zn, 0.0, 0.0});
    g.edges.push_back({Node::X, Node::R, 0.0, 0.0});
    g.validate();
    return g;
}

std::string transitions_to_csv(
    const std::vector<std::vector<Transition>>& episodes) {
    std::ostringstream out;
    out.precision(17);
    out << "episode,t,x,z,a,r,x_next,z_next,terminal,source\n";
    for (size_t e = 0; e < episodes.size(); ++e) {
        for (size_t t = 0; t < episodes[e].size(); ++t) {
            const Transition& tr = episodes[e][t];
            out << e << ',' << t << ',' << tr.x << ',' << tr.z << ',' << tr.a
                << ',' << tr.r << ',' << tr.x_next << ',' << tr.z_next << ','
                << (tr.terminal ? 1 : 0) << ','
                << (tr.from_model ? "model" : "env") << '\n';
        }
    }
    return out.str();
}

}  // namespace cmbpo
