#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmbpo/graph.hpp"
#include "cmbpo/rng.hpp"
#include "vendor_json.hpp"

namespace cmbpo {

enum class FxForm { Linear, Nonlinear };
enum class Shift { Id, NearOod, FarOod };

struct EnvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ground-truth SCM parameterization plus shift descriptor.
/// Dynamics: X' = clip(f_X(X, A) + eps_x), Z' = clip(kappa * X' + eps_z)
/// unless a Z-intervention pins Z' to a fixed value, and
/// R = clip(0.1 - 0.1 X^2 + eps_r). Noise draws per step in fixed order
/// (eps_r, eps_x, eps_z).
struct EnvSpec {
    double sigma_x = 0.1;
    double sigma_z = 0.1;
    double sigma_r = 0.1;
    int horizon = 200;
    FxForm fx = FxForm::Linear;
    int kappa = +1;
    std::optional<double> z_intervention;
    double state_lo = -1.0, state_hi = 1.0;
    double action_lo = -1.0, action_hi = 1.0;
    double reward_lo = -1.0, reward_hi = 1.0;
    std::uint64_t seed = 0;

    Shift shift() const;
    void validate() const;
    nlohmann::json to_json() const;
    static EnvSpec from_json(const nlohmann::json& j);
};

struct EnvState {
    double x = 0.0;
    double z = 0.0;
    int t = 0;
};

struct Transition {
    double x, z;        // s
    double a;           // action
    double r;           // reward
    double x_next, z_next;
    bool terminal = false;
    bool from_model = false;
};

struct ShiftSpec {
    Shift kind = Shift::Id;
    double z_value = 0.0;  // Near-OOD intervention value

    static ShiftSpec id() { return {Shift::Id, 0.0}; }
    static ShiftSpec near_ood(double z) { return {Shift::NearOod, z}; }
    static ShiftSpec far_ood() { return {Shift::FarOod, 0.0}; }
};

Shift shift_from_name(const std::string& name);
const std::string& shift_name(Shift s);

/// X, Z i.i.d. uniform on the state range; Z overridden when a
/// Z-intervention is active.
EnvState env_reset(const EnvSpec& spec, Rng& rng);

struct StepResult {
    EnvState next;
    double reward;
    bool terminal;
};

StepResult env_step(const EnvSpec& spec, const EnvState& state, double action,
                    Rng& rng);

/// Apply a distribution shift to a base (ID) spec; the base is not
/// modified. Shifts do not compose.
EnvSpec apply_shift(const EnvSpec& base, const ShiftSpec& shift);

/// Oracle causal graph of the simulator.
CausalGraph true_graph(const EnvSpec& spec);

/// Roll one episode; returns exactly spec.horizon transitions, the
/// last flagged terminal. `policy` maps (x, z) to an action.
template <typename Policy>
std::vector<Transition> run_episode(const EnvSpec& spec, Policy&& policy,
                                    Rng& rng) {
    std::vector<Transition> out;
    out.reserve(spec.horizon);
    EnvState s = env_reset(spec, rng);
    for (int t = 0; t < spec.horizon; ++t) {
        double a = policy(s.x, s.z);
        StepResult step = env_step(spec, s, a, rng);
        out.push_back({s.x, s.z, a, step.reward, step.next.x, step.next.z,
                       step.terminal, false});
        s = step.next;
    }
    return out;
}

/// CSV export with header
/// episode,t,x,z,a,r,x_next,z_next,terminal,source
std::string transitions_to_csv(const std::vector<std::vector<Transition>>& episodes);

}  // namespace cmbpo
