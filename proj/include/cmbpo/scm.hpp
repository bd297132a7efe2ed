#pragma once

#include <array>
#include <functional>
#include <vector>

#include "cmbpo/discovery.hpp"
#include "cmbpo/graph.hpp"
#include "cmbpo/mlp.hpp"

namespace cmbpo {

struct ScmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScmHyper {
    int ensemble_size = 5;
    std::vector<int> hidden = {64, 64};
    Activation activation = Activation::Tanh;
    double lr = 3e-4;
    int batch_size = 256;
};

/// One learned conditional p(target | parents): a probabilistic
/// ensemble over the masked parent inputs, or a fitted unconditional
/// Gaussian when the parent set is empty.
struct TargetModel {
    Node target;
    std::vector<Node> parents;  // mask: input columns, in Node order
    Ensemble ensemble;          // empty when unconditional
    std::vector<AdamState> opt;
    double uncond_mean = 0.0;
    double uncond_var = 1.0;

    bool unconditional() const { return parents.empty(); }
};

/// Per-column normalization statistics from the training buffer.
struct Normalization {
    std::array<double, kNumNodes> mean{};
    std::array<double, kNumNodes> std{};
};

/// Graph-masked ensemble SCM. Targets are sampled in topological
/// order: X_next, then Z_next (which may condition on X_next), then R.
struct LearnedSCM {
    CausalGraph graph;
    ScmHyper hyper;
    std::vector<TargetModel> targets;  // fixed order: Xn, Zn, R
    Normalization norm;
    bool trained = false;

    const TargetModel& model_for(Node target) const;
    nlohmann::json to_json() const;
    static LearnedSCM from_json(const nlohmann::json& j);
};

LearnedSCM build_scm(const CausalGraph& graph, const ScmHyper& hyper, Rng& rng);

struct ScmTrainMetrics {
    // Per-target NLL curve, recorded once per training step.
    std::array<std::vector<double>, 3> nll;
    double final_nll(int target_idx) const {
        return nll[target_idx].empty() ? 0.0 : nll[target_idx].back();
    }
};

/// Train every ensemble member on bootstrap-resampled minibatches
/// under the Gaussian NLL. One step = one Adam update per member per
/// target. Also refreshes normalization statistics and unconditional
/// fits from the buffer.
ScmTrainMetrics train_scm(LearnedSCM& scm, const Dataset& buffer, int steps,
                          Rng& rng);

struct ScmSample {
    double x_next, z_next, reward;
};

/// One interventional model step: the action is set exogenously, each
/// target draws a uniformly random ensemble member and samples its
/// Gaussian, in topological order. Outputs are clipped to env bounds.
ScmSample scm_sample_step(const LearnedSCM& scm, double x, double z,
                          double action, Rng& rng);

/// Mean/variance prediction for one target given a full slice
/// (masked internally); member-averaged. For probing the model.
std::pair<double, double> scm_predict(const LearnedSCM& scm, Node target,
                                      double x, double z, double action,
                                      double x_next);

using PolicyFn = std::function<double(double x, double z)>;

struct RolloutStart {
    double x, z;
};

/// h-step interventional rollouts from real states under `policy`.
std::vector<Transition> counterfactual_rollout(const LearnedSCM& scm,
                                               const PolicyFn& policy,
                                               const std::vector<RolloutStart>& starts,
                                               int depth, Rng& rng);

}  // namespace cmbpo
