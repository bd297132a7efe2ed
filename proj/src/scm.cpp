#include "cmbpo/scm.hpp"

#include <algorithm>
#include <cmath>

#include "cmbpo/serialize.hpp"

namespace cmbpo {

namespace {

constexpr double kStateLo = -1.0, kStateHi = 1.0;
constexpr double kRewardLo = -1.0, kRewardHi = 1.0;
constexpr double kStdFloor = 1e-8;

double clip(double v, double lo, double hi) {
    return std::min(std::max(v, lo), hi);
}

int target_index(Node target) {
    switch (target) {
        case Node::Xn: return 0;
        case Node::Zn: return 1;
        case Node::R: return 2;
        default: throw ScmError("not an SCM target: " + node_name(target));
    }
}

double slice_value(Node n, double x, double z, double a, double x_next) {
    switch (n) {
        case Node::X: return x;
        case Node::Z: return z;
        case Node::A: return a;
        case Node::Xn: return x_next;
        default: throw ScmError("invalid parent node: " + node_name(n));
    }
}

}  // namespace

const TargetModel& LearnedSCM::model_for(Node target) const {
    return targets[target_index(target)];
}

LearnedSCM build_scm(const CausalGraph& graph, const ScmHyper& hyper,
                     Rng& rng) {
    graph.validate();
    LearnedSCM scm;
    scm.graph = graph;
    scm.hyper = hyper;
    for (Node target : kTargets) {
        TargetModel tm;
        tm.target = target;
        tm.parents = graph.parents(target);
        if (!tm.parents.empty()) {
            tm.ensemble = make_ensemble(hyper.ensemble_size,
                                        static_cast<int>(tm.parents.size()),
                                        hyper.hidden, 1, hyper.activation, rng);
            for (const auto& m : tm.ensemble.members)
                tm.opt.push_back(AdamState::init(m, hyper.lr));
        }
        scm.targets.push_back(std::move(tm));
    }
    scm.norm.mean.fill(0.0);
    scm.norm.std.fill(1.0);
    return scm;
}

ScmTrainMetrics train_scm(LearnedSCM& scm, const Dataset& buffer, int steps,
                          Rng& rng) {
    if (buffer.rows() < scm.hyper.batch_size)
        throw ScmError("train_scm: buffer smaller than one batch");
    int n = buffer.rows();

    for (int c = 0; c < kNumNodes; ++c) {
        Eigen::VectorXd col = buffer.columns.col(c);
        scm.norm.mean[c] = col.mean();
        double var = (col.array() - scm.norm.mean[c]).square().sum() /
                     std::max(1, n - 1);
        scm.norm.std[c] = std::max(std::sqrt(var), kStdFloor);
    }

    ScmTrainMetrics metrics;
    struct Prepared {
        Mat inputs;   // normalized parent columns
        Mat targets;  // normalized target column
        std::vector<std::vector<int>> bootstrap;  // per member
    };
    std::vector<Prepared> prep(scm.targets.size());

    for (size_t ti = 0; ti < scm.targets.size(); ++ti) {
        TargetModel& tm = scm.targets[ti];
        int tcol = static_cast<int>(tm.target);
        if (tm.unconditional()) {
            Eigen::VectorXd col = buffer.columns.col(tcol);
            tm.uncond_mean = col.mean();
            tm.uncond_var = std::max(
                (col.array() - tm.uncond_mean).square().sum() /
                    std::max(1, n - 1),
                kStdFloor * kStdFloor);
            continue;
        }
        Prepared& pr = prep[ti];
        pr.inputs.resize(n, static_cast<int>(tm.parents.size()));
        for (size_t pi = 0; pi < tm.parents.size(); ++pi) {
            int c = static_cast<int>(tm.parents[pi]);
            pr.inputs.col(static_cast<int>(pi)) =
                (buffer.columns.col(c).array() - scm.norm.mean[c]) /
                scm.norm.std[c];
        }
        pr.targets =
            ((buffer.columns.col(tcol).array() - scm.norm.mean[tcol]) /
             scm.norm.std[tcol])
                .matrix();
        for (int m = 0; m < tm.ensemble.size(); ++m) {
            std::vector<int> idx(n);
            for (int i = 0; i < n; ++i)
                idx[i] = static_cast<int>(rng.below(n));
            pr.bootstrap.push_back(std::move(idx));
        }
    }

    int batch = std::min(scm.hyper.batch_size, n);
    Mat bx(batch, 1), by(batch, 1);
    for (int step = 0; step < steps; ++step) {
        for (size_t ti = 0; ti < scm.targets.size(); ++ti) {
            TargetModel& tm = scm.targets[ti];
            if (tm.unconditional()) {
                metrics.nll[ti].push_back(
                    0.5 * (std::log(tm.uncond_var) + 1.0 +
                           std::log(2.0 * M_PI)));
                continue;
            }
            Prepared& pr = prep[ti];
            double nll_sum = 0.0;
            for (int m = 0; m < tm.ensemble.size(); ++m) {
                Mat inputs(batch, pr.inputs.cols());
                Mat targets(batch, 1);
                const auto& boot = pr.bootstrap[m];
                for (int b = 0; b < batch; ++b) {
                    int row = boot[rng.below(boot.size())];
                    inputs.row(b) = pr.inputs.row(row);
                    targets(b, 0) = pr.targets(row, 0);
                }
                Gradients g = Gradients::zeros_like(tm.ensemble.members[m]);
                double nll = compute_gradients(tm.ensemble.members[m],
                                               LossKind::GaussianNll, inputs,
                                               targets, g);
                adam_step(tm.opt[m], tm.ensemble.members[m], g);
                nll_sum += nll;
            }
            metrics.nll[ti].push_back(nll_sum / tm.ensemble.size());
        }
    }
    scm.trained = true;
    return metrics;
}

namespace {

// Normalized-space prediction for one member on one input row.
std::pair<double, double> member_predict(const LearnedSCM& scm,
                                         const TargetModel& tm, int member,
                                         double x, double z, double a,
                                         double x_next) {
    Vec input(static_cast<int>(tm.parents.size()));
    for (size_t pi = 0; pi < tm.parents.size(); ++pi) {
        int c = static_cast<int>(tm.parents[pi]);
        input[static_cast<int>(pi)] =
            (slice_value(tm.parents[pi], x, z, a, x_next) - scm.norm.mean[c]) /
            scm.norm.std[c];
    }
    GaussianOut g =
        mlp_forward_gaussian(tm.ensemble.members[member], input.transpose());
    return {g.mean(0, 0), g.logvar(0, 0)};
}

double denorm_mean(const LearnedSCM& scm, Node target, double mean_norm) {
    int c = static_cast<int>(target);
    return scm.norm.mean[c] + scm.norm.std[c] * mean_norm;
}

}  // namespace

ScmSample scm_sample_step(const LearnedSCM& scm, double x, double z,
                          double action, Rng& rng) {
    if (!scm.trained) throw ScmError("scm_sample_step: model not trained");
    if (!std::isfinite(x) || !std::isfinite(z) || !std::isfinite(action))
        throw ScmError("scm_sample_step: non-finite input");

    auto sample_target = [&](Node target, double x_next_val) -> double {
        const TargetModel& tm = scm.model_for(target);
        int c = static_cast<int>(target);
        if (tm.unconditional())
            return tm.uncond_mean + std::sqrt(tm.uncond_var) * rng.normal();
        int member = static_cast<int>(rng.below(tm.ensemble.size()));
        auto [mean, logvar] =
            member_predict(scm, tm, member, x, z, action, x_next_val);
        double sample_norm = mean + std::exp(0.5 * logvar) * rng.normal();
        return scm.norm.mean[c] + scm.norm.std[c] * sample_norm;
    };

    ScmSample out;
    out.x_next = clip(sample_target(Node::Xn, 0.0), kStateLo, kStateHi);
    out.z_next = clip(sample_target(Node::Zn, out.x_next), kStateLo, kStateHi);
    out.reward = clip(sample_target(Node::R, out.x_next), kRewardLo, kRewardHi);
    return out;
}

std::pair<double, double> scm_predict(const LearnedSCM& scm, Node target,
                                      double x, double z, double action,
                                      double x_next) {
    const TargetModel& tm = scm.model_for(target);
    int c = static_cast<int>(target);
    if (tm.unconditional())
        return {tm.uncond_mean, tm.uncond_var};
    double mean_acc = 0.0, var_acc = 0.0, sq_acc = 0.0;
    int m = tm.ensemble.size();
    for (int i = 0; i < m; ++i) {
        auto [mu, logvar] = member_predict(scm, tm, i, x, z, action, x_next);
        double mean = denorm_mean(scm, target, mu);
        double var = std::exp(logvar) * scm.norm.std[c] * scm.norm.std[c];
        mean_acc += mean;
        var_acc += var;
        sq_acc += mean * mean;
    }
    double mean = mean_acc / m;
    // Mixture variance: mean member variance + spread of member means.
    double var = var_acc / m + std::max(0.0, sq_acc / m - mean * mean);
    return {mean, var};
}

std::vector<Transition> counterfactual_rollout(
    const LearnedSCM& scm, const PolicyFn& policy,
    const std::vector<RolloutStart>& starts, int depth, Rng& rng) {
    if (depth < 1) throw ScmError("counterfactual_rollout: depth must be >= 1");
    if (starts.empty()) throw ScmError("counterfactual_rollout: no start states");
    std::vector<Transition> out;
    out.reserve(starts.size() * depth);
    for (const auto& start : starts) {
        double x = start.x, z = start.z;
        for (int h = 0; h < depth; ++h) {
            double a = clip(policy(x, z), -1.0, 1.0);
            ScmSample s = scm_sample_step(scm, x, z, a, rng);
            out.push_back({x, z, a, s.reward, s.x_next, s.z_next, false, true});
            x = s.x_next;
            z = s.z_next;
        }
    }
    return out;
}

nlohmann::json LearnedSCM::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["graph"] = graph.to_json();
    j["trained"] = trained;
    j["hyper"] = {{"ensemble_size", hyper.ensemble_size},
                  {"hidden", hyper.hidden},
                  {"activation",
                   hyper.activation == Activation::Tanh ? "tanh" : "relu"},
                  {"lr", hyper.lr},
                  {"batch_size", hyper.batch_size}};
    j["norm_mean"] = norm.mean;
    j["norm_std"] = norm.std;
    j["targets"] = nlohmann::json::array();
    for (const auto& tm : targets) {
        nlohmann::json t;
        t["target"] = node_name(tm.target);
        t["parents"] = nlohmann::json::array();
        for (Node p : tm.parents) t["parents"].push_back(node_name(p));
        if (!tm.unconditional()) {
            t["ensemble"] = ensemble_to_json(tm.ensemble);
            t["opt"] = nlohmann::json::array();
            for (size_t m = 0; m < tm.opt.size(); ++m)
                t["opt"].push_back(adam_to_json(tm.opt[m]));
        } else {
            t["uncond_mean"] = tm.uncond_mean;
            t["uncond_var"] = tm.uncond_var;
        }
        j["targets"].push_back(std::move(t));
    }
    return j;
}

LearnedSCM LearnedSCM::from_json(const nlohmann::json& j) {
    LearnedSCM scm;
    scm.graph = CausalGraph::from_json(j.at("graph"));
    scm.trained = j.at("trained").get<bool>();
    const auto& h = j.at("hyper");
    scm.hyper.ensemble_size = h.at("ensemble_size").get<int>();
    scm.hyper.hidden = h.at("hidden").get<std::vector<int>>();
    scm.hyper.activation = h.at("activation").get<std::string>() == "tanh"
                               ? Activation::Tanh
                               : Activation::Relu;
    scm.hyper.lr = h.at("lr").get<double>();
    scm.hyper.batch_size = h.at("batch_size").get<int>();
    scm.norm.mean = j.at("norm_mean").get<std::array<double, kNumNodes>>();
    scm.norm.std = j.at("norm_std").get<std::array<double, kNumNodes>>();
    for (const auto& t : j.at("targets")) {
        TargetModel tm;
        tm.target = node_from_name(t.at("target").get<std::string>());
        for (const auto& p : t.at("parents"))
            tm.parents.push_back(node_from_name(p.get<std::string>()));
        if (!tm.parents.empty()) {
            tm.ensemble = ensemble_from_json(t.at("ensemble"));
            for (size_t m = 0; m < tm.ensemble.members.size(); ++m)
                tm.opt.push_back(
                    adam_from_json(t.at("opt")[m], tm.ensemble.members[m]));
        } else {
            tm.uncond_mean = t.at("uncond_mean").get<double>();
            tm.uncond_var = t.at("uncond_var").get<double>();
        }
        scm.targets.push_back(std::move(tm));
    }
    return scm;
}

}  // namespace cmbpo
