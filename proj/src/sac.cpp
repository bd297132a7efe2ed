#include "cmbpo/sac.hpp"

#include <cmath>

#include "cmbpo/serialize.hpp"

namespace cmbpo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSquashEps = 1e-6;

}  // namespace

SacAgent make_sac_agent(const SacConfig& cfg, Rng& rng) {
    SacAgent a;
    a.cfg = cfg;
    a.policy = make_mlp(2, cfg.hidden, 1, Head::Gaussian, Activation::Tanh, rng);
    a.q1 = make_mlp(3, cfg.hidden, 1, Head::Deterministic, Activation::Tanh, rng);
    a.q2 = make_mlp(3, cfg.hidden, 1, Head::Deterministic, Activation::Tanh, rng);
    a.q1_target = a.q1;
    a.q2_target = a.q2;
    a.log_alpha = std::log(cfg.init_alpha);
    a.policy_opt = AdamState::init(a.policy, cfg.lr);
    a.q1_opt = AdamState::init(a.q1, cfg.lr);
    a.q2_opt = AdamState::init(a.q2, cfg.lr);
    a.alpha_opt.lr = cfg.lr;
    return a;
}

double select_action(const SacAgent& agent, double x, double z, ActionMode mode,
                     Rng& rng) {
    if (!std::isfinite(x) || !std::isfinite(z))
        throw SacError("select_action: non-finite state");
    Mat state(1, 2);
    state << x, z;
    GaussianOut g = mlp_forward_gaussian(agent.policy, state);
    double mu = g.mean(0, 0);
    if (mode == ActionMode::Deterministic) return std::tanh(mu);
    double sigma = std::exp(0.5 * g.logvar(0, 0));
    return std::tanh(mu + sigma * rng.normal());
}

SacMetrics sac_update(SacAgent& agent, const std::vector<Transition>& batch,
                      Rng& rng) {
    const int n = static_cast<int>(batch.size());
    if (n == 0) throw SacError("sac_update: empty batch");
    const double gamma = agent.cfg.gamma;
    const double alpha = agent.alpha();

    Mat states(n, 2), next_states(n, 2), sa(n, 3);
    Vec rewards(n), not_terminal(n);
    for (int i = 0; i < n; ++i) {
        const Transition& t = batch[i];
        states(i, 0) = t.x;
        states(i, 1) = t.z;
        next_states(i, 0) = t.x_next;
        next_states(i, 1) = t.z_next;
        sa(i, 0) = t.x;
        sa(i, 1) = t.z;
        sa(i, 2) = t.a;
        rewards[i] = t.r;
        not_terminal[i] = t.terminal ? 0.0 : 1.0;
    }

    // ---- Critic targets: next action from the current policy. ----
    GaussianOut next_pi = mlp_forward_gaussian(agent.policy, next_states);
    Vec next_a(n), next_logp(n);
    for (int i = 0; i < n; ++i) {
        double mu = next_pi.mean(i, 0), lv = next_pi.logvar(i, 0);
        double sigma = std::exp(0.5 * lv);
        double eps = rng.normal();
        double u = mu + sigma * eps;
        double a = std::tanh(u);
        next_a[i] = a;
        next_logp[i] = -0.5 * kLog2Pi - 0.5 * lv - 0.5 * eps * eps -
                       std::log(1.0 - a * a + kSquashEps);
    }
    Mat next_sa(n, 3);
    next_sa.leftCols(2) = next_states;
    next_sa.col(2) = next_a;
    Vec q1t = mlp_forward(agent.q1_target, next_sa).col(0);
    Vec q2t = mlp_forward(agent.q2_target, next_sa).col(0);
    Vec target(n);
    for (int i = 0; i < n; ++i) {
        double soft_v = std::min(q1t[i], q2t[i]) - alpha * next_logp[i];
        target[i] = rewards[i] + gamma * not_terminal[i] * soft_v;
    }

    SacMetrics metrics;
    metrics.temperature = alpha;

    // ---- Critic step. ----
    {
        ForwardCache c1 = mlp_forward_cached(agent.q1, sa);
        ForwardCache c2 = mlp_forward_cached(agent.q2, sa);
        Vec q1 = c1.post.back().col(0);
        Vec q2 = c2.post.back().col(0);
        Vec r1 = q1 - target, r2 = q2 - target;
        metrics.critic_loss =
            (r1.array().square().mean() + r2.array().square().mean());
        metrics.mean_q = 0.5 * (q1.mean() + q2.mean());
        Mat d1 = (2.0 / n) * r1, d2 = (2.0 / n) * r2;
        Gradients g1 = Gradients::zeros_like(agent.q1);
        Gradients g2 = Gradients::zeros_like(agent.q2);
        mlp_backward(agent.q1, c1, d1, g1);
        mlp_backward(agent.q2, c2, d2, g2);
        adam_step(agent.q1_opt, agent.q1, g1);
        adam_step(agent.q2_opt, agent.q2, g2);
    }

    // ---- Actor step (reparameterized, critics frozen). ----
    double mean_logp = 0.0;
    {
        ForwardCache pc = mlp_forward_cached(agent.policy, states);
        GaussianOut pi = gaussian_head(agent.policy, pc.post.back());
        Vec eps(n), act(n), sigma(n);
        for (int i = 0; i < n; ++i) {
            double lv = pi.logvar(i, 0);
            sigma[i] = std::exp(0.5 * lv);
            eps[i] = rng.normal();
            act[i] = std::tanh(pi.mean(i, 0) + sigma[i] * eps[i]);
        }
        Mat actor_sa(n, 3);
        actor_sa.leftCols(2) = states;
        actor_sa.col(2) = act;
        ForwardCache c1 = mlp_forward_cached(agent.q1, actor_sa);
        ForwardCache c2 = mlp_forward_cached(agent.q2, actor_sa);
        Vec q1 = c1.post.back().col(0);
        Vec q2 = c2.post.back().col(0);

        // d(min Q)/d(action): input gradient of the smaller critic.
        Mat pick1 = Mat::Zero(n, 1), pick2 = Mat::Zero(n, 1);
        for (int i = 0; i < n; ++i)
            (q1[i] <= q2[i] ? pick1 : pick2)(i, 0) = 1.0;
        Gradients scratch1 = Gradients::zeros_like(agent.q1);
        Gradients scratch2 = Gradients::zeros_like(agent.q2);
        Vec dq_da = (mlp_backward(agent.q1, c1, pick1, scratch1).col(2) +
                     mlp_backward(agent.q2, c2, pick2, scratch2).col(2));

        Mat d_mean(n, 1), d_logvar(n, 1);
        double actor_loss = 0.0;
        for (int i = 0; i < n; ++i) {
            double lv = pi.logvar(i, 0);
            double a = act[i];
            double one_m_a2 = 1.0 - a * a;
            double squash = 1.0 - a * a + kSquashEps;
            double logp = -0.5 * kLog2Pi - 0.5 * lv - 0.5 * eps[i] * eps[i] -
                          std::log(squash);
            mean_logp += logp;
            actor_loss += alpha * logp - std::min(q1[i], q2[i]);

            double dlogp_da = 2.0 * a / squash;
            double da_dmu = one_m_a2;
            double da_dlv = one_m_a2 * eps[i] * sigma[i] * 0.5;
            double dlogp_dmu = dlogp_da * da_dmu;
            double dlogp_dlv = -0.5 + dlogp_da * da_dlv;
            d_mean(i, 0) =
                (alpha * dlogp_dmu - dq_da[i] * da_dmu) / n;
            d_logvar(i, 0) =
                (alpha * dlogp_dlv - dq_da[i] * da_dlv) / n;
        }
        mean_logp /= n;
        metrics.actor_loss = actor_loss / n;

        Mat d_raw = gaussian_head_backward(agent.policy, pc.post.back(), d_mean,
                                           d_logvar);
        Gradients pg = Gradients::zeros_like(agent.policy);
        mlp_backward(agent.policy, pc, d_raw, pg);
        adam_step(agent.policy_opt, agent.policy, pg);
    }

    // ---- Temperature step. ----
    {
        double grad = -(mean_logp + agent.cfg.target_entropy);
        agent.alpha_opt.update(agent.log_alpha, grad);
    }

    // ---- Polyak target update. ----
    const double tau = agent.cfg.tau;
    for (size_t l = 0; l < agent.q1.weights.size(); ++l) {
        agent.q1_target.weights[l] =
            (1.0 - tau) * agent.q1_target.weights[l] + tau * agent.q1.weights[l];
        agent.q1_target.biases[l] =
            (1.0 - tau) * agent.q1_target.biases[l] + tau * agent.q1.biases[l];
        agent.q2_target.weights[l] =
            (1.0 - tau) * agent.q2_target.weights[l] + tau * agent.q2.weights[l];
        agent.q2_target.biases[l] =
            (1.0 - tau) * agent.q2_target.biases[l] + tau * agent.q2.biases[l];
    }

    if (!std::isfinite(metrics.critic_loss) || !std::isfinite(metrics.actor_loss))
        throw SacError("sac_update: non-finite loss");
    return metrics;
}

nlohmann::json SacAgent::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["cfg"] = {{"gamma", cfg.gamma},
                {"tau", cfg.tau},
                {"lr", cfg.lr},
                {"batch_size", cfg.batch_size},
                {"target_entropy", cfg.target_entropy},
                {"hidden", cfg.hidden},
                {"init_alpha", cfg.init_alpha}};
    j["policy"] = mlp_to_json(policy);
    j["q1"] = mlp_to_json(q1);
    j["q2"] = mlp_to_json(q2);
    j["q1_target"] = mlp_to_json(q1_target);
    j["q2_target"] = mlp_to_json(q2_target);
    j["log_alpha"] = log_alpha;
    j["policy_opt"] = adam_to_json(policy_opt);
    j["q1_opt"] = adam_to_json(q1_opt);
    j["q2_opt"] = adam_to_json(q2_opt);
    j["alpha_opt"] = {{"m", alpha_opt.m},
                      {"v", alpha_opt.v},
                      {"step", alpha_opt.step},
                      {"lr", alpha_opt.lr}};
    return j;
}

SacAgent SacAgent::from_json(const nlohmann::json& j) {
    SacAgent a;
    const auto& c = j.at("cfg");
    a.cfg.gamma = c.at("gamma").get<double>();
    a.cfg.tau = c.at("tau").get<double>();
    a.cfg.lr = c.at("lr").get<double>();
    a.cfg.batch_size = c.at("batch_size").get<int>();
    a.cfg.target_entropy = c.at("target_entropy").get<double>();
    a.cfg.hidden = c.at("hidden").get<std::vector<int>>();
    a.cfg.init_alpha = c.at("init_alpha").get<double>();
    a.policy = mlp_from_json(j.at("policy"));
    a.q1 = mlp_from_json(j.at("q1"));
    a.q2 = mlp_from_json(j.at("q2"));
    a.q1_target = mlp_from_json(j.at("q1_target"));
    a.q2_target = mlp_from_json(j.at("q2_target"));
    a.log_alpha = j.at("log_alpha").get<double>();
    a.policy_opt = adam_from_json(j.at("policy_opt"), a.policy);
    a.q1_opt = adam_from_json(j.at("q1_opt"), a.q1);
    a.q2_opt = adam_from_json(j.at("q2_opt"), a.q2);
    const auto& ao = j.at("alpha_opt");
    a.alpha_opt.m = ao.at("m").get<double>();
    a.alpha_opt.v = ao.at("v").get<double>();
    a.alpha_opt.step = ao.at("step").get<long>();
    a.alpha_opt.lr = ao.at("lr").get<double>();
    return a;
}

}  // namespace cmbpo
