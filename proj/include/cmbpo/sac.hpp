#pragma once

#include <vector>

#include "cmbpo/env.hpp"
#include "cmbpo/mlp.hpp"
#include "vendor_json.hpp"

namespace cmbpo {

struct SacError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// FIFO ring buffer of transitions with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity = 1000000) : capacity_(capacity) {}

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[head_] = t;
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    const Transition& at(size_t i) const { return data_[i]; }

    Transition sample_one(Rng& rng) const {
        return data_[rng.below(data_.size())];
    }

    std::vector<Transition> sample(size_t count, Rng& rng) const {
        std::vector<Transition> out;
        out.reserve(count);
        for (size_t i = 0; i < count; ++i) out.push_back(sample_one(rng));
        return out;
    }

private:
    std::vector<Transition> data_;
    size_t capacity_;
    size_t head_ = 0;
};

struct SacConfig {
    double gamma = 0.99;
    double tau = 0.005;  // target-network Polyak coefficient
    double lr = 3e-4;
    int batch_size = 256;
    double target_entropy = -1.0;  // -action_dim
    std::vector<int> hidden = {64, 64};
    double init_alpha = 0.2;
};

/// Soft actor-critic over state (X, Z) and a scalar action in [-1, 1].
/// Policy is a squashed diagonal Gaussian; twin Q networks with
/// Polyak-averaged target copies; learnable log-parameterized entropy
/// temperature.
struct SacAgent {
    SacConfig cfg;
    MlpParams policy;  // Gaussian head over 1 action dim
    MlpParams q1, q2, q1_target, q2_target;
    double log_alpha = 0.0;
    AdamState policy_opt, q1_opt, q2_opt;
    ScalarAdam alpha_opt;

    double alpha() const { return std::exp(log_alpha); }

    nlohmann::json to_json() const;
    static SacAgent from_json(const nlohmann::json& j);
};

SacAgent make_sac_agent(const SacConfig& cfg, Rng& rng);

enum class ActionMode { Stochastic, Deterministic };

/// Stochastic mode samples the squashed Gaussian (two uniform draws
/// via one normal); deterministic mode returns tanh(mean) and does not
/// touch the rng.
double select_action(const SacAgent& agent, double x, double z, ActionMode mode,
                     Rng& rng);

struct SacMetrics {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double temperature = 0.0;
    double mean_q = 0.0;
};

/// One gradient step on critics, actor, and temperature from a
/// minibatch, followed by a Polyak update of the target networks.
/// Consumes one normal draw per sample for the next-state action and
/// one per sample for the reparameterized actor action, in that order.
SacMetrics sac_update(SacAgent& agent, const std::vector<Transition>& batch,
                      Rng& rng);

}  // namespace cmbpo
