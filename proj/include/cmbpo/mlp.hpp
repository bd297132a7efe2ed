#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmbpo/rng.hpp"

namespace cmbpo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Activation { Tanh, Relu };
enum class Head { Deterministic, Gaussian };

// Log-variance bounds for Gaussian heads (smooth clamp).
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 2.0;

struct MlpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense MLP parameters. Hidden layers share one activation; the last
/// layer is linear. A Gaussian head splits the final output into
/// (mean, log-variance) halves, with the log-variance smoothly clamped
/// to [kLogVarMin, kLogVarMax].
struct MlpParams {
    std::vector<Mat> weights;  // weights[l] is (out x in)
    std::vector<Vec> biases;
    Activation hidden_act = Activation::Tanh;
    Head head = Head::Deterministic;
    int target_dim = 0;  // Gaussian head: raw output dim == 2 * target_dim

    int num_layers() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int output_dim() const { return static_cast<int>(weights.back().rows()); }

    void validate() const;
};

/// Uniform fan-in initialization, limit 1/sqrt(fan_in).
MlpParams make_mlp(int input_dim, const std::vector<int>& hidden,
                   int target_dim, Head head, Activation act, Rng& rng);

struct GaussianOut {
    Mat mean;    // (n x target_dim)
    Mat logvar;  // (n x target_dim), clamped
};

struct ForwardCache {
    Mat input;
    std::vector<Mat> pre;   // pre-activation per layer
    std::vector<Mat> post;  // activation output per layer (last = raw output)
};

/// Forward pass, rows are samples. Throws MlpError on dimension
/// mismatch or non-finite values, naming the offending layer.
Mat mlp_forward(const MlpParams& p, const Mat& input);
ForwardCache mlp_forward_cached(const MlpParams& p, const Mat& input);

/// Split + clamp a raw Gaussian-head output.
GaussianOut gaussian_head(const MlpParams& p, const Mat& raw);

inline GaussianOut mlp_forward_gaussian(const MlpParams& p, const Mat& input) {
    return gaussian_head(p, mlp_forward(p, input));
}

/// Single-vector convenience wrappers.
Vec mlp_forward(const MlpParams& p, const Vec& input);

struct Gradients {
    std::vector<Mat> d_weights;
    std::vector<Vec> d_biases;

    static Gradients zeros_like(const MlpParams& p);
    void scale(double s);
    void add(const Gradients& other, double s = 1.0);
    double max_abs() const;
};

/// Backprop from d(loss)/d(raw output). Accumulates into `grads`
/// (which must be shaped like `p`) and returns d(loss)/d(input).
Mat mlp_backward(const MlpParams& p, const ForwardCache& cache,
                 const Mat& d_out, Gradients& grads);

/// For Gaussian heads: convert (d_mean, d_logvar) on the clamped
/// outputs into the raw-output gradient, chaining through the clamp.
Mat gaussian_head_backward(const MlpParams& p, const Mat& raw,
                           const Mat& d_mean, const Mat& d_logvar);

enum class LossKind { Mse, GaussianNll, ScalarMean };

/// Mean per-sample loss over the batch plus parameter gradients.
/// ScalarMean treats the mean of the (scalar) network output as the
/// objective and ignores `targets`.
double compute_gradients(const MlpParams& p, LossKind loss, const Mat& inputs,
                         const Mat& targets, Gradients& grads);

/// Diagonal-Gaussian negative log likelihood in nats:
/// 0.5 * sum_d [ logvar_d + (target_d - mean_d)^2 * exp(-logvar_d) + log 2pi ]
double gaussian_nll(const Vec& mean, const Vec& logvar, const Vec& target);

/// Sample mean + exp(logvar/2) .* standard normal. One normal draw
/// per dimension, in index order.
Vec sample_gaussian(Rng& rng, const Vec& mean, const Vec& logvar);

struct AdamState {
    std::vector<Mat> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const MlpParams& p, double lr = 3e-4);
};

/// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& opt, MlpParams& p, const Gradients& grads);

/// Scalar Adam (entropy temperature and similar single parameters).
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    long step = 0;
    double lr = 3e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void update(double& param, double grad);
};

/// Probabilistic ensemble: M identically shaped members.
struct Ensemble {
    std::vector<MlpParams> members;

    int size() const { return static_cast<int>(members.size()); }
    void validate() const;
};

Ensemble make_ensemble(int m, int input_dim, const std::vector<int>& hidden,
                       int target_dim, Activation act, Rng& rng);

/// Per-member (mean, variance) predictions for one input.
std::vector<std::pair<Vec, Vec>> ensemble_predict(const Ensemble& e,
                                                  const Vec& input);

}  // namespace cmbpo
