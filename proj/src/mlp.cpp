#include "cmbpo/mlp.hpp"

#include <cmath>

namespace cmbpo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// lv = LMIN + softplus(t - LMIN), t = LMAX - softplus(LMAX - raw)
double clamp_logvar(double raw) {
    double t = kLogVarMax - softplus(kLogVarMax - raw);
    return kLogVarMin + softplus(t - kLogVarMin);
}

double clamp_logvar_grad(double raw) {
    double t = kLogVarMax - softplus(kLogVarMax - raw);
    return sigmoid(kLogVarMax - raw) * sigmoid(t - kLogVarMin);
}

Mat apply_act(const Mat& z, Activation act) {
    if (act == Activation::Tanh) return z.array().tanh();
    return z.array().max(0.0);
}

Mat act_grad_from_post(const Mat& pre, const Mat& post, Activation act) {
    if (act == Activation::Tanh) return 1.0 - post.array().square();
    return (pre.array() > 0.0).cast<double>();
}

}  // namespace

void MlpParams::validate() const {
    if (weights.empty() || weights.size() != biases.size())
        throw MlpError("mlp: empty or inconsistent layer list");
    for (size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != biases[l].size())
            throw MlpError("mlp: weight/bias mismatch at layer " +
                           std::to_string(l));
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw MlpError("mlp: layer shapes do not compose at layer " +
                           std::to_string(l));
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw MlpError("mlp: non-finite parameters at layer " +
                           std::to_string(l));
    }
    if (head == Head::Gaussian && output_dim() != 2 * target_dim)
        throw MlpError("mlp: Gaussian head output dim must be 2 * target dim");
}

MlpParams make_mlp(int input_dim, const std::vector<int>& hidden,
                   int target_dim, Head head, Activation act, Rng& rng) {
    MlpParams p;
    p.hidden_act = act;
    p.head = head;
    p.target_dim = target_dim;
    int out = head == Head::Gaussian ? 2 * target_dim : target_dim;
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(out);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        int in = dims[l], o = dims[l + 1];
        double limit = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
        Mat w(o, in);
        for (int i = 0; i < o; ++i)
            for (int j = 0; j < in; ++j) w(i, j) = rng.uniform(-limit, limit);
        Vec b = Vec::Zero(o);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    p.validate();
    return p;
}

ForwardCache mlp_forward_cached(const MlpParams& p, const Mat& input) {
    if (input.cols() != p.input_dim())
        throw MlpError("mlp_forward: input dim " + std::to_string(input.cols()) +
                       " does not match layer 0 (expects " +
                       std::to_string(p.input_dim()) + ")");
    ForwardCache c;
    c.input = input;
    const Mat* cur = &c.input;
    int n_layers = p.num_layers();
    for (int l = 0; l < n_layers; ++l) {
        Mat z = (*cur * p.weights[l].transpose()).rowwise() +
                p.biases[l].transpose();
        if (!z.allFinite())
            throw MlpError("mlp_forward: non-finite value at layer " +
                           std::to_string(l));
        Mat a = (l + 1 < n_layers) ? apply_act(z, p.hidden_act) : z;
        c.pre.push_back(std::move(z));
        c.post.push_back(std::move(a));
        cur = &c.post.back();
    }
    return c;
}

Mat mlp_forward(const MlpParams& p, const Mat& input) {
    return mlp_forward_cached(p, input).post.back();
}

Vec mlp_forward(const MlpParams& p, const Vec& input) {
    Mat row = input.transpose();
    return mlp_forward(p, row).row(0).transpose();
}

GaussianOut gaussian_head(const MlpParams& p, const Mat& raw) {
    if (p.head != Head::Gaussian)
        throw MlpError("gaussian_head: network has a deterministic head");
    int d = p.target_dim;
    GaussianOut g;
    g.mean = raw.leftCols(d);
    g.logvar = raw.rightCols(d).unaryExpr([](double x) { return clamp_logvar(x); });
    return g;
}

Gradients Gradients::zeros_like(const MlpParams& p) {
    Gradients g;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        g.d_weights.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        g.d_biases.push_back(Vec::Zero(p.biases[l].size()));
    }
    return g;
}

void Gradients::scale(double s) {
    for (auto& w : d_weights) w *= s;
    for (auto& b : d_biases) b *= s;
}

void Gradients::add(const Gradients& other, double s) {
    for (size_t l = 0; l < d_weights.size(); ++l) {
        d_weights[l] += s * other.d_weights[l];
        d_biases[l] += s * other.d_biases[l];
    }
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : d_weights) m = std::max(m, w.cwiseAbs().maxCoeff());
    for (const auto& b : d_biases) m = std::max(m, b.cwiseAbs().maxCoeff());
    return m;
}

Mat mlp_backward(const MlpParams& p, const ForwardCache& cache,
                 const Mat& d_out, Gradients& grads) {
    int n_layers = p.num_layers();
    Mat delta = d_out;
    for (int l = n_layers - 1; l >= 0; --l) {
        if (l + 1 < n_layers) {
            delta = delta.array() *
                    act_grad_from_post(cache.pre[l], cache.post[l], p.hidden_act)
                        .array();
        }
        const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
        grads.d_weights[l] += delta.transpose() * below;
        grads.d_biases[l] += delta.colwise().sum().transpose();
        if (l > 0) delta = delta * p.weights[l];
    }
    return delta * p.weights[0];
}

Mat gaussian_head_backward(const MlpParams& p, const Mat& raw,
                           const Mat& d_mean, const Mat& d_logvar) {
    int d = p.target_dim;
    Mat d_raw(raw.rows(), raw.cols());
    d_raw.leftCols(d) = d_mean;
    Mat chain = raw.rightCols(d).unaryExpr(
        [](double x) { return clamp_logvar_grad(x); });
    d_raw.rightCols(d) = d_logvar.array() * chain.array();
    return d_raw;
}

double compute_gradients(const MlpParams& p, LossKind loss, const Mat& inputs,
                         const Mat& targets, Gradients& grads) {
    if (inputs.rows() == 0) throw MlpError("compute_gradients: empty batch");
    ForwardCache cache = mlp_forward_cached(p, inputs);
    const Mat& raw = cache.post.back();
    double n = static_cast<double>(inputs.rows());
    double total = 0.0;
    Mat d_raw;
    switch (loss) {
        case LossKind::Mse: {
            if (p.head == Head::Gaussian)
                throw MlpError("compute_gradients: MSE needs a deterministic head");
            if (targets.rows() != inputs.rows() || targets.cols() != raw.cols())
                throw MlpError("compute_gradients: target shape mismatch");
            Mat resid = raw - targets;
            total = resid.array().square().sum() / n;
            d_raw = (2.0 / n) * resid;
            break;
        }
        case LossKind::GaussianNll: {
            if (p.head != Head::Gaussian)
                throw MlpError("compute_gradients: NLL needs a Gaussian head");
            if (targets.rows() != inputs.rows() || targets.cols() != p.target_dim)
                throw MlpError("compute_gradients: target shape mismatch");
            GaussianOut g = gaussian_head(p, raw);
            Mat resid = g.mean - targets;
            Mat inv_var = (-g.logvar).array().exp();
            total = 0.5 *
                    (g.logvar.array() + resid.array().square() * inv_var.array() +
                     kLog2Pi)
                        .sum() /
                    n;
            Mat d_mean = (resid.array() * inv_var.array()) / n;
            Mat d_logvar =
                (0.5 * (1.0 - resid.array().square() * inv_var.array())) / n;
            d_raw = gaussian_head_backward(p, raw, d_mean, d_logvar);
            break;
        }
        case LossKind::ScalarMean: {
            if (raw.cols() != 1)
                throw MlpError("compute_gradients: ScalarMean needs scalar output");
            total = raw.sum() / n;
            d_raw = Mat::Constant(raw.rows(), 1, 1.0 / n);
            break;
        }
    }
    mlp_backward(p, cache, d_raw, grads);
    for (const auto& w : grads.d_weights)
        if (!w.allFinite())
            throw MlpError("compute_gradients: non-finite gradient");
    return total;
}

double gaussian_nll(const Vec& mean, const Vec& logvar, const Vec& target) {
    if (mean.size() != logvar.size() || mean.size() != target.size())
        throw MlpError("gaussian_nll: dimension mismatch");
    double total = 0.0;
    for (int i = 0; i < mean.size(); ++i) {
        double r = target[i] - mean[i];
        total += logvar[i] + r * r * std::exp(-logvar[i]) + kLog2Pi;
    }
    return 0.5 * total;
}

Vec sample_gaussian(Rng& rng, const Vec& mean, const Vec& logvar) {
    if (mean.size() != logvar.size())
        throw MlpError("sample_gaussian: dimension mismatch");
    Vec out(mean.size());
    for (int i = 0; i < mean.size(); ++i)
        out[i] = mean[i] + std::exp(0.5 * logvar[i]) * rng.normal();
    return out;
}

AdamState AdamState::init(const MlpParams& p, double lr) {
    AdamState s;
    s.lr = lr;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        s.m_w.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        s.v_w.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        s.m_b.push_back(Vec::Zero(p.biases[l].size()));
        s.v_b.push_back(Vec::Zero(p.biases[l].size()));
    }
    return s;
}

void adam_step(AdamState& opt, MlpParams& p, const Gradients& grads) {
    if (opt.m_w.size() != p.weights.size() ||
        grads.d_weights.size() != p.weights.size())
        throw MlpError("adam_step: shape mismatch");
    opt.step += 1;
    double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (size_t l = 0; l < p.weights.size(); ++l) {
        if (grads.d_weights[l].rows() != p.weights[l].rows() ||
            grads.d_weights[l].cols() != p.weights[l].cols())
            throw MlpError("adam_step: gradient shape mismatch at layer " +
                           std::to_string(l));
        opt.m_w[l] = opt.beta1 * opt.m_w[l] + (1.0 - opt.beta1) * grads.d_weights[l];
        opt.v_w[l] = opt.beta2 * opt.v_w[l] +
                     (1.0 - opt.beta2) * grads.d_weights[l].array().square().matrix();
        Mat m_hat = opt.m_w[l] / bc1;
        Mat v_hat = opt.v_w[l] / bc2;
        p.weights[l] -=
            (opt.lr * m_hat.array() / (v_hat.array().sqrt() + opt.eps)).matrix();

        opt.m_b[l] = opt.beta1 * opt.m_b[l] + (1.0 - opt.beta1) * grads.d_biases[l];
        opt.v_b[l] = opt.beta2 * opt.v_b[l] +
                     (1.0 - opt.beta2) * grads.d_biases[l].array().square().matrix();
        Vec mb_hat = opt.m_b[l] / bc1;
        Vec vb_hat = opt.v_b[l] / bc2;
        p.biases[l] -=
            (opt.lr * mb_hat.array() / (vb_hat.array().sqrt() + opt.eps)).matrix();
    }
}

void ScalarAdam::update(double& param, double grad) {
    step += 1;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
    double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
    param -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

void Ensemble::validate() const {
    if (members.empty()) throw MlpError("ensemble: needs at least one member");
    for (const auto& m : members) {
        m.validate();
        if (m.input_dim() != members.front().input_dim() ||
            m.output_dim() != members.front().output_dim())
            throw MlpError("ensemble: members must share one architecture");
    }
}

Ensemble make_ensemble(int m, int input_dim, const std::vector<int>& hidden,
                       int target_dim, Activation act, Rng& rng) {
    Ensemble e;
    for (int i = 0; i < m; ++i)
        e.members.push_back(
            make_mlp(input_dim, hidden, target_dim, Head::Gaussian, act, rng));
    e.validate();
    return e;
}

std::vector<std::pair<Vec, Vec>> ensemble_predict(const Ensemble& e,
                                                  const Vec& input) {
    std::vector<std::pair<Vec, Vec>> out;
    out.reserve(e.members.size());
    for (const auto& m : e.members) {
        GaussianOut g = mlp_forward_gaussian(m, input.transpose());
        out.emplace_back(g.mean.row(0).transpose(),
                         g.logvar.row(0).transpose().array().exp().matrix());
    }
    return out;
}

}  // namespace cmbpo
