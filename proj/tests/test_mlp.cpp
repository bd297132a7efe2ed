#include <doctest.h>

#include <cmath>

#include "cmbpo/mlp.hpp"
#include "cmbpo/serialize.hpp"

using namespace cmbpo;

namespace {

// Central finite-difference check of every gradient coordinate.
double max_relative_grad_error(MlpParams p, LossKind loss, const Mat& x,
                               const Mat& y) {
    Gradients g = Gradients::zeros_like(p);
    compute_gradients(p, loss, x, y, g);
    const double h = 1e-5;
    double worst = 0.0;
    auto probe = [&](double& param, double analytic) {
        double orig = param;
        param = orig + h;
        Gradients tmp = Gradients::zeros_like(p);
        double lp = compute_gradients(p, loss, x, y, tmp);
        param = orig - h;
        double lm = compute_gradients(p, loss, x, y, tmp);
        param = orig;
        double numeric = (lp - lm) / (2.0 * h);
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    for (size_t l = 0; l < p.weights.size(); ++l) {
        for (int r = 0; r < p.weights[l].rows(); ++r)
            for (int c = 0; c < p.weights[l].cols(); ++c)
                probe(p.weights[l](r, c), g.d_weights[l](r, c));
        for (int i = 0; i < p.biases[l].size(); ++i)
            probe(p.biases[l][i], g.d_biases[l][i]);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero network maps any input to zero") {
    Rng rng(1);
    MlpParams p = make_mlp(2, {4}, 2, Head::Deterministic, Activation::Tanh, rng);
    for (auto& w : p.weights) w.setZero();
    for (auto& b : p.biases) b.setZero();
    Vec in(2);
    in << 0.7, -1.3;
    Vec out = mlp_forward(p, in);
    CHECK(out.norm() == 0.0);
}

TEST_CASE("identity single layer passes input through") {
    Rng rng(1);
    MlpParams p = make_mlp(2, {}, 2, Head::Deterministic, Activation::Tanh, rng);
    p.weights[0].setIdentity();
    p.biases[0].setZero();
    Vec in(2);
    in << 0.3, -0.2;
    Vec out = mlp_forward(p, in);
    CHECK(out[0] == doctest::Approx(0.3));
    CHECK(out[1] == doctest::Approx(-0.2));
}

TEST_CASE("hand-computed one-hidden-layer tanh net") {
    Rng rng(1);
    MlpParams p = make_mlp(1, {2}, 1, Head::Deterministic, Activation::Tanh, rng);
    p.weights[0] << 1.0, -2.0;  // column vector: 2x1
    p.biases[0] << 0.5, -0.25;
    p.weights[1] << 0.75, 1.5;  // 1x2
    p.biases[1] << 0.1;
    Vec in(1);
    in << 0.4;
    // h = tanh([1*0.4+0.5, -2*0.4-0.25]); out = 0.75 h0 + 1.5 h1 + 0.1
    double h0 = std::tanh(0.9), h1 = std::tanh(-1.05);
    double expect = 0.75 * h0 + 1.5 * h1 + 0.1;
    CHECK(mlp_forward(p, in)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dimension mismatch names the layer") {
    Rng rng(1);
    MlpParams p = make_mlp(3, {4}, 1, Head::Deterministic, Activation::Tanh, rng);
    Mat bad(1, 2);
    bad.setZero();
    CHECK_THROWS_WITH_AS(mlp_forward(p, bad),
                         doctest::Contains("layer 0"), MlpError);
}

TEST_CASE("zero-residual linear MSE has zero gradients") {
    Rng rng(2);
    MlpParams p = make_mlp(2, {}, 1, Head::Deterministic, Activation::Tanh, rng);
    Mat x(8, 2);
    for (int i = 0; i < 8; ++i) {
        x(i, 0) = 0.1 * i;
        x(i, 1) = -0.05 * i;
    }
    Mat y = x * p.weights[0].transpose();
    y.rowwise() += p.biases[0].transpose();
    Gradients g = Gradients::zeros_like(p);
    double loss = compute_gradients(p, LossKind::Mse, x, y, g);
    CHECK(loss == doctest::Approx(0.0));
    CHECK(g.max_abs() == doctest::Approx(0.0));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(3);
    SUBCASE("MSE head") {
        MlpParams p =
            make_mlp(3, {8, 5}, 2, Head::Deterministic, Activation::Tanh, rng);
        Mat x(6, 3), y(6, 2);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        for (int i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1, 1);
        CHECK(max_relative_grad_error(p, LossKind::Mse, x, y) < 1e-4);
    }
    SUBCASE("Gaussian NLL head") {
        MlpParams p =
            make_mlp(2, {6}, 1, Head::Gaussian, Activation::Tanh, rng);
        Mat x(5, 2), y(5, 1);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        for (int i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1, 1);
        CHECK(max_relative_grad_error(p, LossKind::GaussianNll, x, y) < 1e-4);
    }
    SUBCASE("ReLU hidden activation") {
        MlpParams p =
            make_mlp(2, {7}, 2, Head::Deterministic, Activation::Relu, rng);
        Mat x(5, 2), y(5, 2);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        for (int i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1, 1);
        CHECK(max_relative_grad_error(p, LossKind::Mse, x, y) < 1e-4);
    }
}

TEST_CASE("gaussian NLL gradient w.r.t. mean vanishes at mean == target") {
    Rng rng(4);
    MlpParams p = make_mlp(1, {}, 1, Head::Gaussian, Activation::Tanh, rng);
    Mat x(1, 1);
    x << 0.5;
    GaussianOut out = mlp_forward_gaussian(p, x);
    Mat y(1, 1);
    y << out.mean(0, 0);
    // Mean-output weights feed only the first output row.
    Gradients g = Gradients::zeros_like(p);
    compute_gradients(p, LossKind::GaussianNll, x, y, g);
    CHECK(std::abs(g.d_weights[0](0, 0)) < 1e-14);
    CHECK(std::abs(g.d_biases[0][0]) < 1e-14);
}

TEST_CASE("adam with zero gradients is the identity") {
    Rng rng(5);
    MlpParams p = make_mlp(2, {3}, 1, Head::Deterministic, Activation::Tanh, rng);
    MlpParams before = p;
    AdamState opt = AdamState::init(p);
    Gradients zero = Gradients::zeros_like(p);
    adam_step(opt, p, zero);
    for (size_t l = 0; l < p.weights.size(); ++l)
        CHECK((p.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(opt.step == 1);
}

TEST_CASE("closed-form first adam step") {
    // Single scalar parameter, g = 1: bias-corrected first step moves the
    // parameter by exactly lr (up to the eps term).
    Rng rng(6);
    MlpParams p = make_mlp(1, {}, 1, Head::Deterministic, Activation::Tanh, rng);
    p.weights[0](0, 0) = 1.0;
    AdamState opt = AdamState::init(p, 1e-3);
    Gradients g = Gradients::zeros_like(p);
    g.d_weights[0](0, 0) = 1.0;
    adam_step(opt, p, g);
    CHECK(p.weights[0](0, 0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam purity: identical state gives identical result") {
    Rng rng(7);
    MlpParams p1 = make_mlp(2, {4}, 1, Head::Deterministic, Activation::Tanh, rng);
    MlpParams p2 = p1;
    AdamState o1 = AdamState::init(p1), o2 = AdamState::init(p2);
    Gradients g = Gradients::zeros_like(p1);
    g.d_weights[0].setConstant(0.3);
    adam_step(o1, p1, g);
    adam_step(o2, p2, g);
    for (size_t l = 0; l < p1.weights.size(); ++l)
        CHECK(p1.weights[l] == p2.weights[l]);
}

TEST_CASE("gaussian_nll closed-form values") {
    Vec m(1), lv(1), t(1);
    m << 0.0;
    lv << 0.0;
    t << 0.0;
    CHECK(gaussian_nll(m, lv, t) == doctest::Approx(0.9189385).epsilon(1e-6));
    t << 1.0;
    CHECK(gaussian_nll(m, lv, t) == doctest::Approx(1.4189385).epsilon(1e-6));
    // additivity across dimensions
    Vec m2(2), lv2(2), t2(2);
    m2 << 0.0, 0.0;
    lv2 << 0.0, 0.0;
    t2 << 1.0, 1.0;
    CHECK(gaussian_nll(m2, lv2, t2) ==
          doctest::Approx(2.0 * gaussian_nll(m, lv, t)).epsilon(1e-12));
}

TEST_CASE("sample_gaussian") {
    SUBCASE("floor variance collapses to the mean") {
        Rng rng(8);
        Vec m(2), lv(2);
        m << 0.4, -0.2;
        lv << kLogVarMin, kLogVarMin;
        Vec s = sample_gaussian(rng, m, lv);
        CHECK((s - m).cwiseAbs().maxCoeff() < 0.05);
    }
    SUBCASE("fixed seed reproduces the sample") {
        Vec m = Vec::Zero(3), lv = Vec::Zero(3);
        Rng a(9), b(9);
        CHECK(sample_gaussian(a, m, lv) == sample_gaussian(b, m, lv));
    }
    SUBCASE("empirical std matches") {
        Rng rng(10);
        Vec m = Vec::Zero(1), lv(1);
        lv << std::log(0.01);
        double sq = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            double x = sample_gaussian(rng, m, lv)[0];
            sq += x * x;
        }
        double sd = std::sqrt(sq / n);
        CHECK(sd > 0.098);
        CHECK(sd < 0.102);
    }
}

TEST_CASE("ensemble predictions") {
    Rng rng(11);
    SUBCASE("M=1 matches the single member") {
        Ensemble e = make_ensemble(1, 2, {4}, 1, Activation::Tanh, rng);
        Vec in(2);
        in << 0.2, -0.6;
        auto preds = ensemble_predict(e, in);
        REQUIRE(preds.size() == 1);
        GaussianOut g = mlp_forward_gaussian(e.members[0], in.transpose());
        CHECK(preds[0].first[0] == g.mean(0, 0));
        CHECK(preds[0].second[0] == doctest::Approx(std::exp(g.logvar(0, 0))));
        CHECK(preds[0].second[0] > 0.0);
    }
    SUBCASE("identical members give identical pairs") {
        Ensemble e = make_ensemble(3, 1, {3}, 1, Activation::Tanh, rng);
        e.members[1] = e.members[0];
        e.members[2] = e.members[0];
        Vec in(1);
        in << 0.5;
        auto preds = ensemble_predict(e, in);
        CHECK(preds[0].first == preds[1].first);
        CHECK(preds[1].second == preds[2].second);
    }
}

TEST_CASE("ensemble trained on y = 2x recovers the slope") {
    Rng rng(12);
    Ensemble e = make_ensemble(5, 1, {16}, 1, Activation::Tanh, rng);
    std::vector<AdamState> opts;
    for (auto& m : e.members) opts.push_back(AdamState::init(m, 3e-3));
    const int n = 256;
    Mat x(n, 1), y(n, 1);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform(-1, 1);
        y(i, 0) = 2.0 * x(i, 0) + rng.normal(0.0, 0.1);
    }
    for (int step = 0; step < 1500; ++step) {
        for (size_t m = 0; m < e.members.size(); ++m) {
            Gradients g = Gradients::zeros_like(e.members[m]);
            compute_gradients(e.members[m], LossKind::GaussianNll, x, y, g);
            adam_step(opts[m], e.members[m], g);
        }
    }
    Vec probe(1);
    probe << 0.5;
    for (auto& [mean, var] : ensemble_predict(e, probe)) {
        CHECK(std::abs(mean[0] - 1.0) < 0.1);
        CHECK(var[0] > 0.0);
    }
}

TEST_CASE("parameter JSON round-trip is bit-exact") {
    Rng rng(13);
    MlpParams p = make_mlp(3, {5, 4}, 2, Head::Gaussian, Activation::Relu, rng);
    nlohmann::json j = mlp_to_json(p);
    std::string text = j.dump();
    MlpParams back = mlp_from_json(nlohmann::json::parse(text));
    for (size_t l = 0; l < p.weights.size(); ++l) {
        CHECK(p.weights[l] == back.weights[l]);
        CHECK(p.biases[l] == back.biases[l]);
    }
    CHECK(back.head == Head::Gaussian);
    CHECK(back.hidden_act == Activation::Relu);
}

TEST_CASE("logvar clamp keeps variance in range") {
    Rng rng(14);
    MlpParams p = make_mlp(1, {}, 1, Head::Gaussian, Activation::Tanh, rng);
    p.weights[0].setZero();
    p.biases[0] << 0.0, 100.0;  // huge raw logvar
    Mat x(1, 1);
    x << 0.0;
    GaussianOut g = mlp_forward_gaussian(p, x);
    // the clamp is smooth; its asymptotes overshoot by softplus tails
    CHECK(g.logvar(0, 0) <= kLogVarMax + 1e-4);
    p.biases[0][1] = -100.0;
    g = mlp_forward_gaussian(p, x);
    CHECK(g.logvar(0, 0) >= kLogVarMin - 1e-4);
}
