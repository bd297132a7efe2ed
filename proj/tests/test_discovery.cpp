#include <doctest.h>

#include <cmath>

#include "cmbpo/discovery.hpp"
#include "cmbpo/trainer.hpp"

using namespace cmbpo;

namespace {

Dataset env_dataset(const EnvSpec& spec, int n, std::uint64_t seed) {
    Rng env_rng = Rng(seed).split(1);
    Rng agent_rng = Rng(seed).split(3);
    return Dataset::from_transitions(
        collect_warmup(spec, n, env_rng, agent_rng));
}

// Synthetic dataset with arbitrary generator filling all 6 columns.
template <typename Gen>
Dataset synth(int n, Gen&& gen, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Transition> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) rows.push_back(gen(rng));
    return Dataset::from_transitions(rows);
}

}  // namespace

TEST_CASE("partial correlation basics") {
    SUBCASE("perfect correlation") {
        auto d = synth(
            1000,
            [](Rng& r) {
                double v = r.normal();
                return Transition{v, v, 0.5 * r.normal(), r.normal(),
                                  r.normal(), r.normal()};
            },
            1);
        CHECK(partial_correlation(d, Node::X, Node::Z, {}) ==
              doctest::Approx(1.0));
    }
    SUBCASE("independent normals") {
        auto d = synth(
            10000,
            [](Rng& r) {
                return Transition{r.normal(), r.normal(), r.normal(),
                                  r.normal(), r.normal(), r.normal()};
            },
            2);
        CHECK(std::abs(partial_correlation(d, Node::X, Node::Z, {})) < 0.05);
    }
    SUBCASE("chain blocked by the mediator") {
        // X -> A -> Z with unit coefficients, noise 0.1.
        auto d = synth(
            10000,
            [](Rng& r) {
                double x = r.normal();
                double m = x + 0.1 * r.normal();
                double z = m + 0.1 * r.normal();
                return Transition{x, z, m, r.normal(), r.normal(), r.normal()};
            },
            3);
        CHECK(std::abs(partial_correlation(d, Node::X, Node::Z, {Node::A})) <
              0.05);
    }
    SUBCASE("degenerate column raises naming the column") {
        auto d = synth(
            1000,
            [](Rng& r) {
                return Transition{r.normal(), 0.0, r.normal(), r.normal(),
                                  r.normal(), r.normal()};
            },
            4);
        CHECK_THROWS_WITH_AS(partial_correlation(d, Node::X, Node::Z, {}),
                             doctest::Contains("Z"), DiscoveryError);
    }
}

TEST_CASE("fisher-z test") {
    SUBCASE("closed-form p at rho = 0.1, N = 1000, one conditioner") {
        // z = atanh(0.1), stat = sqrt(996) * z, p = erfc(stat/sqrt 2)
        double z = 0.5 * std::log(1.1 / 0.9);
        double p = std::erfc(std::sqrt(996.0) * z / std::sqrt(2.0));
        CHECK(p == doctest::Approx(0.00157).epsilon(0.01));
    }
    SUBCASE("independent columns accepted") {
        auto d = synth(
            10000,
            [](Rng& r) {
                return Transition{r.normal(), r.normal(), r.normal(),
                                  r.normal(), r.normal(), r.normal()};
            },
            5);
        CiTestResult res = fisher_z_ci_test(d, Node::X, Node::Z, {}, 0.01);
        CHECK(res.independent);
        CHECK(res.p_value > 0.01);
    }
    SUBCASE("Z independent of R given X on ID env data") {
        Dataset d = env_dataset(EnvSpec{}, 10000, 6);
        CiTestResult res =
            fisher_z_ci_test(d, Node::Z, Node::R, {Node::X}, 0.01);
        CHECK(res.independent);
    }
}

TEST_CASE("causal information flow") {
    SUBCASE("zero partial correlation gives zero nats") {
        auto d = synth(
            10000,
            [](Rng& r) {
                return Transition{r.normal(), r.normal(), r.normal(),
                                  r.normal(), r.normal(), r.normal()};
            },
            7);
        CHECK(estimate_cif(d, Node::X, Node::Z, {Node::X}) < 0.001);
    }
    SUBCASE("closed form at rho = 0.5") {
        // y = rho x + sqrt(1-rho^2) e gives corr(x, y) = rho exactly in
        // expectation; -0.5 ln(1 - 0.25) = 0.14384
        auto d = synth(
            200000,
            [](Rng& r) {
                double x = r.normal();
                double y = 0.5 * x + std::sqrt(0.75) * r.normal();
                return Transition{x, y, r.normal(), r.normal(), r.normal(),
                                  r.normal()};
            },
            8);
        CHECK(estimate_cif(d, Node::X, Node::Z, {Node::X}) ==
              doctest::Approx(0.1438).epsilon(0.1));
    }
    SUBCASE("env edges: real flow positive, spurious flow near zero") {
        Dataset d = env_dataset(EnvSpec{}, 10000, 9);
        CHECK(estimate_cif(d, Node::A, Node::Xn, {Node::A, Node::X}) > 0.05);
        CHECK(estimate_cif(d, Node::Z, Node::R, {Node::Z, Node::X}) < 0.01);
    }
}

TEST_CASE("d-separation on the oracle graph") {
    CausalGraph g = true_graph(EnvSpec{});
    // direct edges are active
    CHECK_FALSE(d_separated(g, Node::X, Node::R, {Node::Z, Node::A}));
    CHECK_FALSE(d_separated(g, Node::Xn, Node::Zn, {Node::X, Node::Z, Node::A}));
    // spurious candidates are blocked given the remaining candidates
    CHECK(d_separated(g, Node::Z, Node::R, {Node::X, Node::A}));
    CHECK(d_separated(g, Node::A, Node::R, {Node::X, Node::Z}));
    CHECK(d_separated(g, Node::Z, Node::Xn, {Node::X, Node::A}));
    CHECK(d_separated(g, Node::X, Node::Zn,
                      {Node::Z, Node::A, Node::Xn}));
    // without conditioning on X, Z and R are dependent (confounded)
    CHECK_FALSE(d_separated(g, Node::Z, Node::R, {}));
}

TEST_CASE("learn_local_cgm") {
    SUBCASE("oracle-CI mode reproduces the true graph exactly") {
        DiscoveryOptions opts;
        opts.oracle_graph = true_graph(EnvSpec{});
        Dataset empty;
        empty.columns.resize(0, kNumNodes);
        CausalGraph g = learn_local_cgm(empty, opts);
        CHECK(g.edges.size() == 4);
        CHECK(g.has_edge(Node::X, Node::Xn));
        CHECK(g.has_edge(Node::A, Node::Xn));
        CHECK(g.has_edge(Node::Xn, Node::Zn));
        CHECK(g.has_edge(Node::X, Node::R));
    }
    SUBCASE("ID env data recovers the true edge set") {
        DiscoveryOptions opts;
        Dataset d = env_dataset(EnvSpec{}, 10000, 10);
        CausalGraph g = learn_local_cgm(d, opts);
        CHECK(g.edges.size() == 4);
        CHECK(g.has_edge(Node::X, Node::Xn));
        CHECK(g.has_edge(Node::A, Node::Xn));
        CHECK(g.has_edge(Node::Xn, Node::Zn));
        CHECK(g.has_edge(Node::X, Node::R));
        for (const auto& e : g.edges) CHECK(e.cif >= 0.0);
    }
    SUBCASE("planted A -> Z' edge is recovered") {
        auto d = synth(
            10000,
            [](Rng& r) {
                double x = r.uniform(-1, 1);
                double z = r.uniform(-1, 1);
                double a = r.uniform(-1, 1);
                double xn = 0.7 * x + 0.5 * a + 0.1 * r.normal();
                double zn = xn + 0.5 * a + 0.1 * r.normal();
                double rew = 0.1 - 0.1 * x * x + 0.1 * r.normal();
                return Transition{x, z, a, rew, xn, zn};
            },
            11);
        CausalGraph g = learn_local_cgm(d, DiscoveryOptions{});
        CHECK(g.has_edge(Node::A, Node::Zn));
        CHECK(g.has_edge(Node::Xn, Node::Zn));
    }
    SUBCASE("near-OOD data drops the constant Z columns") {
        EnvSpec near = apply_shift(EnvSpec{}, ShiftSpec::near_ood(0.0));
        Dataset d = env_dataset(near, 5000, 12);
        CausalGraph g = learn_local_cgm(d, DiscoveryOptions{});
        bool z_dropped = false, zn_dropped = false;
        for (Node n : g.dropped) {
            if (n == Node::Z) z_dropped = true;
            if (n == Node::Zn) zn_dropped = true;
        }
        CHECK(z_dropped);
        CHECK(zn_dropped);
        CHECK_FALSE(g.has_edge(Node::Xn, Node::Zn));
        CHECK(g.has_edge(Node::X, Node::R));
    }
    SUBCASE("too few rows rejected") {
        Dataset d = env_dataset(EnvSpec{}, 100, 13);
        CHECK_THROWS_AS(learn_local_cgm(d, DiscoveryOptions{}), DiscoveryError);
    }
}

TEST_CASE("row shuffling leaves statistics unchanged") {
    Dataset d = env_dataset(EnvSpec{}, 2000, 14);
    double before = partial_correlation(d, Node::X, Node::R, {Node::A});
    Dataset shuffled = d;
    Rng rng(15);
    for (int i = shuffled.rows() - 1; i > 0; --i) {
        int j = static_cast<int>(rng.below(i + 1));
        shuffled.columns.row(i).swap(shuffled.columns.row(j));
    }
    double after = partial_correlation(shuffled, Node::X, Node::R, {Node::A});
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("permutation CMI test tracks nonlinear dependence") {
    // y = x^2: linear correlation is ~0 but CMI is large.
    auto d = synth(
        3000,
        [](Rng& r) {
            double x = r.uniform(-1, 1);
            return Transition{x, x * x + 0.05 * r.normal(), r.normal(),
                              r.normal(), r.normal(), r.normal()};
        },
        16);
    Rng rng(17);
    CiTestResult dep = cmi_permutation_test(d, Node::X, Node::Z, {}, 0.01, rng);
    CHECK_FALSE(dep.independent);
    CiTestResult indep =
        cmi_permutation_test(d, Node::X, Node::A, {}, 0.01, rng);
    CHECK(indep.independent);
}

TEST_CASE("graph JSON and dot rendering") {
    CausalGraph g = true_graph(EnvSpec{});
    g.alpha = 0.01;
    nlohmann::json j = g.to_json();
    CausalGraph back = CausalGraph::from_json(j);
    CHECK(back.edges.size() == g.edges.size());
    CHECK(back.alpha == 0.01);
    std::string dot = g.to_dot();
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("X_next -> Z_next") != std::string::npos);
}
