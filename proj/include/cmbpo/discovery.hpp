#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "cmbpo/env.hpp"
#include "cmbpo/graph.hpp"
#include "cmbpo/rng.hpp"

namespace cmbpo {

struct DiscoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Column-labeled transition matrix over (X, Z, A, X_next, Z_next, R).
struct Dataset {
    Eigen::MatrixXd columns;  // N x 6, column index = Node value

    static Dataset from_transitions(const std::vector<Transition>& rows);
    int rows() const { return static_cast<int>(columns.rows()); }
    Eigen::VectorXd col(Node n) const {
        return columns.col(static_cast<int>(n));
    }
    void validate(int min_rows) const;
    double variance(Node n) const;
};

inline constexpr double kConstantColumnVar = 1e-12;
inline constexpr int kDefaultMinRows = 500;

/// Partial correlation of x and y given `cond`, via inversion of the
/// empirical correlation submatrix. Throws on degenerate columns.
double partial_correlation(const Dataset& data, Node x, Node y,
                           const std::vector<Node>& cond);

struct CiTestResult {
    double p_value = 1.0;
    double rho = 0.0;
    std::vector<Node> cond;
    bool independent = true;
};

/// Fisher-z conditional independence test at level alpha.
CiTestResult fisher_z_ci_test(const Dataset& data, Node x, Node y,
                              const std::vector<Node>& cond, double alpha);

/// Causal information flow estimate, Gaussian route:
/// -1/2 ln(1 - rho^2) with rho the partial correlation of x and y
/// given parents \ {x}. Clamped to >= 0.
double estimate_cif(const Dataset& data, Node x, Node y,
                    const std::vector<Node>& parents);

/// Permutation test on binned conditional mutual information; handles
/// nonlinear dependence. x is permuted within strata of the binned
/// conditioning set.
CiTestResult cmi_permutation_test(const Dataset& data, Node x, Node y,
                                  const std::vector<Node>& cond, double alpha,
                                  Rng& rng, int bins = 4,
                                  int permutations = 200);

enum class CiTestFamily { FisherZ, CmiPermutation };

struct DiscoveryOptions {
    double alpha = 0.01;
    int min_rows = kDefaultMinRows;
    CiTestFamily family = CiTestFamily::FisherZ;
    /// Answer CI tests by d-separation on this graph instead of data.
    std::optional<CausalGraph> oracle_graph;
    std::uint64_t perm_seed = 0;  // used by the permutation family
};

/// Learn the local causal graph over targets {X_next, Z_next, R} by
/// per-target backward elimination under temporal constraints.
/// Constant columns are dropped and recorded.
CausalGraph learn_local_cgm(const Dataset& data, const DiscoveryOptions& opts);

/// d-separation of x and y given `cond` in the oracle graph, with the
/// slice-t roots {X, Z, A} treated as mutually confounded.
bool d_separated(const CausalGraph& g, Node x, Node y,
                 const std::vector<Node>& cond);

}  // namespace cmbpo
