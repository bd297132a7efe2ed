#include "cmbpo/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace cmbpo {

namespace {

std::string node_list(const std::vector<Node>& nodes) {
    std::string out;
    for (Node n : nodes) {
        if (!out.empty()) out += ", ";
        out += node_name(n);
    }
    return out;
}

}  // namespace

Dataset Dataset::from_transitions(const std::vector<Transition>& rows) {
    Dataset d;
    d.columns.resize(static_cast<int>(rows.size()), kNumNodes);
    for (size_t i = 0; i < rows.size(); ++i) {
        const Transition& t = rows[i];
        d.columns.row(static_cast<int>(i)) << t.x, t.z, t.a, t.x_next, t.z_next,
            t.r;
    }
    return d;
}

void Dataset::validate(int min_rows) const {
    if (rows() < min_rows)
        throw DiscoveryError("dataset: " + std::to_string(rows()) +
                             " rows, need at least " + std::to_string(min_rows));
    if (!columns.allFinite())
        throw DiscoveryError("dataset: non-finite entries");
}

double Dataset::variance(Node n) const {
    Eigen::VectorXd c = col(n);
    double mean = c.mean();
    return (c.array() - mean).square().sum() /
           std::max<double>(1.0, c.size() - 1);
}

namespace {

// Partial correlation of the first two columns given the rest, via
// inversion of the empirical correlation matrix. `label` names the
// columns in error messages.
double partial_corr_columns(const Eigen::MatrixXd& cols,
                            const std::string& label) {
    int n = static_cast<int>(cols.rows());
    int m = static_cast<int>(cols.cols());
    Eigen::MatrixXd sub = cols;
    Eigen::RowVectorXd mean = sub.colwise().mean();
    sub.rowwise() -= mean;
    Eigen::MatrixXd cov = (sub.transpose() * sub) / double(n - 1);
    Eigen::VectorXd sd = cov.diagonal().array().sqrt();
    Eigen::MatrixXd corr = cov.array() / (sd * sd.transpose()).array();

    Eigen::FullPivLU<Eigen::MatrixXd> lu(corr);
    if (!lu.isInvertible()) {
        // A perfectly correlated pair makes the matrix singular while
        // the answer is unambiguous.
        double pair = corr(0, 1);
        if (m >= 2 && std::abs(pair) > 1.0 - 1e-12)
            return pair > 0 ? 1.0 : -1.0;
        throw DiscoveryError(
            "partial_correlation: singular correlation submatrix over " +
            label);
    }
    Eigen::MatrixXd prec = lu.inverse();
    double rho = -prec(0, 1) / std::sqrt(prec(0, 0) * prec(1, 1));
    return std::clamp(rho, -1.0, 1.0);
}

}  // namespace

double partial_correlation(const Dataset& data, Node x, Node y,
                           const std::vector<Node>& cond) {
    if (x == y) throw DiscoveryError("partial_correlation: x == y");
    for (Node c : cond)
        if (c == x || c == y)
            throw DiscoveryError(
                "partial_correlation: conditioning set contains x or y");
    int n = data.rows();
    int k = static_cast<int>(cond.size());
    if (n <= k + 3)
        throw DiscoveryError("partial_correlation: too few rows for |cond| = " +
                             std::to_string(k));

    std::vector<Node> vars = {x, y};
    vars.insert(vars.end(), cond.begin(), cond.end());
    int m = static_cast<int>(vars.size());

    std::vector<Node> degenerate;
    for (Node v : vars)
        if (data.variance(v) < kConstantColumnVar) degenerate.push_back(v);
    if (!degenerate.empty())
        throw DiscoveryError("partial_correlation: degenerate columns: " +
                             node_list(degenerate));

    Eigen::MatrixXd sub(n, m);
    for (int j = 0; j < m; ++j) sub.col(j) = data.col(vars[j]);
    return partial_corr_columns(sub, node_list(vars));
}

CiTestResult fisher_z_ci_test(const Dataset& data, Node x, Node y,
                              const std::vector<Node>& cond, double alpha) {
    CiTestResult res;
    res.cond = cond;
    res.rho = partial_correlation(data, x, y, cond);
    int n = data.rows();
    int k = static_cast<int>(cond.size());
    if (std::abs(res.rho) >= 1.0 - 1e-15) {
        res.p_value = 0.0;
        res.independent = false;
        return res;
    }
    double z = 0.5 * std::log((1.0 + res.rho) / (1.0 - res.rho));
    double stat = std::sqrt(double(n - k - 3)) * std::abs(z);
    res.p_value = std::erfc(stat / std::sqrt(2.0));
    res.independent = res.p_value > alpha;
    return res;
}

namespace {

double fisher_p_from_rho(double rho, int n, int k) {
    if (std::abs(rho) >= 1.0 - 1e-15) return 0.0;
    double z = 0.5 * std::log((1.0 + rho) / (1.0 - rho));
    double stat = std::sqrt(double(n - k - 3)) * std::abs(z);
    return std::erfc(stat / std::sqrt(2.0));
}

// Fisher-z with quadratic feature augmentation: the candidate is
// tested linearly and as its square, conditioning on the remaining
// candidates plus their squares; the two p-values are Bonferroni
// combined. The reward channel depends on X only through X^2, which a
// purely linear partial correlation cannot see.
CiTestResult fisher_quad_ci_test(const Dataset& data, Node x, Node y,
                                 const std::vector<Node>& cond, double alpha) {
    int n = data.rows();
    std::vector<Eigen::VectorXd> cond_cols;
    for (Node c : cond) {
        cond_cols.push_back(data.col(c));
        Eigen::VectorXd sq = data.col(c).array().square();
        double var =
            (sq.array() - sq.mean()).square().sum() / std::max(1, n - 1);
        if (var > kConstantColumnVar) cond_cols.push_back(sq);
    }
    int k = static_cast<int>(cond_cols.size());
    if (n <= k + 3)
        throw DiscoveryError("fisher_quad_ci_test: too few rows for |cond| = " +
                             std::to_string(k));
    auto rho_for = [&](const Eigen::VectorXd& xc) {
        Eigen::MatrixXd cols(n, 2 + k);
        cols.col(0) = xc;
        cols.col(1) = data.col(y);
        for (int i = 0; i < k; ++i) cols.col(2 + i) = cond_cols[i];
        return partial_corr_columns(cols, node_name(x) + " vs " + node_name(y) +
                                              " (augmented)");
    };

    double rho_lin = rho_for(data.col(x));
    double p_lin = fisher_p_from_rho(rho_lin, n, k);
    double rho_quad = 0.0, p_quad = 1.0;
    Eigen::VectorXd xsq = data.col(x).array().square();
    double xsq_var =
        (xsq.array() - xsq.mean()).square().sum() / std::max(1, n - 1);
    if (xsq_var > kConstantColumnVar) {
        rho_quad = rho_for(xsq);
        p_quad = fisher_p_from_rho(rho_quad, n, k);
    }

    CiTestResult res;
    res.cond = cond;
    res.rho = p_lin <= p_quad ? rho_lin : rho_quad;
    res.p_value = std::min(1.0, 2.0 * std::min(p_lin, p_quad));
    res.independent = res.p_value > alpha;
    return res;
}

}  // namespace

double estimate_cif(const Dataset& data, Node x, Node y,
                    const std::vector<Node>& parents) {
    std::vector<Node> cond;
    for (Node p : parents)
        if (p != x) cond.push_back(p);
    double rho = partial_correlation(data, x, y, cond);
    double cif = -0.5 * std::log(std::max(1.0 - rho * rho, 1e-300));
    return std::max(cif, 0.0);
}

namespace {

// Quantile-bin a column into `bins` levels.
std::vector<int> bin_column(const Eigen::VectorXd& col, int bins) {
    int n = static_cast<int>(col.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return col[a] < col[b]; });
    std::vector<int> out(n);
    for (int r = 0; r < n; ++r)
        out[order[r]] = std::min(bins - 1, r * bins / n);
    return out;
}

double binned_cmi(const std::vector<int>& bx, const std::vector<int>& by,
                  const std::vector<int>& bc, int bins, int cond_levels) {
    int n = static_cast<int>(bx.size());
    std::vector<double> pxyc(bins * bins * cond_levels, 0.0);
    std::vector<double> pxc(bins * cond_levels, 0.0);
    std::vector<double> pyc(bins * cond_levels, 0.0);
    std::vector<double> pc(cond_levels, 0.0);
    double w = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        int c = bc[i];
        pxyc[(bx[i] * bins + by[i]) * cond_levels + c] += w;
        pxc[bx[i] * cond_levels + c] += w;
        pyc[by[i] * cond_levels + c] += w;
        pc[c] += w;
    }
    double cmi = 0.0;
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b)
            for (int c = 0; c < cond_levels; ++c) {
                double pj = pxyc[(a * bins + b) * cond_levels + c];
                if (pj <= 0.0) continue;
                cmi += pj * std::log(pj * pc[c] /
                                     (pxc[a * cond_levels + c] *
                                      pyc[b * cond_levels + c]));
            }
    return std::max(cmi, 0.0);
}

}  // namespace

CiTestResult cmi_permutation_test(const Dataset& data, Node x, Node y,
                                  const std::vector<Node>& cond, double alpha,
                                  Rng& rng, int bins, int permutations) {
    int n = data.rows();
    std::vector<int> bx = bin_column(data.col(x), bins);
    std::vector<int> by = bin_column(data.col(y), bins);

    // Joint conditioning stratum per row.
    int cond_levels = 1;
    std::vector<int> bc(n, 0);
    for (Node c : cond) {
        std::vector<int> b = bin_column(data.col(c), bins);
        for (int i = 0; i < n; ++i) bc[i] = bc[i] * bins + b[i];
        cond_levels *= bins;
    }

    double observed = binned_cmi(bx, by, bc, bins, cond_levels);

    // Strata of identical conditioning bins; x is shuffled within each.
    std::vector<std::vector<int>> strata(cond_levels);
    for (int i = 0; i < n; ++i) strata[bc[i]].push_back(i);

    int exceed = 0;
    std::vector<int> perm_bx = bx;
    for (int p = 0; p < permutations; ++p) {
        for (auto& idx : strata) {
            for (size_t i = idx.size(); i > 1; --i) {
                size_t j = rng.below(i);
                std::swap(perm_bx[idx[i - 1]], perm_bx[idx[j]]);
            }
        }
        if (binned_cmi(perm_bx, by, bc, bins, cond_levels) >= observed) ++exceed;
    }

    CiTestResult res;
    res.cond = cond;
    res.p_value = double(1 + exceed) / double(1 + permutations);
    res.rho = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * observed)));
    res.independent = res.p_value > alpha;
    return res;
}

bool d_separated(const CausalGraph& g, Node x, Node y,
                 const std::vector<Node>& cond) {
    // Latent-augmented DAG: graph edges plus one latent per pair of
    // slice-t roots (they are dependent through episode history and the
    // policy, not through local edges).
    constexpr int kLatents = 3;
    const int total = kNumNodes + kLatents;
    std::vector<std::vector<int>> parents(total), children(total);
    auto add_edge = [&](int from, int to) {
        parents[to].push_back(from);
        children[from].push_back(to);
    };
    for (const auto& e : g.edges)
        add_edge(static_cast<int>(e.from), static_cast<int>(e.to));
    const int roots[3] = {static_cast<int>(Node::X), static_cast<int>(Node::Z),
                          static_cast<int>(Node::A)};
    int latent = kNumNodes;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            add_edge(latent, roots[i]);
            add_edge(latent, roots[j]);
            ++latent;
        }

    std::vector<bool> in_cond(total, false);
    for (Node c : cond) in_cond[static_cast<int>(c)] = true;

    // Ancestors of the conditioning set.
    std::vector<bool> anc(total, false);
    std::vector<int> stack;
    for (int i = 0; i < total; ++i)
        if (in_cond[i]) stack.push_back(i);
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (anc[v]) continue;
        anc[v] = true;
        for (int p : parents[v]) stack.push_back(p);
    }

    // Reachability over active trails; direction: 0 = arrived from a
    // child (upward), 1 = arrived from a parent (downward).
    std::vector<std::array<bool, 2>> visited(total, {false, false});
    std::vector<std::pair<int, int>> frontier = {{static_cast<int>(x), 0}};
    while (!frontier.empty()) {
        auto [v, dir] = frontier.back();
        frontier.pop_back();
        if (visited[v][dir]) continue;
        visited[v][dir] = true;
        if (v == static_cast<int>(y) && !in_cond[v]) return false;
        if (dir == 0 && !in_cond[v]) {
            for (int p : parents[v]) frontier.push_back({p, 0});
            for (int c : children[v]) frontier.push_back({c, 1});
        } else if (dir == 1) {
            if (!in_cond[v])
                for (int c : children[v]) frontier.push_back({c, 1});
            if (anc[v])
                for (int p : parents[v]) frontier.push_back({p, 0});
        }
    }
    return true;
}

CausalGraph learn_local_cgm(const Dataset& data, const DiscoveryOptions& opts) {
    const bool oracle = opts.oracle_graph.has_value();
    if (!oracle) data.validate(opts.min_rows);

    CausalGraph g;
    g.alpha = opts.alpha;
    Rng perm_rng(opts.perm_seed);

    // Constant columns are dropped up front; their edges are declared
    // absent (NearOOD makes Z and Z_next degenerate).
    std::vector<bool> is_dropped(kNumNodes, false);
    if (!oracle) {
        for (int i = 0; i < kNumNodes; ++i) {
            Node n = static_cast<Node>(i);
            if (data.variance(n) < kConstantColumnVar) {
                is_dropped[i] = true;
                g.dropped.push_back(n);
            }
        }
    }

    auto run_test = [&](Node v, Node target,
                        const std::vector<Node>& cond) -> CiTestResult {
        if (oracle) {
            CiTestResult res;
            res.cond = cond;
            res.independent = d_separated(*opts.oracle_graph, v, target, cond);
            res.p_value = res.independent ? 1.0 : 0.0;
            res.rho = res.independent ? 0.0 : 1.0;
            return res;
        }
        if (opts.family == CiTestFamily::FisherZ)
            return fisher_quad_ci_test(data, v, target, cond, opts.alpha);
        return cmi_permutation_test(data, v, target, cond, opts.alpha, perm_rng);
    };

    for (Node target : kTargets) {
        std::vector<Node> candidates = candidate_parents(target);
        if (is_dropped[static_cast<int>(target)]) {
            for (Node v : candidates) g.absent.push_back({v, target, 1.0});
            continue;
        }
        std::vector<Node> survivors;
        for (Node v : candidates) {
            if (is_dropped[static_cast<int>(v)])
                g.absent.push_back({v, target, 1.0});
            else
                survivors.push_back(v);
        }

        // Backward elimination: each round tests every candidate
        // against the target given the rest and drops all that come
        // out independent, until a round keeps everyone. Dropping in
        // batches keeps the number of tests an absent edge faces near
        // one, so the per-edge false-detection rate stays near alpha.
        std::vector<double> last_p(survivors.size(), 0.0);
        while (true) {
            std::vector<bool> keep(survivors.size(), true);
            bool removed = false;
            for (size_t i = 0; i < survivors.size(); ++i) {
                std::vector<Node> cond;
                for (size_t j = 0; j < survivors.size(); ++j)
                    if (j != i) cond.push_back(survivors[j]);
                CiTestResult res = run_test(survivors[i], target, cond);
                last_p[i] = res.p_value;
                if (res.independent) {
                    keep[i] = false;
                    removed = true;
                    g.absent.push_back({survivors[i], target, res.p_value});
                }
            }
            if (!removed) break;
            std::vector<Node> next;
            std::vector<double> next_p;
            for (size_t i = 0; i < survivors.size(); ++i)
                if (keep[i]) {
                    next.push_back(survivors[i]);
                    next_p.push_back(last_p[i]);
                }
            survivors.swap(next);
            last_p.swap(next_p);
        }

        for (size_t i = 0; i < survivors.size(); ++i) {
            double cif = 0.0;
            if (!oracle)
                cif = estimate_cif(data, survivors[i], target, survivors);
            g.edges.push_back({survivors[i], target, cif, last_p[i]});
        }
    }

    g.validate();
    return g;
}

}  // namespace cmbpo
