#pragma once

#include <array>
#include <string>
#include <vector>

#include "vendor_json.hpp"

namespace cmbpo {

/// Variables of one transition slice. X, Z, A are slice-t roots;
/// Xn, Zn, R are the discovery targets.
enum class Node { X = 0, Z = 1, A = 2, Xn = 3, Zn = 4, R = 5 };

inline constexpr int kNumNodes = 6;

const std::string& node_name(Node n);
Node node_from_name(const std::string& name);

struct Edge {
    Node from;
    Node to;
    double cif = 0.0;  // causal information flow, nats
    double p = 0.0;    // p-value of the final dependence test
};

/// Record of a candidate edge rejected during discovery.
struct AbsentEdge {
    Node from;
    Node to;
    double p = 1.0;
};

/// Directed edge set from candidate parents into {Xn, Zn, R}.
struct CausalGraph {
    std::vector<Edge> edges;
    std::vector<AbsentEdge> absent;
    std::vector<Node> dropped;  // constant columns removed before testing
    double alpha = 0.01;

    bool has_edge(Node from, Node to) const;
    std::vector<Node> parents(Node target) const;
    void validate() const;

    nlohmann::json to_json() const;
    static CausalGraph from_json(const nlohmann::json& j);
    std::string to_dot() const;
};

/// Candidate parent sets per target: C(Xn) = {X, Z, A};
/// C(Zn) = {X, Z, A, Xn}; C(R) = {X, Z, A}. Xn may parent Zn but
/// never conversely; R shares no edge with next-state nodes.
std::vector<Node> candidate_parents(Node target);

inline const std::array<Node, 3> kTargets = {Node::Xn, Node::Zn, Node::R};

}  // namespace cmbpo
