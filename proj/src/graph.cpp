#include "cmbpo/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace cmbpo {

namespace {
const std::array<std::string, kNumNodes> kNames = {"X",      "Z",      "A",
                                                   "X_next", "Z_next", "R"};
}

const std::string& node_name(Node n) { return kNames[static_cast<int>(n)]; }

Node node_from_name(const std::string& name) {
    for (int i = 0; i < kNumNodes; ++i)
        if (kNames[i] == name) return static_cast<Node>(i);
    throw std::runtime_error("unknown node name: " + name);
}

std::vector<Node> candidate_parents(Node target) {
    switch (target) {
        case Node::Xn: return {Node::X, Node::Z, Node::A};
        case Node::Zn: return {Node::X, Node::Z, Node::A, Node::Xn};
        case Node::R: return {Node::X, Node::Z, Node::A};
        default:
            throw std::runtime_error("candidate_parents: " + node_name(target) +
                                     " is not a discovery target");
    }
}

bool CausalGraph::has_edge(Node from, Node to) const {
    return std::any_of(edges.begin(), edges.end(), [&](const Edge& e) {
        return e.from == from && e.to == to;
    });
}

std::vector<Node> CausalGraph::parents(Node target) const {
    std::vector<Node> out;
    for (const auto& e : edges)
        if (e.to == target) out.push_back(e.from);
    std::sort(out.begin(), out.end());
    return out;
}

void CausalGraph::validate() const {
    for (const auto& e : edges) {
        if (e.to != Node::Xn && e.to != Node::Zn && e.to != Node::R)
            throw std::runtime_error("graph: edge into non-target node " +
                                     node_name(e.to));
        if (e.from == Node::R)
            throw std::runtime_error("graph: R cannot be a parent");
        if (e.to == Node::R && (e.from == Node::Xn || e.from == Node::Zn))
            throw std::runtime_error(
                "graph: R and next-state nodes share no edge");
        if (e.from == Node::Zn)
            throw std::runtime_error("graph: Z_next cannot be a parent");
        if (e.from == Node::Xn && e.to != Node::Zn)
            throw std::runtime_error("graph: X_next may only parent Z_next");
        if (e.cif < 0.0)
            throw std::runtime_error("graph: negative edge strength");
    }
}

nlohmann::json CausalGraph::to_json() const {
    nlohmann::json j;
    j["alpha"] = alpha;
    j["edges"] = nlohmann::json::array();
    for (const auto& e : edges)
        j["edges"].push_back({{"from", node_name(e.from)},
                              {"to", node_name(e.to)},
                              {"cif", e.cif},
                              {"p", e.p}});
    j["absent"] = nlohmann::json::array();
    for (const auto& a : absent)
        j["absent"].push_back({{"from", node_name(a.from)},
                               {"to", node_name(a.to)},
                               {"p", a.p}});
    j["dropped"] = nlohmann::json::array();
    for (Node n : dropped) j["dropped"].push_back(node_name(n));
    return j;
}

CausalGraph CausalGraph::from_json(const nlohmann::json& j) {
    CausalGraph g;
    g.alpha = j.at("alpha").get<double>();
    for (const auto& e : j.at("edges"))
        g.edges.push_back({node_from_name(e.at("from").get<std::string>()),
                           node_from_name(e.at("to").get<std::string>()),
                           e.at("cif").get<double>(), e.at("p").get<double>()});
    if (j.contains("absent"))
        for (const auto& a : j.at("absent"))
            g.absent.push_back({node_from_name(a.at("from").get<std::string>()),
                                node_from_name(a.at("to").get<std::string>()),
                                a.at("p").get<double>()});
    if (j.contains("dropped"))
        for (const auto& d : j.at("dropped"))
            g.dropped.push_back(node_from_name(d.get<std::string>()));
    g.validate();
    return g;
}

std::string CausalGraph::to_dot() const {
    std::string out = "digraph cgm {\n  rankdir=LR;\n";
    for (int i = 0; i < kNumNodes; ++i)
        out += "  " + kNames[i] + ";\n";
    for (const auto& e : edges) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "  %s -> %s [label=\"%.4f\"];\n",
                      node_name(e.from).c_str(), node_name(e.to).c_str(),
                      e.cif);
        out += buf;
    }
    out += "}\n";
    return out;
}

}  // namespace cmbpo
