#include "cmbpo/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cmbpo {

nlohmann::json matrix_to_json(const Mat& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> flat(m.size());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) flat[r * m.cols() + c] = m(r, c);
    j["data"] = flat;
    return j;
}

Mat matrix_from_json(const nlohmann::json& j) {
    int rows = j.at("rows").get<int>();
    int cols = j.at("cols").get<int>();
    auto flat = j.at("data").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != rows * cols)
        throw std::runtime_error("matrix_from_json: size mismatch");
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
    return m;
}

nlohmann::json vector_to_json(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vector_from_json(const nlohmann::json& j) {
    auto flat = j.get<std::vector<double>>();
    Vec v(flat.size());
    for (size_t i = 0; i < flat.size(); ++i) v[static_cast<int>(i)] = flat[i];
    return v;
}

nlohmann::json mlp_to_json(const MlpParams& p) {
    nlohmann::json j;
    j["version"] = 1;
    j["hidden_act"] = p.hidden_act == Activation::Tanh ? "tanh" : "relu";
    j["head"] = p.head == Head::Gaussian ? "gaussian" : "deterministic";
    j["target_dim"] = p.target_dim;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (size_t l = 0; l < p.weights.size(); ++l) {
        j["weights"].push_back(matrix_to_json(p.weights[l]));
        j["biases"].push_back(vector_to_json(p.biases[l]));
    }
    return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
    MlpParams p;
    std::string act = j.at("hidden_act").get<std::string>();
    p.hidden_act = act == "tanh" ? Activation::Tanh : Activation::Relu;
    std::string head = j.at("head").get<std::string>();
    p.head = head == "gaussian" ? Head::Gaussian : Head::Deterministic;
    p.target_dim = j.at("target_dim").get<int>();
    for (const auto& w : j.at("weights")) p.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) p.biases.push_back(vector_from_json(b));
    p.validate();
    return p;
}

nlohmann::json adam_to_json(const AdamState& s) {
    nlohmann::json j;
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["beta1"] = s.beta1;
    j["beta2"] = s.beta2;
    j["eps"] = s.eps;
    j["m_w"] = nlohmann::json::array();
    j["v_w"] = nlohmann::json::array();
    j["m_b"] = nlohmann::json::array();
    j["v_b"] = nlohmann::json::array();
    for (size_t l = 0; l < s.m_w.size(); ++l) {
        j["m_w"].push_back(matrix_to_json(s.m_w[l]));
        j["v_w"].push_back(matrix_to_json(s.v_w[l]));
        j["m_b"].push_back(vector_to_json(s.m_b[l]));
        j["v_b"].push_back(vector_to_json(s.v_b[l]));
    }
    return j;
}

AdamState adam_from_json(const nlohmann::json& j, const MlpParams& p) {
    AdamState s;
    s.step = j.at("step").get<long>();
    s.lr = j.at("lr").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    for (const auto& m : j.at("m_w")) s.m_w.push_back(matrix_from_json(m));
    for (const auto& v : j.at("v_w")) s.v_w.push_back(matrix_from_json(v));
    for (const auto& m : j.at("m_b")) s.m_b.push_back(vector_from_json(m));
    for (const auto& v : j.at("v_b")) s.v_b.push_back(vector_from_json(v));
    if (s.m_w.size() != p.weights.size())
        throw std::runtime_error("adam_from_json: shape mismatch");
    return s;
}

nlohmann::json ensemble_to_json(const Ensemble& e) {
    nlohmann::json j;
    j["members"] = nlohmann::json::array();
    for (const auto& m : e.members) j["members"].push_back(mlp_to_json(m));
    return j;
}

Ensemble ensemble_from_json(const nlohmann::json& j) {
    Ensemble e;
    for (const auto& m : j.at("members")) e.members.push_back(mlp_from_json(m));
    e.validate();
    return e;
}

void atomic_write(const std::string& path, const std::string& contents) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for write");
        out << contents;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + tmp + " -> " + path);
}

}  // namespace cmbpo
