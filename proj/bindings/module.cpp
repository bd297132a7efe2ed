#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmbpo/config.hpp"
#include "cmbpo/serialize.hpp"

namespace py = pybind11;
using namespace cmbpo;

namespace {

std::vector<Node> nodes_from_names(const std::vector<std::string>& names) {
    std::vector<Node> out;
    for (const auto& n : names) out.push_back(node_from_name(n));
    return out;
}

EnvSpec shifted(const EnvSpec& base, const std::string& shift, double z) {
    if (shift == "id") return base;
    if (shift == "near") return apply_shift(base, ShiftSpec::near_ood(z));
    if (shift == "far") return apply_shift(base, ShiftSpec::far_ood());
    throw EnvError("unknown shift name: " + shift);
}

}  // namespace

PYBIND11_MODULE(_cmbpo, m) {
    m.doc() = "Causal model-based policy optimization core";

    py::register_exception<EnvError>(m, "EnvError");
    py::register_exception<DiscoveryError>(m, "DiscoveryError");
    py::register_exception<ConfigError>(m, "ConfigError");

    py::class_<Transition>(m, "Transition")
        .def(py::init<>())
        .def_readwrite("x", &Transition::x)
        .def_readwrite("z", &Transition::z)
        .def_readwrite("a", &Transition::a)
        .def_readwrite("r", &Transition::r)
        .def_readwrite("x_next", &Transition::x_next)
        .def_readwrite("z_next", &Transition::z_next)
        .def_readwrite("terminal", &Transition::terminal)
        .def_readwrite("from_model", &Transition::from_model)
        .def("__repr__", [](const Transition& t) {
            return "Transition(x=" + std::to_string(t.x) +
                   ", a=" + std::to_string(t.a) + ", r=" + std::to_string(t.r) +
                   ")";
        });

    py::class_<EnvSpec>(m, "EnvSpec")
        .def(py::init<>())
        .def_readwrite("sigma_x", &EnvSpec::sigma_x)
        .def_readwrite("sigma_z", &EnvSpec::sigma_z)
        .def_readwrite("sigma_r", &EnvSpec::sigma_r)
        .def_readwrite("horizon", &EnvSpec::horizon)
        .def_readwrite("kappa", &EnvSpec::kappa)
        .def("to_json", [](const EnvSpec& s) { return s.to_json().dump(); })
        .def_static("from_json", [](const std::string& text) {
            return EnvSpec::from_json(nlohmann::json::parse(text));
        });

    m.def("apply_shift", &shifted, py::arg("spec"), py::arg("shift"),
          py::arg("z") = 0.0,
          "Return a copy of the spec under a shift: id, near, or far");

    m.def(
        "collect_warmup",
        [](const EnvSpec& spec, int steps, std::uint64_t seed) {
            Rng env_rng = Rng(seed).split(1);
            Rng agent_rng = Rng(seed).split(3);
            return collect_warmup(spec, steps, env_rng, agent_rng);
        },
        py::arg("spec"), py::arg("steps"), py::arg("seed"),
        "Random-policy env transitions");

    m.def(
        "discover_graph",
        [](const std::vector<Transition>& rows, double alpha, bool oracle,
           const EnvSpec& spec, int min_rows) {
            DiscoveryOptions opts;
            opts.alpha = alpha;
            opts.min_rows = min_rows;
            if (oracle) opts.oracle_graph = true_graph(spec);
            CausalGraph g =
                learn_local_cgm(Dataset::from_transitions(rows), opts);
            return g.to_json().dump();
        },
        py::arg("transitions"), py::arg("alpha") = 0.01,
        py::arg("oracle") = false, py::arg("spec") = EnvSpec{},
        py::arg("min_rows") = kDefaultMinRows,
        "Learn the local causal graph; returns its JSON text");

    m.def(
        "estimate_cif",
        [](const std::vector<Transition>& rows, const std::string& x,
           const std::string& y, const std::vector<std::string>& parents) {
            return estimate_cif(Dataset::from_transitions(rows),
                                node_from_name(x), node_from_name(y),
                                nodes_from_names(parents));
        },
        py::arg("transitions"), py::arg("x"), py::arg("y"), py::arg("parents"),
        "Causal information flow estimate in nats");

    m.def(
        "partial_correlation",
        [](const std::vector<Transition>& rows, const std::string& x,
           const std::string& y, const std::vector<std::string>& cond) {
            return partial_correlation(Dataset::from_transitions(rows),
                                       node_from_name(x), node_from_name(y),
                                       nodes_from_names(cond));
        },
        py::arg("transitions"), py::arg("x"), py::arg("y"), py::arg("cond"));

    m.def(
        "train",
        [](const std::string& config_json, const std::string& variant,
           std::uint64_t seed) {
            ExperimentConfig cfg = config_json.empty()
                                       ? ExperimentConfig{}
                                       : ExperimentConfig::from_json(
                                             nlohmann::json::parse(config_json));
            if (!variant.empty())
                cfg.train.variant = variant_from_name(variant);
            TrainResult result = train_agent(cfg.env, cfg.train, seed);
            nlohmann::json out;
            out["returns"] = result.returns;
            out["checkpoint"] = checkpoint_to_json(result, cfg.train, cfg.env);
            if (result.graph) out["graph"] = result.graph->to_json();
            return out.dump();
        },
        py::arg("config_json") = "", py::arg("variant") = "",
        py::arg("seed") = 1,
        "Train one agent; returns JSON with per-episode returns, a "
        "checkpoint, and the discovered graph when applicable");

    m.def(
        "evaluate",
        [](const std::string& checkpoint_json, const std::string& shift,
           double z, int episodes, std::uint64_t seed) {
            Checkpoint ckpt =
                checkpoint_from_json(nlohmann::json::parse(checkpoint_json));
            EnvSpec spec = shifted(ckpt.spec, shift, z);
            Rng rng = Rng(seed).split(
                5 + static_cast<std::uint64_t>(shift_from_name(shift)));
            return evaluate_policy(ckpt.agent, spec, episodes, rng);
        },
        py::arg("checkpoint_json"), py::arg("shift") = "id", py::arg("z") = 0.0,
        py::arg("episodes") = 100, py::arg("seed") = 1,
        "Deploy a trained policy under a shift; per-episode returns");

    m.def(
        "summarize",
        [](const std::vector<double>& returns) {
            Summary s = summarize(returns);
            return py::make_tuple(s.mean, s.se, s.lo95, s.hi95);
        },
        py::arg("returns"), "(mean, se, lo95, hi95) with a normal 95% interval");

    m.attr("__version__") = "0.1.0";
}
