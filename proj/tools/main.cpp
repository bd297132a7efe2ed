#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <unistd.h>

#include "cmbpo/config.hpp"
#include "cmbpo/serialize.hpp"

namespace fs = std::filesystem;
using namespace cmbpo;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string self_path() {
    char buf[4096];
    ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) throw std::runtime_error("cannot resolve own executable path");
    buf[n] = '\0';
    return std::string(buf);
}

void write_provenance(const fs::path& dir, const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = cfg.to_json();
    atomic_write((dir / "resolved_config.json").string(), j.dump(2) + "\n");
}

ShiftSpec shift_spec_for(const ExperimentConfig& cfg, Shift s) {
    switch (s) {
        case Shift::Id: return ShiftSpec::id();
        case Shift::NearOod: return ShiftSpec::near_ood(cfg.near_ood_z);
        case Shift::FarOod: return ShiftSpec::far_ood();
    }
    return ShiftSpec::id();
}

int cmd_discover(const ExperimentConfig& cfg, std::uint64_t seed,
                 bool oracle_ci, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ExperimentConfig resolved = cfg;
    resolved.train.oracle_ci = resolved.train.oracle_ci || oracle_ci;
    write_provenance(out_dir, resolved);

    EnvSpec spec = resolved.env;
    spec.horizon = resolved.train.horizon;
    Rng root(seed);
    Rng env_rng = root.split(1);
    Rng agent_rng = root.split(3);
    auto warmup =
        collect_warmup(spec, resolved.train.warmup_steps, env_rng, agent_rng);

    DiscoveryOptions opts;
    opts.alpha = resolved.train.discovery_alpha;
    opts.family = resolved.train.ci_family;
    opts.min_rows = resolved.discovery_min_rows;
    opts.perm_seed = root.split(4).next_u64();
    if (resolved.train.oracle_ci) opts.oracle_graph = true_graph(spec);
    CausalGraph graph =
        learn_local_cgm(Dataset::from_transitions(warmup), opts);

    atomic_write((out_dir / "graph.json").string(),
                 graph.to_json().dump(2) + "\n");
    atomic_write((out_dir / "graph.dot").string(), graph.to_dot());
    std::cout << "discovered " << graph.edges.size() << " edges -> "
              << (out_dir / "graph.json").string() << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::uint64_t seed,
              const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_provenance(out_dir, cfg);

    TrainResult result = train_agent(cfg.env, cfg.train, seed);
    atomic_write((out_dir / "metrics.csv").string(),
                 metrics_to_csv(result.metrics));
    nlohmann::json ckpt = checkpoint_to_json(result, cfg.train, cfg.env);
    ckpt["seed"] = seed;
    atomic_write((out_dir / "checkpoint.json").string(), ckpt.dump() + "\n");
    if (result.graph.has_value()) {
        atomic_write((out_dir / "graph.json").string(),
                     result.graph->to_json().dump(2) + "\n");
        atomic_write((out_dir / "graph.dot").string(), result.graph->to_dot());
    }
    double last = result.returns.empty() ? 0.0 : result.returns.back();
    std::cout << "trained " << variant_name(cfg.train.variant) << " seed "
              << seed << ": final episode return " << last << "\n";
    return 0;
}

std::vector<double> eval_shift(const ExperimentConfig& cfg,
                               const SacAgent& agent, Shift shift,
                               std::uint64_t seed) {
    EnvSpec base = cfg.env;
    base.horizon = cfg.train.horizon;
    EnvSpec spec = apply_shift(base, shift_spec_for(cfg, shift));
    Rng eval_rng = Rng(seed).split(5 + static_cast<std::uint64_t>(shift));
    return evaluate_policy(agent, spec, cfg.eval_episodes, eval_rng);
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint_path,
             const std::vector<Shift>& shifts, std::uint64_t seed,
             const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ifstream in(checkpoint_path);
    if (!in)
        throw std::runtime_error("cannot open checkpoint: " +
                                 checkpoint_path.string());
    nlohmann::json cj;
    in >> cj;
    Checkpoint ckpt = checkpoint_from_json(cj);

    nlohmann::json out;
    out["variant"] = variant_name(ckpt.variant);
    out["cells"] = nlohmann::json::array();
    std::string csv = "variant,shift,mean,se,lo95,hi95,B\n";
    for (Shift s : shifts) {
        std::vector<double> returns = eval_shift(cfg, ckpt.agent, s, seed);
        std::sort(returns.begin(), returns.end());
        Summary sum = summarize(returns);
        nlohmann::json cell;
        cell["shift"] = shift_name(s);
        cell["returns"] = returns;
        cell["mean"] = sum.mean;
        cell["se"] = sum.se;
        cell["lo95"] = sum.lo95;
        cell["hi95"] = sum.hi95;
        cell["B"] = returns.size();
        out["cells"].push_back(cell);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%zu\n",
                      variant_name(ckpt.variant).c_str(),
                      shift_name(s).c_str(), sum.mean, sum.se, sum.lo95,
                      sum.hi95, returns.size());
        csv += buf;
        std::cout << variant_name(ckpt.variant) << " " << shift_name(s)
                  << ": mean return " << sum.mean << "\n";
    }
    atomic_write((out_dir / "eval.json").string(), out.dump(2) + "\n");
    atomic_write((out_dir / "eval.csv").string(), csv);
    return 0;
}

RobustnessReport aggregate_runs(const ExperimentConfig& cfg,
                                const fs::path& out_dir) {
    const std::vector<std::string> variants = {"sac", "mbpo", "cmbpo"};
    std::vector<EvalCell> cells;
    for (const auto& v : variants) {
        for (Shift s : cfg.eval_shifts) {
            std::vector<double> pooled;
            std::vector<std::uint64_t> seeds;
            for (std::uint64_t seed : cfg.seeds) {
                fs::path run_dir =
                    out_dir / (v + "_seed" + std::to_string(seed));
                std::ifstream in(run_dir / "eval.json");
                if (!in)
                    throw std::runtime_error("missing cell: " + v + "/" +
                                             shift_name(s) + " (no eval.json in " +
                                             run_dir.string() + ")");
                nlohmann::json ej;
                in >> ej;
                bool found = false;
                for (const auto& cell : ej.at("cells")) {
                    if (cell.at("shift").get<std::string>() == shift_name(s)) {
                        for (double r : cell.at("returns"))
                            pooled.push_back(r);
                        found = true;
                    }
                }
                if (!found)
                    throw std::runtime_error("missing cell: " + v + "/" +
                                             shift_name(s));
                seeds.push_back(seed);
            }
            cells.push_back(make_cell(v, s, std::move(pooled), seeds));
        }
    }
    return compare_shift_robustness(cells);
}

int cmd_report(const ExperimentConfig& cfg, const fs::path& out_dir) {
    RobustnessReport report = aggregate_runs(cfg, out_dir);
    atomic_write((out_dir / "report.json").string(),
                 report.to_json().dump(2) + "\n");
    atomic_write((out_dir / "report.csv").string(), report.to_csv());
    atomic_write((out_dir / "report.txt").string(), report.to_table());
    std::cout << report.to_table();
    return 0;
}

int cmd_experiment(const ExperimentConfig& cfg, const fs::path& config_path,
                   const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_provenance(out_dir, cfg);

    int max_jobs = 1;
    if (const char* env_threads = std::getenv("CMBPO_THREADS"))
        max_jobs = std::max(1, std::atoi(env_threads));

    struct Job {
        std::string variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const std::string& v : {"sac", "mbpo", "cmbpo"})
        for (std::uint64_t seed : cfg.seeds) jobs.push_back({v, seed});

    // One child process per (variant, seed) training run.
    std::string self = self_path();
    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            const Job& job = jobs[i];
            fs::path run_dir =
                out_dir / (job.variant + "_seed" + std::to_string(job.seed));
            std::string cmd = "\"" + self + "\" train --config \"" +
                              config_path.string() + "\" --variant " +
                              job.variant + " --seed " +
                              std::to_string(job.seed) + " --out \"" +
                              run_dir.string() + "\"";
            if (std::system(cmd.c_str()) != 0) failures.fetch_add(1);
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < max_jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failures.load() > 0)
        throw std::runtime_error(std::to_string(failures.load()) +
                                 " training job(s) failed");

    // Evaluate every checkpoint on every shift.
    for (const Job& job : jobs) {
        fs::path run_dir =
            out_dir / (job.variant + "_seed" + std::to_string(job.seed));
        std::ifstream in(run_dir / "checkpoint.json");
        if (!in)
            throw std::runtime_error("missing checkpoint for " + job.variant +
                                     " seed " + std::to_string(job.seed));
        nlohmann::json cj;
        in >> cj;
        Checkpoint ckpt = checkpoint_from_json(cj);
        ExperimentConfig run_cfg = cfg;
        run_cfg.train.variant = variant_from_name(job.variant);
        cmd_eval(run_cfg, run_dir / "checkpoint.json", cfg.eval_shifts,
                 job.seed, run_dir);
    }

    return cmd_report(cfg, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal model-based policy optimization experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    std::string variant;
    std::vector<std::string> shift_names;
    std::string checkpoint_path;
    bool oracle_ci = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "rng seed");
    };

    CLI::App* discover = app.add_subcommand(
        "discover", "collect warmup data and learn the causal graph");
    add_common(discover);
    discover->add_flag("--oracle-ci", oracle_ci,
                       "answer CI tests by d-separation on the true graph");

    CLI::App* train =
        app.add_subcommand("train", "train one agent variant for one seed");
    add_common(train);
    train->add_option("--variant", variant, "sac | mbpo | cmbpo");

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a checkpoint under shifts");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")
        ->required();
    eval_cmd->add_option("--shift", shift_names, "id | near | far (repeatable)");

    CLI::App* experiment = app.add_subcommand(
        "experiment", "full 3-variant x multi-seed pipeline");
    add_common(experiment);

    CLI::App* report =
        app.add_subcommand("report", "aggregate existing run outputs");
    add_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    ExperimentConfig cfg;
    try {
        if (!config_path.empty())
            cfg = load_config(config_path);
        else
            cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config-error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (discover->parsed())
            return cmd_discover(cfg, seed, oracle_ci, out_dir);
        if (train->parsed()) {
            if (!variant.empty())
                cfg.train.variant = variant_from_name(variant);
            return cmd_train(cfg, seed, out_dir);
        }
        if (eval_cmd->parsed()) {
            std::vector<Shift> shifts;
            for (const auto& s : shift_names)
                shifts.push_back(shift_from_name(s));
            if (shifts.empty()) shifts = cfg.eval_shifts;
            return cmd_eval(cfg, checkpoint_path, shifts, seed, out_dir);
        }
        if (experiment->parsed()) {
            if (config_path.empty())
                throw ConfigError("experiment requires --config");
            return cmd_experiment(cfg, config_path, out_dir);
        }
        if (report->parsed()) return cmd_report(cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config-error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime-error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
