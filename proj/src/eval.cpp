#include "cmbpo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmbpo {

std::vector<double> evaluate_policy(const SacAgent& agent, const EnvSpec& spec,
                                    int episodes, Rng& rng) {
    std::vector<double> returns;
    returns.reserve(episodes);
    for (int e = 0; e < episodes; ++e) {
        Rng ep_rng = rng.split(static_cast<std::uint64_t>(e));
        Rng unused;  // deterministic actions draw nothing
        double total = 0.0;
        EnvState s = env_reset(spec, ep_rng);
        for (int t = 0; t < spec.horizon; ++t) {
            double a = select_action(agent, s.x, s.z, ActionMode::Deterministic,
                                     unused);
            StepResult step = env_step(spec, s, a, ep_rng);
            total += step.reward;
            s = step.next;
        }
        returns.push_back(total);
    }
    return returns;
}

Summary summarize(const std::vector<double>& returns) {
    if (returns.size() < 2)
        throw EvalError("summarize: need at least 2 returns");
    double n = static_cast<double>(returns.size());
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= n;
    double ss = 0.0;
    for (double r : returns) ss += (r - mean) * (r - mean);
    double sd = std::sqrt(ss / (n - 1.0));
    Summary s;
    s.mean = mean;
    s.se = sd / std::sqrt(n);
    s.lo95 = mean - 1.96 * s.se;
    s.hi95 = mean + 1.96 * s.se;
    return s;
}

EvalCell make_cell(const std::string& variant, Shift shift,
                   std::vector<double> returns,
                   std::vector<std::uint64_t> seeds) {
    EvalCell c;
    c.variant = variant;
    c.shift = shift;
    std::sort(returns.begin(), returns.end());
    c.returns = std::move(returns);
    c.summary = summarize(c.returns);
    c.episodes = static_cast<int>(c.returns.size());
    c.seeds = std::move(seeds);
    return c;
}

double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
    auto stats = [](const std::vector<double>& v) {
        double n = static_cast<double>(v.size());
        double m = 0.0;
        for (double x : v) m += x;
        m /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair<double, double>{m, ss / (n - 1.0)};
    };
    auto [ma, va] = stats(a);
    auto [mb, vb] = stats(b);
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double se2 = va / na + vb / nb;
    if (se2 <= 0.0) return ma == mb ? 1.0 : 0.0;
    double t = std::abs(ma - mb) / std::sqrt(se2);
    // Normal approximation to the Welch t distribution; sample sizes
    // here are >= 100 so the df correction is negligible.
    return std::erfc(t / std::sqrt(2.0));
}

const EvalCell& RobustnessReport::cell(const std::string& variant,
                                       Shift shift) const {
    for (const auto& c : cells)
        if (c.variant == variant && c.shift == shift) return c;
    throw EvalError("missing cell: " + variant + " / " + shift_name(shift));
}

RobustnessReport compare_shift_robustness(const std::vector<EvalCell>& cells) {
    RobustnessReport rep;
    rep.cells = cells;
    const std::vector<std::string> variants = {"sac", "mbpo", "cmbpo"};
    const std::vector<Shift> shifts = {Shift::Id, Shift::NearOod, Shift::FarOod};
    for (const auto& v : variants)
        for (Shift s : shifts)
            rep.cell(v, s);  // throws if missing

    for (const auto& v : variants) {
        const EvalCell& id_cell = rep.cell(v, Shift::Id);
        for (Shift s : {Shift::NearOod, Shift::FarOod}) {
            const EvalCell& c = rep.cell(v, s);
            VariantVerdict verdict;
            verdict.variant = v;
            verdict.shift = s;
            verdict.drop = id_cell.summary.mean - c.summary.mean;
            verdict.intervals_overlap =
                id_cell.summary.lo95 <= c.summary.hi95 &&
                c.summary.lo95 <= id_cell.summary.hi95;
            verdict.welch_p = welch_p_value(id_cell.returns, c.returns);
            rep.verdicts.push_back(verdict);
        }
    }
    return rep;
}

nlohmann::json RobustnessReport::to_json() const {
    nlohmann::json j;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : cells)
        j["cells"].push_back({{"variant", c.variant},
                              {"shift", shift_name(c.shift)},
                              {"mean", c.summary.mean},
                              {"se", c.summary.se},
                              {"lo95", c.summary.lo95},
                              {"hi95", c.summary.hi95},
                              {"B", c.episodes}});
    j["verdicts"] = nlohmann::json::array();
    for (const auto& v : verdicts)
        j["verdicts"].push_back({{"variant", v.variant},
                                 {"shift", shift_name(v.shift)},
                                 {"drop", v.drop},
                                 {"equivalent", v.intervals_overlap},
                                 {"welch_p", v.welch_p}});
    return j;
}

std::string RobustnessReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "variant,shift,mean,se,lo95,hi95,B\n";
    for (const auto& c : cells)
        out << c.variant << ',' << shift_name(c.shift) << ',' << c.summary.mean
            << ',' << c.summary.se << ',' << c.summary.lo95 << ','
            << c.summary.hi95 << ',' << c.episodes << '\n';
    return out.str();
}

std::string RobustnessReport::to_table() const {
    std::ostringstream out;
    out << "variant   shift  mean      95% interval\n";
    for (const auto& c : cells) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-9s %-5s %8.3f  [%8.3f, %8.3f]\n",
                      c.variant.c_str(), shift_name(c.shift).c_str(),
                      c.summary.mean, c.summary.lo95, c.summary.hi95);
        out << buf;
    }
    for (const auto& v : verdicts) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%-9s %-5s drop %8.3f  %s (welch p = %.4f)\n",
                      v.variant.c_str(), shift_name(v.shift).c_str(), v.drop,
                      v.intervals_overlap ? "equivalent" : "non-equivalent",
                      v.welch_p);
        out << buf;
    }
    return out.str();
}

}  // namespace cmbpo
