#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "valtrack/analysis.hpp"
#include "valtrack/config.hpp"
#include "valtrack/engine.hpp"
#include "valtrack/experiments.hpp"
#include "valtrack/metrics.hpp"
#include "valtrack/rng.hpp"

// CSV and JSON emitters. Doubles are written with %.17g so that files are
// byte-identical across reruns and exact on reload.

namespace valtrack::output {

inline std::string num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string ternary_csv(const TernaryGrid& g)
{
    std::string s = "val_frac,mo_frac,rand_frac,mean_drop,crash_freq,boom_freq\n";
    for (const auto& p : g.points)
        s += num(p.val_frac) + "," + num(p.mo_frac) + "," + num(p.rand_frac) + "," + num(p.mean_drop) + "," +
             num(p.crash_freq) + "," + num(p.boom_freq) + "\n";
    return s;
}

inline std::string grid_csv(const CommitmentGrid& g)
{
    std::string s = "k_buy,k_sell,theta_analytic,theta_sim,settlement\n";
    for (const auto& c : g.cells)
        s += num(c.k_buy) + "," + num(c.k_sell) + "," + num(c.theta_analytic) + "," + num(c.theta_sim) + "," +
             settlement_name(c.settlement) + "\n";
    return s;
}

// One row per recorded time (the initial state has empty step columns),
// then one wealth column per trader, named after its kind and index.
inline std::string series_csv(const RunResult& r)
{
    std::string s = "time,price,momentum,q_p,q_s,executed,cap_hit";
    const auto& traders = r.final_state.traders;
    for (std::size_t i = 0; i < traders.size(); ++i)
        s += ",wealth_" + kind_name(traders[i].kind) + "_" + std::to_string(i);
    s += "\n";
    for (std::size_t t = 0; t < r.prices.size(); ++t) {
        s += std::to_string(t) + "," + num(r.prices[t]) + "," + num(r.momenta[t]);
        if (t == 0) {
            s += ",,,,";
        } else {
            const auto& rec = r.records[t - 1];
            s += "," + num(rec.q_p) + "," + num(rec.q_s) + "," + num(rec.executed) + "," + (rec.cap_hit ? "1" : "0");
        }
        for (const auto& w : r.wealth)
            s += "," + num(w[t]);
        s += "\n";
    }
    return s;
}

struct FixedPointRow {
    double kV_buy = 0.0;
    double kM_sell = 0.0;
    double alpha_minus = 0.0;
    bool exists = false;
    double theta = 1.0;
};

inline std::string fixed_points_csv(const std::vector<FixedPointRow>& rows)
{
    std::string s = "kV_buy,kM_sell,alpha_minus,exists,theta\n";
    for (const auto& r : rows)
        s += num(r.kV_buy) + "," + num(r.kM_sell) + "," + num(r.alpha_minus) + "," + (r.exists ? "1" : "0") + "," +
             num(r.theta) + "\n";
    return s;
}

inline std::string histogram_csv(const Histogram& h)
{
    std::string s = "bin_center_sd,relative_frequency\n";
    for (std::size_t i = 0; i < h.centers.size(); ++i)
        s += num(h.centers[i]) + "," + num(h.frequency[i]) + "\n";
    return s;
}

inline nlohmann::json estimator_json(const EstimatorReport& r)
{
    return {
        {"n", r.n},
        {"reps", r.reps},
        {"tau_true", r.tau_true},
        {"tau_hat_mean", r.tau_hat_mean},
        {"bias", r.bias},
        {"bias_se", r.bias_se},
        {"empirical_std", r.empirical_std},
        {"predicted_std", r.predicted_std},
        {"skewness", r.skewness},
        {"u_hat_mean", r.u_hat_mean},
        {"u_hat_mean_se", r.u_hat_mean_se},
        {"u_hat_variance", r.u_hat_variance},
        {"u_hat_variance_expected", r.u_hat_variance_expected},
        {"mean_moment_ok", r.mean_moment_ok},
        {"variance_moment_ok", r.variance_moment_ok},
    };
}

inline nlohmann::json fixed_point_json(const analysis::FixedPointReport& rep)
{
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& r : rep.roots)
        roots.push_back({{"value", r.value}, {"range", analysis::range_name(r.range)}, {"residual", r.residual}});
    nlohmann::json j = {
        {"roots", roots},
        {"trivial", rep.trivial},
        {"exists", rep.exists},
        {"outer_window", rep.outer_window},
        {"window_lo", rep.window_lo},
        {"window_hi", rep.window_hi},
        {"x_min", rep.x_min},
        {"newton_iterations", rep.newton_iterations},
    };
    // JSON has no infinities.
    j["extremal"] = std::isfinite(rep.extremal) ? nlohmann::json(rep.extremal) : nlohmann::json(nullptr);
    return j;
}

// Everything needed to regenerate an output file.
inline nlohmann::json sidecar(const ExperimentConfig& cfg, const std::string& command, const std::string& file,
                              const nlohmann::json& extra = nlohmann::json::object())
{
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [k, v] : config_entries(cfg))
        config[k] = v;
    return {
        {"file", file},
        {"command", command},
        {"code_version", kCodeVersion},
        {"master_seed", cfg.seed},
        {"rng", {{"algorithm", kRngAlgorithm}, {"version", kRngVersion}}},
        {"seed_scheme", "task seed = mix_seed(master, task index); init stream mix_seed(task, 0), run stream mix_seed(task, 1)"},
        {"config", config},
        {"config_text", serialize_config(cfg)},
        {"extra", extra},
    };
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

// Writes `text` to `path` and the sidecar to `path` + ".json".
inline void write_with_sidecar(const std::filesystem::path& path, const std::string& text, const ExperimentConfig& cfg,
                               const std::string& command, const nlohmann::json& extra = nlohmann::json::object())
{
    write_text(path, text);
    write_text(path.string() + ".json", sidecar(cfg, command, path.filename().string(), extra).dump(2) + "\n");
}

} // namespace valtrack::output
