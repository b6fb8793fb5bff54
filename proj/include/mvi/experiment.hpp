// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "certify.hpp"
#include "serialize.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <future>

namespace mvi {

// *******************************************************
// Experiment configuration
// *******************************************************

/// Which instance a benchmark run solves. `kind` selects the generator and
/// decides which of the remaining fields apply.
struct InstanceSpec {
    /// "mkt", "four-state", "random", or "file".
    std::string kind = "mkt";
    /// Cycle length (mkt).
    long k = 2;
    /// Expected escape time of a bad action (mkt).
    long t_escape = 5;
    /// Gain gap scale (mkt and four-state).
    double eps = 0.1;
    /// Block count, block size, and actions per state (random).
    long components = 2;
    long states_per = 3;
    long actions_per = 2;
    /// Transition mass a transient action leaks into its target (random).
    double leak_prob = 0.2;
    /// Instance document to load (file).
    std::string path;
};

/// One benchmark campaign: every algorithm runs on the instance drawn for
/// each seed, all with the same total budget of operator applications.
struct ExperimentConfig {
    InstanceSpec instance;
    /// Subset of {"vi", "alg1", "alg2", "alg3", "baseline"}.
    std::vector<std::string> algorithms;
    /// Total operator applications per run; every trace has n + 1 rows.
    long n = 0;
    /// Instance-generator seeds; one full set of runs per seed.
    std::vector<std::uint64_t> seeds{0};
    /// Output selection; at least one must be on.
    bool csv = true;
    bool svg = false;
    bool json = false;
    /// Discount override for the discounted algorithms; the default is the
    /// budget-matched 1 - 1/n.
    std::optional<double> discount;
    /// Directory all artifacts are written under (created if missing).
    std::string out_dir = "mvi-experiment";
};

namespace detail {

inline const std::vector<std::string>& known_algorithms() {
    static const std::vector<std::string> names{"vi", "alg1", "alg2", "alg3", "baseline"};
    return names;
}

} // namespace detail

/**
Checks the invariants the runner assumes: a positive budget, a known and
nonempty algorithm list, at least one seed, at least one output format, a
known instance kind, and a discount override inside (0,1) when present.

\throws Error describing the first violation
*/
inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.n < 1) throw Error("experiment budget n must be >= 1");
    if (cfg.algorithms.empty()) throw Error("experiment needs at least one algorithm");
    for (const auto& a : cfg.algorithms) {
        const auto& known = detail::known_algorithms();
        if (std::find(known.begin(), known.end(), a) == known.end())
            throw Error("unknown algorithm \"" + a + "\"");
    }
    if (cfg.seeds.empty()) throw Error("experiment needs at least one seed");
    if (!cfg.csv && !cfg.svg && !cfg.json)
        throw Error("experiment needs at least one output format");
    const std::string& k = cfg.instance.kind;
    if (k != "mkt" && k != "four-state" && k != "random" && k != "file")
        throw Error("unknown instance kind \"" + k + "\"");
    if (cfg.discount && (!(*cfg.discount > 0.0) || *cfg.discount >= 1.0))
        throw GammaOutOfRange(*cfg.discount);
}

/// Materializes the configured instance for one seed. The seed feeds the
/// reward and structure draws of the seeded generators and is ignored by
/// the deterministic kinds.
inline Mdp build_instance(const InstanceSpec& spec, std::uint64_t seed) {
    if (spec.kind == "mkt") return gen_mkt(spec.k, spec.t_escape, spec.eps, seed);
    if (spec.kind == "four-state") return gen_four_state(spec.eps);
    if (spec.kind == "random")
        return gen_random_multichain(spec.components, spec.states_per, spec.actions_per,
                                     spec.leak_prob, seed);
    std::ifstream in(spec.path, std::ios::binary);
    if (!in) throw Error("cannot open instance file " + spec.path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Mdp m = load(bytes);
    validate(m);
    return m;
}

/// Parses the benchmark configuration document (see save for the format the
/// CLI writes). Unknown keys warn on standard error.
inline ExperimentConfig config_from_json(const nlohmann::ordered_json& doc) {
    if (!doc.is_object()) throw ParseError("config: expected an object");
    detail::warn_unknown_keys(
        doc, {"instance", "algorithms", "n", "seeds", "outputs", "discount", "out_dir"},
        "config");
    ExperimentConfig cfg;
    const auto inst = detail::require<nlohmann::ordered_json>(doc, "instance", "config");
    if (!inst.is_object()) throw ParseError("config.instance: expected an object");
    detail::warn_unknown_keys(inst,
                              {"kind", "k", "T", "eps", "components", "states_per",
                               "actions_per", "leak_prob", "path"},
                              "config.instance");
    cfg.instance.kind = detail::require<std::string>(inst, "kind", "config.instance");
    const std::string where = "config.instance";
    if (cfg.instance.kind == "mkt") {
        cfg.instance.k = detail::require<long>(inst, "k", where);
        cfg.instance.t_escape = detail::require<long>(inst, "T", where);
        cfg.instance.eps = detail::require<double>(inst, "eps", where);
    } else if (cfg.instance.kind == "four-state") {
        cfg.instance.eps = detail::require<double>(inst, "eps", where);
    } else if (cfg.instance.kind == "random") {
        cfg.instance.components = detail::require<long>(inst, "components", where);
        cfg.instance.states_per = detail::require<long>(inst, "states_per", where);
        cfg.instance.actions_per = detail::require<long>(inst, "actions_per", where);
        cfg.instance.leak_prob = detail::require<double>(inst, "leak_prob", where);
    } else if (cfg.instance.kind == "file") {
        cfg.instance.path = detail::require<std::string>(inst, "path", where);
    }
    cfg.algorithms = detail::require<std::vector<std::string>>(doc, "algorithms", "config");
    cfg.n = detail::require<long>(doc, "n", "config");
    if (doc.contains("seeds"))
        cfg.seeds = detail::require<std::vector<std::uint64_t>>(doc, "seeds", "config");
    if (doc.contains("outputs")) {
        const auto outs = detail::require<nlohmann::ordered_json>(doc, "outputs", "config");
        if (!outs.is_object()) throw ParseError("config.outputs: expected an object");
        detail::warn_unknown_keys(outs, {"csv", "svg", "json"}, "config.outputs");
        cfg.csv = outs.value("csv", false);
        cfg.svg = outs.value("svg", false);
        cfg.json = outs.value("json", false);
    }
    if (doc.contains("discount"))
        cfg.discount = detail::require<double>(doc, "discount", "config");
    if (doc.contains("out_dir"))
        cfg.out_dir = detail::require<std::string>(doc, "out_dir", "config");
    return cfg;
}

inline nlohmann::ordered_json json_of(const ExperimentConfig& cfg) {
    nlohmann::ordered_json inst;
    inst["kind"] = cfg.instance.kind;
    if (cfg.instance.kind == "mkt") {
        inst["k"] = cfg.instance.k;
        inst["T"] = cfg.instance.t_escape;
        inst["eps"] = cfg.instance.eps;
    } else if (cfg.instance.kind == "four-state") {
        inst["eps"] = cfg.instance.eps;
    } else if (cfg.instance.kind == "random") {
        inst["components"] = cfg.instance.components;
        inst["states_per"] = cfg.instance.states_per;
        inst["actions_per"] = cfg.instance.actions_per;
        inst["leak_prob"] = cfg.instance.leak_prob;
    } else if (cfg.instance.kind == "file") {
        inst["path"] = cfg.instance.path;
    }
    nlohmann::ordered_json doc;
    doc["instance"] = std::move(inst);
    doc["algorithms"] = cfg.algorithms;
    doc["n"] = cfg.n;
    doc["seeds"] = cfg.seeds;
    doc["outputs"] = {{"csv", cfg.csv}, {"svg", cfg.svg}, {"json", cfg.json}};
    if (cfg.discount) doc["discount"] = *cfg.discount;
    doc["out_dir"] = cfg.out_dir;
    return doc;
}

// *******************************************************
// Trace metrics and writers
// *******************************************************

namespace detail {

/// Shortest decimal form that parses back to exactly x.
inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Columns of one convergence-trace row. Policy metrics are absent for
/// algorithms without a policy extraction.
struct TraceRow {
    long iter = 0;
    double fpe = 0.0;
    std::optional<double> subopt;
    std::optional<double> gain_pres;
};

/// Greedy discount the algorithm's guarantee extracts policies at, or
/// nothing for the purely operator-level scheme. The baseline couples its
/// discount to the budget rather than to the campaign-level choice.
inline std::optional<double> extraction_discount(const std::string& algorithm, double gamma,
                                                 long n) {
    if (algorithm == "vi" || algorithm == "alg1") return 1.0;
    if (algorithm == "alg3") return gamma;
    if (algorithm == "baseline")
        return 1.0 - 2.0 * std::log(static_cast<double>(n)) / static_cast<double>(n);
    return std::nullopt;
}

inline std::vector<TraceRow> trace_metrics(const Mdp& m, const IterTrace& trace,
                                           const ValueVec& rho_star,
                                           std::optional<double> greedy_gamma) {
    std::vector<TraceRow> rows;
    rows.reserve(trace.iterates.size());
    for (std::size_t t = 0; t < trace.iterates.size(); ++t) {
        TraceRow row;
        row.iter = static_cast<long>(t);
        row.fpe = residual_average(m, trace.iterates[t], rho_star);
        if (greedy_gamma) {
            const Policy pi = greedy(m, trace.iterates[t], *greedy_gamma);
            row.subopt = sup_dist(analyze(m, pi).gain, rho_star);
            row.gain_pres = gain_drop(m, pi, rho_star);
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_csv(const std::vector<TraceRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "iter,fpe,subopt,gain_pres\n";
    for (const auto& row : rows) {
        out << row.iter << ',' << format_double(row.fpe) << ',';
        if (row.subopt) out << format_double(*row.subopt);
        out << ',';
        if (row.gain_pres) out << format_double(*row.gain_pres);
        out << '\n';
    }
    if (!out.flush()) throw Error("short write to " + path.string());
}

/// Maps a metric value onto the chart's log-scaled y axis; values at or
/// below the positive floor (including exact zeros) sit on the floor line.
struct LogAxis {
    double lo = 1.0, hi = 10.0;
    double y_of(double v, double top, double bottom) const {
        const double clamped = std::max(v, lo);
        const double f = (std::log10(clamped) - std::log10(lo)) /
                         std::max(std::log10(hi) - std::log10(lo), 1e-12);
        return bottom - f * (bottom - top);
    }
};

inline void write_svg(const std::vector<TraceRow>& rows, const std::string& title,
                      const std::filesystem::path& path) {
    const double width = 720, height = 440, left = 64, right = 16, top = 32, bottom = 404;
    LogAxis axis;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& row : rows) {
        for (double v : {row.fpe, row.subopt.value_or(0.0)}) {
            if (v > 0.0) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!(hi > 0.0)) {
        lo = 1e-1;
        hi = 1.0;
    }
    axis.lo = lo;
    axis.hi = std::max(hi, lo * 10.0);

    const double x_span = static_cast<double>(std::max<std::size_t>(rows.size() - 1, 1));
    const auto x_of = [&](long iter) {
        return left + (width - left - right) * static_cast<double>(iter) / x_span;
    };
    const auto polyline = [&](auto value_of) {
        std::string pts;
        for (const auto& row : rows) {
            const std::optional<double> v = value_of(row);
            if (!v) continue;
            pts += format_double(x_of(row.iter)) + "," +
                   format_double(axis.y_of(*v, top, bottom)) + " ";
        }
        return pts;
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
        << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
        << title << "</text>\n"
        << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << width - right
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << bottom << "\" stroke=\"black\"/>\n"
        << "<text x=\"4\" y=\"" << top + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(axis.hi) << "</text>\n"
        << "<text x=\"4\" y=\"" << bottom << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(axis.lo) << "</text>\n"
        << "<text x=\"" << width - right - 24 << "\" y=\"" << bottom + 16
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << rows.size() - 1 << "</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\""
        << polyline([](const TraceRow& r) { return std::optional<double>(r.fpe); }) << "\"/>\n";
    bool any_subopt = false;
    for (const auto& row : rows) any_subopt = any_subopt || row.subopt.has_value();
    if (any_subopt)
        out << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\""
            << polyline([](const TraceRow& r) { return r.subopt; }) << "\"/>\n";
    out << "<text x=\"" << left + 8 << "\" y=\"" << top + 16
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">fixed-point error"
        << "</text>\n";
    if (any_subopt)
        out << "<text x=\"" << left + 8 << "\" y=\"" << top + 30
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">suboptimality"
            << "</text>\n";
    out << "</svg>\n";
    if (!out.flush()) throw Error("short write to " + path.string());
}

} // namespace detail

// *******************************************************
// Runner
// *******************************************************

/// Artifact locations of one (algorithm, seed) run; unselected formats stay
/// empty.
struct RunArtifacts {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::filesystem::path csv;
    std::filesystem::path svg;
    std::filesystem::path json;
};

/// Everything run_experiment wrote: one artifact record per (algorithm,
/// seed) in configuration order, plus the coordinator's index document.
struct ExperimentResult {
    std::filesystem::path index;
    std::vector<RunArtifacts> runs;
};

namespace detail {

inline SolveReport run_algorithm(const Mdp& m, const std::string& algorithm, long n,
                                 double gamma) {
    const ValueVec zeros(static_cast<std::size_t>(m.n_states), 0.0);
    if (algorithm == "vi") return picard(optimality_operator(m), zeros, n, TraceRetention::full);
    if (algorithm == "alg1")
        return approx_shifted_halpern(m, zeros, (n + 1) / 2, TraceRetention::full, n / 2);
    if (algorithm == "alg2")
        return halpern_then_picard(optimality_operator(m, gamma), zeros, n,
                                   TraceRetention::full);
    if (algorithm == "alg3") return warm_start_htp(m, gamma, n, TraceRetention::full);
    return dmdp_baseline(m, n, nullptr, std::nullopt, TraceRetention::full);
}

inline RunArtifacts run_one(const ExperimentConfig& cfg, const std::string& algorithm,
                            std::uint64_t seed) {
    const Mdp m = build_instance(cfg.instance, seed);
    ValueVec rho_star;
    if (cfg.instance.kind == "mkt")
        rho_star = mkt_rho_star(m);
    else if (cfg.instance.kind == "four-state")
        rho_star = four_state_rho_star(cfg.instance.eps);
    else
        rho_star = compute_ground_truth(m).rho_star;

    const double gamma = cfg.discount ? *cfg.discount
                                      : 1.0 - 1.0 / static_cast<double>(std::max(cfg.n, 2L));
    const SolveReport report = run_algorithm(m, algorithm, cfg.n, gamma);
    const std::vector<detail::TraceRow> rows =
        trace_metrics(m, report.trace, rho_star, extraction_discount(algorithm, gamma, cfg.n));

    RunArtifacts art;
    art.algorithm = algorithm;
    art.seed = seed;
    const std::string stem = algorithm + "-seed" + std::to_string(seed);
    const std::filesystem::path dir(cfg.out_dir);
    if (cfg.csv) {
        art.csv = dir / (stem + ".csv");
        write_csv(rows, art.csv);
    }
    if (cfg.svg) {
        art.svg = dir / (stem + ".svg");
        write_svg(rows, stem + (m.name ? " on " + *m.name : ""), art.svg);
    }
    if (cfg.json) {
        art.json = dir / (stem + ".json");
        std::ofstream out(art.json, std::ios::binary);
        if (!out) throw Error("cannot write " + art.json.string());
        out << json_of(report).dump(2) << "\n";
        if (!out.flush()) throw Error("short write to " + art.json.string());
    }
    return art;
}

} // namespace detail

/**
Runs every configured algorithm on the instance drawn for every seed and
writes the selected artifacts under cfg.out_dir:

  <algorithm>-seed<seed>.csv   rows `iter,fpe,subopt,gain_pres`, one per
                               iterate (n + 1 total); fpe is the
                               average-reward residual sup_norm(T(h_t) - h_t
                               - rho*); subopt and gain_pres come from the
                               algorithm's greedy policy extraction and stay
                               empty for the operator-level scheme (alg2)
  <algorithm>-seed<seed>.svg   log-scale line chart of the same series
  <algorithm>-seed<seed>.json  the full solve report
  index.json                   configuration echo plus per-run file list,
                               written once after all runs finish

rho* comes from the closed forms for the "mkt" and "four-state" kinds and
from enumeration otherwise. Runs fan out in parallel; CSV and SVG contents
are pure functions of the configuration, so repeated runs produce them
bit-identically regardless of scheduling. (The JSON reports embed the
measured wallclock and are exempt.)

\throws Error on validation or IO failure; solver and enumeration errors
        propagate
*/
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<std::pair<std::string, std::uint64_t>> tasks;
    for (std::uint64_t seed : cfg.seeds)
        for (const auto& algorithm : cfg.algorithms) tasks.emplace_back(algorithm, seed);

    std::vector<std::future<RunArtifacts>> futures;
    futures.reserve(tasks.size());
    for (const auto& [algorithm, seed] : tasks)
        futures.push_back(std::async(std::launch::async, detail::run_one, std::cref(cfg),
                                     algorithm, seed));

    ExperimentResult result;
    for (auto& f : futures) result.runs.push_back(f.get());

    nlohmann::ordered_json index;
    index["config"] = json_of(cfg);
    auto& runs = index["runs"] = nlohmann::ordered_json::array();
    for (const auto& art : result.runs) {
        nlohmann::ordered_json entry;
        entry["algorithm"] = art.algorithm;
        entry["seed"] = art.seed;
        if (!art.csv.empty()) entry["csv"] = art.csv.filename().string();
        if (!art.svg.empty()) entry["svg"] = art.svg.filename().string();
        if (!art.json.empty()) entry["json"] = art.json.filename().string();
        runs.push_back(std::move(entry));
    }
    result.index = std::filesystem::path(cfg.out_dir) / "index.json";
    std::ofstream out(result.index, std::ios::binary);
    if (!out) throw Error("cannot write " + result.index.string());
    out << index.dump(2) << "\n";
    if (!out.flush()) throw Error("short write to " + result.index.string());
    return result;
}

} // namespace mvi
