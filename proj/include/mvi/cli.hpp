// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "experiment.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <ostream>

namespace mvi {

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Parses a JSON document from disk, folding parser diagnostics into the
/// library's validation error family.
inline nlohmann::ordered_json parse_json_file(const std::string& path) {
    try {
        return nlohmann::ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline Mdp load_instance(const std::string& path) {
    Mdp m = load(read_file(path));
    validate(m);
    return m;
}

inline void emit(const std::string& bytes, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << bytes;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error("cannot write " + path);
    file << bytes;
    if (!file.flush()) throw Error("short write to " + path);
}

} // namespace detail

/**
Entry point of the `mvi` command-line tool.

  mvi validate <mdp.json>
      Load and validate an instance document.
  mvi analyze <mdp.json> [--policy <pi.json>]
      With a policy: its chain analysis as JSON. Without: the enumerated
      ground truth plus the complexity report as JSON.
  mvi solve <mdp.json> --alg {vi|alg1|alg2|alg3|baseline} --n <int>
            [--gamma <f64>] [--extra-k <f64>] [--out report.json]
      Run one solver and emit its report as JSON. --gamma selects the
      discounted operator for vi, is required by alg2, and switches alg3
      from the budget-coupled multichain solve (where --extra-k adds budget)
      to a fixed-discount run. alg1 interprets --n as steps per phase.
  mvi certify <mdp.json> [--n-grid 1,2,5,10,50,200]
      Run the theorem suite across the budget grid and print the check
      table; exit 1 if any check fails.
  mvi gen {mkt|four-state|random} [params...] [--seed <u64>] [--out <mdp.json>]
      Generate a named instance (stdout when --out is omitted).
  mvi bench --config <cfg.json>
      Run a benchmark campaign and list the written artifacts.

Exit codes: 0 success (including help), 1 validation or bound failure,
2 usage error, 3 numerical failure (singular chain system, suspected
nonconvergence, degenerate gap, no oracle reference).

\param args command-line arguments, excluding the program name
\param out  stream for reports, tables, and generated documents
\param err  stream for diagnostics
*/
inline int cli_main(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Planning toolkit for average-reward multichain MDPs", "mvi"};
    app.require_subcommand(1);

    std::string mdp_path, policy_path, alg, out_path, config_path;
    long n = 0;
    double gamma = 0.0, extra_k = 0.0, eps = 0.0, leak_prob = 0.2;
    bool gamma_given = false, extra_k_given = false;
    long k = 2, t_escape = 5, components = 2, states_per = 3, actions_per = 2;
    std::uint64_t seed = 0;
    std::vector<long> n_grid{1, 2, 5, 10, 50, 200};

    CLI::App* validate_cmd = app.add_subcommand("validate", "Check an instance document");
    validate_cmd->add_option("mdp", mdp_path, "instance document")->required();

    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "Chain analysis or ground truth and complexity");
    analyze_cmd->add_option("mdp", mdp_path, "instance document")->required();
    analyze_cmd->add_option("--policy", policy_path, "policy document to analyze under");

    CLI::App* solve_cmd = app.add_subcommand("solve", "Run one solver");
    solve_cmd->add_option("mdp", mdp_path, "instance document")->required();
    solve_cmd->add_option("--alg", alg, "algorithm")
        ->required()
        ->check(CLI::IsMember({"vi", "alg1", "alg2", "alg3", "baseline"}));
    solve_cmd->add_option("--n", n, "iteration budget")->required();
    solve_cmd->add_option("--gamma", gamma, "discount factor");
    solve_cmd->add_option("--extra-k", extra_k, "extra budget multiple (alg3)");
    solve_cmd->add_option("--out", out_path, "report file (stdout if omitted)");

    CLI::App* certify_cmd = app.add_subcommand("certify", "Run the theorem suite");
    certify_cmd->add_option("mdp", mdp_path, "instance document")->required();
    certify_cmd->add_option("--n-grid", n_grid, "budgets, comma separated")
        ->delimiter(',');

    CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a named instance");
    gen_cmd->require_subcommand(1);
    CLI::App* gen_mkt_cmd = gen_cmd->add_subcommand("mkt", "cycle-escape family M(k,T,eps)");
    gen_mkt_cmd->add_option("--k", k, "cycle length");
    gen_mkt_cmd->add_option("--T", t_escape, "expected escape time");
    gen_mkt_cmd->add_option("--eps", eps, "gain penalty")->default_val(0.1);
    gen_mkt_cmd->add_option("--seed", seed, "reward draw seed");
    gen_mkt_cmd->add_option("--out", out_path, "output file (stdout if omitted)");
    CLI::App* gen_four_cmd = gen_cmd->add_subcommand("four-state", "four-state instance");
    gen_four_cmd->add_option("--eps", eps, "gain gap")->default_val(0.25);
    gen_four_cmd->add_option("--out", out_path, "output file (stdout if omitted)");
    CLI::App* gen_random_cmd =
        gen_cmd->add_subcommand("random", "random multichain instance");
    gen_random_cmd->add_option("--components", components, "closed components");
    gen_random_cmd->add_option("--states-per", states_per, "states per component");
    gen_random_cmd->add_option("--actions-per", actions_per, "actions per state");
    gen_random_cmd->add_option("--leak-prob", leak_prob, "transient leak probability");
    gen_random_cmd->add_option("--seed", seed, "structure and reward seed");
    gen_random_cmd->add_option("--out", out_path, "output file (stdout if omitted)");

    CLI::App* bench_cmd = app.add_subcommand("bench", "Run a benchmark campaign");
    bench_cmd->add_option("--config", config_path, "campaign configuration")->required();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    gamma_given = solve_cmd->count("--gamma") > 0;
    extra_k_given = solve_cmd->count("--extra-k") > 0;

    try {
        if (*validate_cmd) {
            const Mdp m = detail::load_instance(mdp_path);
            out << "valid: " << m.n_states << " states\n";
            return 0;
        }

        if (*analyze_cmd) {
            const Mdp m = detail::load_instance(mdp_path);
            if (!policy_path.empty()) {
                const Policy pi = policy_from_json(detail::parse_json_file(policy_path), m);
                out << json_of(analyze(m, pi)).dump(2) << "\n";
            } else {
                const GroundTruth gt = compute_ground_truth(m);
                nlohmann::ordered_json doc;
                doc["ground_truth"] = json_of(gt);
                doc["complexity"] = json_of(complexity_report(m, gt.rho_star));
                out << doc.dump(2) << "\n";
            }
            return 0;
        }

        if (*solve_cmd) {
            if (alg == "alg2" && !gamma_given) {
                err << "usage: alg2 iterates a discounted operator; pass --gamma\n";
                return 2;
            }
            if (gamma_given && (alg == "alg1" || alg == "baseline")) {
                err << "usage: --gamma does not apply to " << alg << "\n";
                return 2;
            }
            if (extra_k_given && !(alg == "alg3" && !gamma_given)) {
                err << "usage: --extra-k only applies to alg3 without --gamma\n";
                return 2;
            }
            const Mdp m = detail::load_instance(mdp_path);
            const ValueVec zeros(static_cast<std::size_t>(m.n_states), 0.0);
            SolveReport rep;
            if (alg == "vi")
                rep = picard(optimality_operator(m, gamma_given ? gamma : 1.0), zeros, n);
            else if (alg == "alg1")
                rep = approx_shifted_halpern(m, zeros, n);
            else if (alg == "alg2")
                rep = halpern_then_picard(optimality_operator(m, gamma), zeros, n);
            else if (alg == "alg3")
                rep = gamma_given ? warm_start_htp(m, gamma, n)
                                  : solve_multichain(m, n, extra_k);
            else
                rep = dmdp_baseline(m, n);
            detail::emit(json_of(rep).dump(2) + "\n", out_path, out);
            return 0;
        }

        if (*certify_cmd) {
            const Mdp m = detail::load_instance(mdp_path);
            CertifyConfig cfg;
            cfg.n_grid = n_grid;
            const std::vector<BoundCheck> checks = theorem_suite(m, cfg);
            format_check_table(checks, out);
            return all_pass(checks) ? 0 : 1;
        }

        if (*gen_cmd) {
            Mdp m;
            if (*gen_mkt_cmd)
                m = gen_mkt(k, t_escape, eps, seed);
            else if (*gen_four_cmd)
                m = gen_four_state(eps);
            else
                m = gen_random_multichain(components, states_per, actions_per, leak_prob,
                                          seed);
            detail::emit(save(m), out_path, out);
            return 0;
        }

        const ExperimentConfig cfg = config_from_json(detail::parse_json_file(config_path));
        const ExperimentResult result = run_experiment(cfg);
        for (const auto& run : result.runs) {
            out << run.algorithm << " seed " << run.seed << ":";
            for (const auto& path : {run.csv, run.svg, run.json})
                if (!path.empty()) out << " " << path.string();
            out << "\n";
        }
        out << "index: " << result.index.string() << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        const bool numerical = dynamic_cast<const SingularSystem*>(&e) != nullptr ||
                               dynamic_cast<const NonconvergenceSuspected*>(&e) != nullptr ||
                               dynamic_cast<const DegenerateDelta*>(&e) != nullptr ||
                               dynamic_cast<const NoReferenceFound*>(&e) != nullptr;
        return numerical ? 3 : 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace mvi
