// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "generators.hpp"
#include "solvers.hpp"

#include <iomanip>
#include <ostream>

namespace mvi {

/// The policy handed to a reduction check was not eps-greedy for the
/// discounted backup of the supplied value vector at some state.
class NotEpsGreedy : public Error {
  public:
    long state;
    /// How far the policy's backup fell below the greedy backup minus eps.
    double shortfall;
    NotEpsGreedy(long s, double gap)
        : Error("policy is not eps-greedy at state " + std::to_string(s) +
                " (shortfall " + std::to_string(gap) + ")"),
          state(s),
          shortfall(gap) {}
};

namespace detail {

/// sup_s |P_pi rho(s) - rho(s)|, the amount by which one step under pi can
/// drop the optimal gain. Uses the same left-to-right dot products as the
/// oracle so that degenerate rows stay bitwise exact.
inline double gain_drop(const Mdp& m, const Policy& pi, const ValueVec& rho) {
    validate_policy(m, pi);
    double worst = 0.0;
    for (long s = 0; s < m.n_states; ++s) {
        double mixed = 0.0;
        if (pi.kind == Policy::Kind::Deterministic) {
            mixed = rho_backup(m, s, pi.det[static_cast<std::size_t>(s)], rho);
        } else {
            const auto& w = pi.rand[static_cast<std::size_t>(s)];
            for (std::size_t a = 0; a < w.size(); ++a)
                mixed += w[a] * rho_backup(m, s, static_cast<long>(a), rho);
        }
        worst = std::max(worst, std::abs(mixed - rho[static_cast<std::size_t>(s)]));
    }
    return worst;
}

/// The span-based constant min{span(h_both), span(h_ref)(1 + tdrop) + tdrop}
/// shared by the discounted reduction, warm-start, and budget theorems;
/// h_ref is the bias of the reference gain-optimal policy.
inline double reference_span_constant(const Mdp& m, const GroundTruth& gt, double td) {
    const double ref = span(analyze(m, gt.blackwell_policy).bias);
    return std::min(span(gt.h_both), ref + td + ref * td);
}

} // namespace detail

// **** Sensitivity decomposition ****

/**
Both sides of the exact gain-suboptimality identity

  rho^pi - rho* = H_{P_pi}(P_pi rho* - rho*) + P_pi^inf(r_pi + P_pi h - rho* - h),

evaluated independently for a supplied comparison vector h, together with
the inequality it implies,

  sup_norm(rho^pi - rho*)
      <= tdrop^pi * sup_norm(P_pi rho* - rho*) + sup_norm(T^pi(h) - h - rho*).
*/
struct PerformanceDifference {
    /// rho^pi - rho*, from the chain analysis of pi.
    ValueVec gain_error;
    /// H_{P_pi}(P_pi rho* - rho*); zero when pi preserves the optimal gain.
    ValueVec navigation_term;
    /// P_pi^inf(r_pi + P_pi h - rho* - h), the evaluation-error part.
    ValueVec evaluation_term;
    /// sup_norm of gain_error minus the sum of the two terms.
    double identity_residual = 0.0;
    /// The implied inequality as a checked bound.
    BoundCheck corollary;
};

/**
Evaluates the gain-suboptimality decomposition of pi at the comparison
vector h against the supplied ground truth. The left side comes from the
chain analysis of pi, the right side from the deviation and fundamental
matrices, so the reported identity residual measures only floating-point
error (it scales like machine precision times the conditioning of the
fundamental matrix).

\param h any comparison vector with one entry per state
\throws LengthMismatch if h has the wrong length
\throws NonconvergenceSuspected propagated from the gain-dropping time
*/
inline PerformanceDifference performance_difference(const Mdp& m, const Policy& pi,
                                                    const ValueVec& h, const GroundTruth& gt) {
    if (static_cast<long>(h.size()) != m.n_states)
        throw LengthMismatch(h.size(), static_cast<std::size_t>(m.n_states));
    const ChainAnalysis a = analyze(m, pi);
    const long n = m.n_states;

    Eigen::VectorXd rho_star(n), hv(n), r_pi(n);
    for (long s = 0; s < n; ++s) {
        rho_star(s) = gt.rho_star[static_cast<std::size_t>(s)];
        hv(s) = h[static_cast<std::size_t>(s)];
        r_pi(s) = a.r_pi[static_cast<std::size_t>(s)];
    }
    const Eigen::VectorXd drop = a.P_pi * rho_star - rho_star;
    const Eigen::VectorXd navigation = a.H * drop;
    const Eigen::VectorXd evaluation = a.P_inf * (r_pi + a.P_pi * hv - rho_star - hv);

    PerformanceDifference out;
    out.gain_error.resize(static_cast<std::size_t>(n));
    out.navigation_term.resize(static_cast<std::size_t>(n));
    out.evaluation_term.resize(static_cast<std::size_t>(n));
    double residual = 0.0;
    for (long s = 0; s < n; ++s) {
        const double lhs = a.gain[static_cast<std::size_t>(s)] - rho_star(s);
        out.gain_error[static_cast<std::size_t>(s)] = lhs;
        out.navigation_term[static_cast<std::size_t>(s)] = navigation(s);
        out.evaluation_term[static_cast<std::size_t>(s)] = evaluation(s);
        residual = std::max(residual, std::abs(lhs - navigation(s) - evaluation(s)));
    }
    out.identity_residual = residual;

    const ValueVec t_pi = apply_evaluation(m, pi, h, 1.0);
    double eval_err = 0.0;
    for (long s = 0; s < n; ++s)
        eval_err = std::max(eval_err, std::abs(t_pi[static_cast<std::size_t>(s)] -
                                               h[static_cast<std::size_t>(s)] - rho_star(s)));
    const double rhs = tdrop_policy(m, pi, gt.rho_star) * detail::gain_drop(m, pi, gt.rho_star) +
                       eval_err;
    out.corollary =
        make_bound_check("performance-difference-corollary", sup_dist(a.gain, gt.rho_star), rhs);
    return out;
}

// **** Discounted reduction ****

/**
Checks the three forms of the discounted-to-average reduction for an
eps-greedy policy: with factor = tdrop^pi + 1, fpe = sup_norm(T_gamma(V) - V),
and M = min{span(h_both), span(h_ref)(1 + tdrop) + tdrop},

  "reduction-raw":
      sup_norm(rho^pi - rho*) <= factor * (7(1-gamma) sup_norm(V - rho* / (1-gamma))
          + ((2-gamma)/gamma) fpe + 2(1-gamma)/gamma + (2/gamma) eps)
  "reduction-modified-solution":
      ... <= factor * (7(1-gamma) M + ((2+6 gamma)/gamma) fpe
          + 2(1-gamma)/gamma + (2/gamma) eps)
  "reduction-half-discount" (emitted only when gamma >= 1/2):
      ... <= factor * ((1-gamma)(4 + 7M) + 16 fpe + 4 eps)

\throws GammaOutOfRange unless 0 < gamma < 1
\throws Error if eps_greedy is negative
\throws NotEpsGreedy if min_s(T_gamma^pi(V) - T_gamma(V) + eps) is below
        -1e-12 * max(1, |T_gamma(V)(s)|) at some state
*/
inline std::vector<BoundCheck> reduction_bound(const Mdp& m, const ValueVec& V, double gamma,
                                               const Policy& pi, double eps_greedy,
                                               const GroundTruth& gt) {
    if (!(gamma > 0.0) || gamma >= 1.0) throw GammaOutOfRange(gamma);
    if (eps_greedy < 0.0) throw Error("eps_greedy must be nonnegative");

    const ValueVec tv = apply_optimality(m, V, gamma);
    const ValueVec tv_pi = apply_evaluation(m, pi, V, gamma);
    for (long s = 0; s < m.n_states; ++s) {
        const double greedy_floor = tv[static_cast<std::size_t>(s)] - eps_greedy;
        const double shortfall = greedy_floor - tv_pi[static_cast<std::size_t>(s)];
        if (shortfall > 1e-12 * std::max(1.0, std::abs(tv[static_cast<std::size_t>(s)])))
            throw NotEpsGreedy(s, shortfall);
    }

    const double factor = tdrop_policy(m, pi, gt.rho_star) + 1.0;
    const double fpe = sup_dist(tv, V);
    const double lhs = sup_dist(analyze(m, pi).gain, gt.rho_star);
    double value_err = 0.0;
    for (long s = 0; s < m.n_states; ++s)
        value_err = std::max(value_err, std::abs(V[static_cast<std::size_t>(s)] -
                                                 gt.rho_star[static_cast<std::size_t>(s)] /
                                                     (1.0 - gamma)));
    const double td = tdrop(m, gt.rho_star);
    const double big_m = detail::reference_span_constant(m, gt, td);

    std::vector<BoundCheck> checks;
    checks.push_back(make_bound_check(
        "reduction-raw", lhs,
        factor * (7.0 * (1.0 - gamma) * value_err + (2.0 - gamma) / gamma * fpe +
                  2.0 * (1.0 - gamma) / gamma + 2.0 / gamma * eps_greedy)));
    checks.push_back(make_bound_check(
        "reduction-modified-solution", lhs,
        factor * (7.0 * (1.0 - gamma) * big_m + (2.0 + 6.0 * gamma) / gamma * fpe +
                  2.0 * (1.0 - gamma) / gamma + 2.0 / gamma * eps_greedy)));
    if (gamma >= 0.5)
        checks.push_back(make_bound_check(
            "reduction-half-discount", lhs,
            factor * ((1.0 - gamma) * (4.0 + 7.0 * big_m) + 16.0 * fpe + 4.0 * eps_greedy)));
    return checks;
}

// **** Theorem suite ****

/// Which iteration budgets the suite runs and how much extra budget the
/// k-variant of the discounted solver receives.
struct CertifyConfig {
    /// Budgets to run every applicable guarantee at; entries must be >= 1.
    std::vector<long> n_grid{1, 2, 5, 10, 50, 200};
    /// Extra-budget factor k for the (7 + 64 e^{-k})M + 2 variant; the
    /// variant is skipped when zero. k*n must be integral for each n.
    double extra_k = 4.0;
    /// Also run the log-horizon discounted baseline (needs the enumerated
    /// transient-time bound).
    bool include_baseline = true;
};

/**
Runs every algorithm guarantee against a single instance over a grid of
iteration budgets and returns one checked bound per guarantee per budget,
each labeled "name[n=budget]". Checks emitted per budget n (those whose
preconditions n admits):

  two-phase-fixed-point-error      sup_norm(T(z_n) - z_n - rho*) vs
                                   (13 + 35/n + 20/n^2)/n * dist
  two-phase-suboptimality          adds (10/3) tdrop / n * dist to the rate
  two-phase-gain-drop              sup_norm(P_pi rho* - rho*) vs (10/3) dist/n
  two-phase-large-n-suboptimality  refined rate, only when n >= 4 dist/delta
  two-phase-gain-preservation      exact zero gain drop in the same regime
  gain-estimate-error              sup_norm(rho_hat - rho*) vs 2 dist/n
  picard-drift                     sup_norm(T^(n)(0) - n rho* - h_both) vs dist
  switchover-envelope  (n >= 2)    worst_t residual_t Sum gamma^i / gamma^t
                                   vs 8e sup_norm(V*_gamma) at gamma = 1 - 1/n
  warm-start-value-error (n >= 2)  worst_t t * value error of T^(t)(0)/(t(1-gamma))
                                   vs 2M/(1-gamma)
  warm-start-switchover-residual   final discounted residual of the 2n-budget
                       (n >= 2)    combined run vs (8e/gamma) gamma^tail/Sum * M
  multichain-suboptimality (n >= 2)            from the discounted solver
  multichain-extra-budget-suboptimality        k-variant, when extra_k > 0
  baseline-suboptimality (n >= 4)              log-horizon baseline

where dist = sup_norm(h_both) (the start point is always 0) and
M = min{span(h_both), span(h_ref)(1 + tdrop) + tdrop}. The suite passes iff
every returned check passes.

\throws Error if the grid is empty, contains a budget < 1, or extra_k < 0
\throws EnumerationTooLarge propagated from ground-truth computation
*/
inline std::vector<BoundCheck> theorem_suite(const Mdp& m, const CertifyConfig& cfg = {}) {
    if (cfg.n_grid.empty()) throw Error("certify grid must contain at least one budget");
    for (long n : cfg.n_grid)
        if (n < 1) throw Error("certify grid budgets must be >= 1");
    if (cfg.extra_k < 0.0) throw Error("extra_k must be nonnegative");

    std::vector<long> grid = cfg.n_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const GroundTruth gt = compute_ground_truth(m);
    const double td = tdrop(m, gt.rho_star);
    const double big_m = detail::reference_span_constant(m, gt, td);
    const double dist = sup_norm(gt.h_both);
    const double b = cfg.include_baseline ? transient_time_bound(m).b : 0.0;
    const ValueVec zeros(static_cast<std::size_t>(m.n_states), 0.0);

    std::vector<BoundCheck> checks;
    const auto push = [&checks](std::string label, long n, double lhs, double rhs) {
        checks.push_back(
            make_bound_check(std::move(label) + "[n=" + std::to_string(n) + "]", lhs, rhs));
    };
    const auto push_report = [&checks](const SolveReport& rep, long n) {
        BoundCheck c = rep.certified.front();
        c.label += "[n=" + std::to_string(n) + "]";
        checks.push_back(std::move(c));
    };

    for (long n : grid) {
        const double nd = static_cast<double>(n);
        const double rate = (13.0 + 35.0 / nd + 20.0 / (nd * nd)) / nd;

        // Two-phase method from h0 = 0, plus its gain estimate.
        const SolveReport two_phase = approx_shifted_halpern(m, zeros, n);
        const double sub = sup_dist(analyze(m, *two_phase.output_policy).gain, gt.rho_star);
        const double drop = detail::gain_drop(m, *two_phase.output_policy, gt.rho_star);
        push("two-phase-fixed-point-error", n,
             residual_average(m, two_phase.output_value, gt.rho_star), rate * dist);
        push("two-phase-suboptimality", n, sub, (10.0 / 3.0 * td / nd + rate) * dist);
        push("two-phase-gain-drop", n, drop, 10.0 / 3.0 * dist / nd);
        if (std::isinf(gt.delta) || nd >= 4.0 * dist / gt.delta) {
            push("two-phase-large-n-suboptimality", n, sub, rate * dist);
            push("two-phase-gain-preservation", n, drop, 0.0);
        }
        push("gain-estimate-error", n,
             sup_dist(*two_phase.trace.gain_estimate, gt.rho_star), 2.0 * dist / nd);

        // Drift of the plain undiscounted iteration started at 0.
        const ValueVec x_n = picard(optimality_operator(m), zeros, n).output_value;
        double drift = 0.0;
        for (long s = 0; s < m.n_states; ++s)
            drift = std::max(drift, std::abs(x_n[static_cast<std::size_t>(s)] -
                                             nd * gt.rho_star[static_cast<std::size_t>(s)] -
                                             gt.h_both[static_cast<std::size_t>(s)]));
        push("picard-drift", n, drift, dist);

        if (n >= 2) {
            const double gamma = 1.0 - 1.0 / nd;
            const ValueVec v_star = discounted_optimal(m, gamma).v_star;

            // Anchored-then-plain iteration on the discounted operator.
            const SolveReport switchover =
                halpern_then_picard(optimality_operator(m, gamma), zeros, n);
            double worst = 0.0, pow_g = 1.0, geo = 1.0;
            for (std::size_t t = 0; t < switchover.trace.residual_seq.size(); ++t) {
                worst = std::max(worst, switchover.trace.residual_seq[t] * geo / pow_g);
                pow_g *= gamma;
                geo += pow_g;
            }
            push("switchover-envelope", n, worst, 8.0 * std::exp(1.0) * sup_norm(v_star));

            // Undiscounted warm start: renormalized value error at every step.
            const long eprime = detail::effective_horizon_floor(gamma);
            const SolveReport warm =
                picard(optimality_operator(m), zeros, eprime, TraceRetention::full);
            double worst_t_err = 0.0;
            for (long t = 1; t <= eprime; ++t) {
                const ValueVec& x_t = warm.trace.iterates[static_cast<std::size_t>(t)];
                double err = 0.0;
                for (long s = 0; s < m.n_states; ++s)
                    err = std::max(err,
                                   std::abs(x_t[static_cast<std::size_t>(s)] /
                                                (static_cast<double>(t) * (1.0 - gamma)) -
                                            v_star[static_cast<std::size_t>(s)]));
                worst_t_err = std::max(worst_t_err, static_cast<double>(t) * err);
            }
            push("warm-start-value-error", n, worst_t_err, 2.0 * big_m / (1.0 - gamma));

            // Combined warm start + switchover with a doubled budget.
            const SolveReport combined = warm_start_htp(m, gamma, 2 * n);
            const long tail = 2 * n - (eprime - 1);
            double pow_tail = 1.0, geo_tail = 1.0;
            for (long i = 0; i < tail; ++i) {
                pow_tail *= gamma;
                geo_tail += pow_tail;
            }
            push("warm-start-switchover-residual", n,
                 residual_discounted(m, combined.output_value, gamma),
                 8.0 * std::exp(1.0) / gamma * pow_tail / geo_tail * big_m);

            push_report(solve_multichain(m, n, 0.0, &gt), n);
            if (cfg.extra_k > 0.0) push_report(solve_multichain(m, n, cfg.extra_k, &gt), n);
        }
        if (cfg.include_baseline && n >= 4) push_report(dmdp_baseline(m, n, &gt, b), n);
    }
    return checks;
}

/// True when every check in the list passes; the suite-level verdict.
inline bool all_pass(const std::vector<BoundCheck>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

/// Writes one aligned row per check (status, label, lhs, rhs, margin);
/// failing rows are what a caller should surface before exiting nonzero.
inline void format_check_table(const std::vector<BoundCheck>& checks, std::ostream& os) {
    std::size_t width = 4;
    for (const auto& c : checks) width = std::max(width, c.label.size());
    for (const auto& c : checks) {
        os << (c.pass ? "pass  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width))
           << c.label << std::right << std::scientific << std::setprecision(6)
           << "  lhs=" << c.lhs << "  rhs=" << c.rhs << "  margin=" << c.margin << "\n";
    }
    os.flags(std::ios::fmtflags{});
}

/**
The named instances every guarantee is expected to hold on: the four-state
navigation family at two gaps, two cycle-with-escape instances, and a
one-state absorbing instance whose checks are all exactly zero.
*/
inline std::vector<std::pair<std::string, Mdp>> builtin_certify_instances() {
    std::vector<std::pair<std::string, Mdp>> out;
    out.emplace_back("four-state-gap-0.25", gen_four_state(0.25));
    out.emplace_back("four-state-gap-0.05", gen_four_state(0.05));
    out.emplace_back("cycle-escape-2-5", gen_mkt(2, 5, 0.1, 2024));
    out.emplace_back("cycle-escape-3-4", gen_mkt(3, 4, 0.2, 2025));
    Mdp absorbing;
    absorbing.name = "one-state-absorbing";
    absorbing.n_states = 1;
    absorbing.actions.resize(1);
    Action self;
    self.probs = {1.0};
    self.reward = 0.0;
    absorbing.actions[0].push_back(std::move(self));
    validate(absorbing);
    out.emplace_back("one-state-absorbing", std::move(absorbing));
    return out;
}

} // namespace mvi
