// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include <chrono>
#include <functional>

#include "bound_check.hpp"
#include "complexity.hpp"
#include "rng.hpp"

namespace mvi {

/// An operation needed a declared contraction factor < 1 and the handle
/// carries none (or a nonexpansive gamma = 1).
class MissingContraction : public Error {
  public:
    explicit MissingContraction(const std::string& label)
        : Error("operator '" + label + "' declares no contraction factor < 1") {}
};

/// The iteration budget is below the scheme's minimum.
class IterationBudgetTooSmall : public Error {
  public:
    long n;
    long required;
    IterationBudgetTooSmall(long n_, long required_)
        : Error("iteration budget " + std::to_string(n_) + " is below the required " +
                std::to_string(required_)),
          n(n_),
          required(required_) {}
};

// *******************************************************
// Anchor schedules
// *******************************************************

/**
The two anchoring schedules used by the iteration schemes. anchor_two is
beta_t = 1 - 2/(t+2) (optimality-operator runs); anchor_one is
beta_t = 1 - 1/(t+1) (policy evaluation). No other schedule is accepted.
*/
enum class Schedule { anchor_two, anchor_one };

inline const char* schedule_name(Schedule s) {
    return s == Schedule::anchor_two ? "anchor_two" : "anchor_one";
}

/// Anchoring weight beta_t for step t >= 1.
inline double schedule_beta(Schedule s, long t) {
    if (s == Schedule::anchor_two) return 1.0 - 2.0 / static_cast<double>(t + 2);
    return 1.0 - 1.0 / static_cast<double>(t + 1);
}

/**
Accumulated shift factor Lambda_t = sum_{i=1}^t prod_{j=i}^t beta_j. Both
schedules telescope to a closed form: t/3 under anchor_two and t/2 under
anchor_one.
*/
inline double schedule_lambda(Schedule s, long t) {
    if (s == Schedule::anchor_two) return static_cast<double>(t) / 3.0;
    return static_cast<double>(t) / 2.0;
}

// *******************************************************
// Operator handles
// *******************************************************

/**
A fixed-dimension vector operator. `apply` must be pure and preserve the
length `dim`; `contraction` declares a Lipschitz constant in (0, 1] when
one is known (1 means nonexpansive only).
*/
struct OperatorHandle {
    long dim = 0;
    std::function<ValueVec(const ValueVec&)> apply;
    std::optional<double> contraction;
    std::string label;
};

/**
Counts sampled random pairs on which the handle's declared contraction
factor fails, allowing 1e-9 relative slack. Returns 0 when no factor is
declared.
*/
inline int contraction_violations(const OperatorHandle& op, int pairs = 8,
                                  std::uint64_t seed = 0x0dd5eedULL) {
    if (!op.contraction) return 0;
    SplitMix64 rng(seed);
    int bad = 0;
    ValueVec x(op.dim), y(op.dim);
    for (int p = 0; p < pairs; ++p) {
        for (long i = 0; i < op.dim; ++i) {
            x[i] = 2.0 * rng.next_double() - 1.0;
            y[i] = 2.0 * rng.next_double() - 1.0;
        }
        double d = sup_dist(op.apply(x), op.apply(y));
        double allowed = *op.contraction * sup_dist(x, y);
        if (d > allowed + 1e-9 * std::max(1.0, allowed)) ++bad;
    }
    return bad;
}

/**
Wraps an apply function in a handle and spot-checks a declared contraction
factor on random pairs. A violation is reported on stderr but does not
fail construction; the declared factor is trusted downstream.
*/
inline OperatorHandle make_handle(long dim, std::function<ValueVec(const ValueVec&)> apply,
                                  std::optional<double> contraction, std::string label) {
    OperatorHandle op;
    op.dim = dim;
    op.apply = std::move(apply);
    op.contraction = contraction;
    op.label = std::move(label);
    int bad = contraction_violations(op);
    if (bad > 0)
        std::cerr << "warning: operator '" << op.label << "' violated its declared "
                  << "contraction factor on " << bad << " sampled pair(s)\n";
    return op;
}

/// Handle for the optimality operator T_gamma (gamma = 1 gives T).
inline OperatorHandle optimality_operator(const Mdp& m, double gamma = 1.0) {
    if (!(gamma > 0.0) || gamma > 1.0) throw GammaOutOfRange(gamma);
    auto shared = std::make_shared<const Mdp>(m);
    return make_handle(
        m.n_states, [shared, gamma](const ValueVec& v) { return apply_optimality(*shared, v, gamma); },
        gamma, gamma == 1.0 ? "optimality" : "optimality(gamma=" + std::to_string(gamma) + ")");
}

/// Handle for the evaluation operator T_gamma^pi (gamma = 1 gives T^pi).
inline OperatorHandle evaluation_operator(const Mdp& m, const Policy& pi, double gamma = 1.0) {
    if (!(gamma > 0.0) || gamma > 1.0) throw GammaOutOfRange(gamma);
    validate_policy(m, pi);
    auto shared = std::make_shared<const Mdp>(m);
    auto shared_pi = std::make_shared<const Policy>(pi);
    return make_handle(
        m.n_states,
        [shared, shared_pi, gamma](const ValueVec& v) {
            return apply_evaluation(*shared, *shared_pi, v, gamma);
        },
        gamma, gamma == 1.0 ? "evaluation" : "evaluation(gamma=" + std::to_string(gamma) + ")");
}

/// Handle for op - shift (the shifted operator keeps op's contraction).
inline OperatorHandle shifted(const OperatorHandle& op, ValueVec shift) {
    if (static_cast<long>(shift.size()) != op.dim)
        throw LengthMismatch(op.dim, static_cast<long>(shift.size()));
    auto base = op.apply;
    auto s = std::make_shared<const ValueVec>(std::move(shift));
    return make_handle(
        op.dim,
        [base, s](const ValueVec& v) {
            ValueVec out = base(v);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] -= (*s)[i];
            return out;
        },
        op.contraction, op.label + "-shifted");
}

// *******************************************************
// Traces and reports
// *******************************************************

/// What a solve keeps of its iterate history.
enum class TraceRetention { none, residuals_only, full };

/**
Per-run iteration record. Under residuals_only and full retention,
residual_seq has one entry per iterate (iteration count + 1); under full
retention `iterates` holds the same range. `none` drops both.
*/
struct IterTrace {
    TraceRetention kept = TraceRetention::residuals_only;
    std::vector<ValueVec> iterates;
    std::vector<double> residual_seq;
    std::optional<ValueVec> gain_estimate;
    double wallclock = 0.0;
    std::string schedule;
};

/// Output of one solve: final vector, extracted policy when the scheme
/// defines one, the iteration trace, and any recorded bound checks.
struct SolveReport {
    ValueVec output_value;
    std::optional<Policy> output_policy;
    IterTrace trace;
    std::vector<BoundCheck> certified;
};

namespace detail {

/// Shared bookkeeping for the iteration drivers.
class TraceBuilder {
  public:
    TraceBuilder(TraceRetention kept, std::string schedule) : start_(std::chrono::steady_clock::now()) {
        trace_.kept = kept;
        trace_.schedule = std::move(schedule);
    }

    void record(const ValueVec& x, double residual) {
        if (trace_.kept == TraceRetention::none) return;
        trace_.residual_seq.push_back(residual);
        if (trace_.kept == TraceRetention::full) trace_.iterates.push_back(x);
    }

    bool wants_residuals() const { return trace_.kept != TraceRetention::none; }

    IterTrace finish() {
        trace_.wallclock =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return std::move(trace_);
    }

  private:
    IterTrace trace_;
    std::chrono::steady_clock::time_point start_;
};

inline void check_dim(const OperatorHandle& op, const ValueVec& x0) {
    if (static_cast<long>(x0.size()) != op.dim)
        throw LengthMismatch(op.dim, static_cast<long>(x0.size()));
}

} // namespace detail

// *******************************************************
// Generic iteration drivers
// *******************************************************

/**
Picard iteration x_{t+1} = op(x_t) for n steps. The trace records the
fixed-point residual sup_norm(op(x_t) - x_t) for every iterate, which
costs one extra operator application after the last step.

\param op  operator to iterate
\param x0  starting point (length op.dim)
\param n   number of steps, n >= 0
\throws LengthMismatch if x0 has the wrong length
*/
inline SolveReport picard(const OperatorHandle& op, const ValueVec& x0, long n,
                          TraceRetention retention = TraceRetention::residuals_only) {
    detail::check_dim(op, x0);
    if (n < 0) throw IterationBudgetTooSmall(n, 0);
    detail::TraceBuilder tb(retention, "picard");
    ValueVec x = x0;
    for (long t = 0; t < n; ++t) {
        ValueVec a = op.apply(x);
        tb.record(x, sup_dist(a, x));
        x = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(x, sup_dist(op.apply(x), x));
    SolveReport rep;
    rep.output_value = std::move(x);
    rep.trace = tb.finish();
    return rep;
}

/**
Halpern iteration x_{t+1} = (1 - beta_{t+1}) x0 + beta_{t+1} op(x_t),
anchored at x0, for n steps under the named schedule. Residuals as in
picard.

\throws LengthMismatch if x0 has the wrong length
*/
inline SolveReport halpern(const OperatorHandle& op, const ValueVec& x0, long n,
                           Schedule schedule,
                           TraceRetention retention = TraceRetention::residuals_only) {
    detail::check_dim(op, x0);
    if (n < 0) throw IterationBudgetTooSmall(n, 0);
    detail::TraceBuilder tb(retention, schedule_name(schedule));
    ValueVec x = x0;
    for (long t = 0; t < n; ++t) {
        ValueVec a = op.apply(x);
        tb.record(x, sup_dist(a, x));
        double beta = schedule_beta(schedule, t + 1);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - beta) * x0[i] + beta * a[i];
        x = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(x, sup_dist(op.apply(x), x));
    SolveReport rep;
    rep.output_value = std::move(x);
    rep.trace = tb.finish();
    return rep;
}

// *******************************************************
// Policy evaluation
// *******************************************************

/**
Halpern iteration (anchor_one schedule) on the unshifted evaluation
operator T^pi. The recorded residual is the gain-shifted one,
sup_norm(T^pi(h_t) - h_t - rho^pi), with rho^pi taken from the exact
chain analysis rather than estimated.

\throws PolicyMismatch if pi does not fit m
*/
inline SolveReport policy_eval_halpern(const Mdp& m, const Policy& pi, const ValueVec& h0, long n,
                                       TraceRetention retention = TraceRetention::residuals_only) {
    if (n < 0) throw IterationBudgetTooSmall(n, 0);
    ChainAnalysis chain = analyze(m, pi);
    OperatorHandle op = evaluation_operator(m, pi, 1.0);
    detail::check_dim(op, h0);
    auto shifted_residual = [&chain](const ValueVec& image, const ValueVec& x) {
        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            worst = std::max(worst, std::abs(image[i] - x[i] - chain.gain[i]));
        return worst;
    };
    detail::TraceBuilder tb(retention, "anchor_one");
    ValueVec h = h0;
    for (long t = 0; t < n; ++t) {
        ValueVec a = op.apply(h);
        tb.record(h, shifted_residual(a, h));
        double beta = schedule_beta(Schedule::anchor_one, t + 1);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - beta) * h0[i] + beta * a[i];
        h = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(h, shifted_residual(op.apply(h), h));
    SolveReport rep;
    rep.output_value = std::move(h);
    rep.trace = tb.finish();
    return rep;
}

// *******************************************************
// Approximately shifted Halpern iteration
// *******************************************************

/**
Two-phase scheme for the undiscounted optimality operator. Phase one runs
n Picard steps from h0 and turns the drift into a gain estimate
rho_hat = (T^(n)(h0) - h0)/n; phase two runs n Halpern steps (anchor_two)
on T - rho_hat, anchored at the phase-one endpoint. Returns the final
iterate, rho_hat in the trace, and the greedy policy of the final iterate
at gamma = 1.

The trace covers both phases: n unshifted Picard residuals, then n + 1
residuals of the estimated-shift operator.

\param n  steps per phase, n >= 1
\param anchor_n  anchored steps in phase two; negative (the default) means
       n, matching the guarantee. Benchmarks splitting a total budget b use
       ceil(b/2) and floor(b/2).
\throws IterationBudgetTooSmall if n < 1
*/
inline SolveReport approx_shifted_halpern(const Mdp& m, const ValueVec& h0, long n,
                                          TraceRetention retention = TraceRetention::residuals_only,
                                          long anchor_n = -1) {
    if (n < 1) throw IterationBudgetTooSmall(n, 1);
    const long n2 = anchor_n < 0 ? n : anchor_n;
    OperatorHandle op = optimality_operator(m, 1.0);
    detail::check_dim(op, h0);
    detail::TraceBuilder tb(retention, "picard+anchor_two");

    ValueVec x = h0;
    for (long t = 0; t < n; ++t) {
        ValueVec a = op.apply(x);
        tb.record(x, sup_dist(a, x));
        x = std::move(a);
    }
    ValueVec rho_hat(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        rho_hat[i] = (x[i] - h0[i]) / static_cast<double>(n);

    const ValueVec anchor = x;
    auto shifted_image = [&op, &rho_hat](const ValueVec& v) {
        ValueVec out = op.apply(v);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= rho_hat[i];
        return out;
    };
    ValueVec z = anchor;
    for (long t = 0; t < n2; ++t) {
        ValueVec a = shifted_image(z);
        tb.record(z, sup_dist(a, z));
        double beta = schedule_beta(Schedule::anchor_two, t + 1);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - beta) * anchor[i] + beta * a[i];
        z = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(z, sup_dist(shifted_image(z), z));

    SolveReport rep;
    rep.output_policy = greedy(m, z, 1.0);
    rep.output_value = std::move(z);
    rep.trace = tb.finish();
    rep.trace.gain_estimate = std::move(rho_hat);
    return rep;
}

namespace detail {

/**
floor(1/(1-gamma)) with a relative nudge before flooring: the inversion
rounds 1/(1-gamma) a few ulps off an exact integer for gammas like 0.99,
and the floor must not lose a whole step to that.
*/
inline long effective_horizon_floor(double gamma) {
    double x = 1.0 / (1.0 - gamma);
    return static_cast<long>(std::floor(x + std::max(1e-12, 1e-12 * x)));
}

} // namespace detail

// *******************************************************
// Halpern-then-Picard
// *******************************************************

/**
Runs Halpern iteration (anchor_two) for the first E = floor(1/(1-gamma)) - 1
steps, then plain Picard, for a gamma-contractive operator. Residuals as
in picard.

\throws MissingContraction if op declares no contraction factor < 1
*/
inline SolveReport halpern_then_picard(const OperatorHandle& op, const ValueVec& x0, long n,
                                       TraceRetention retention = TraceRetention::residuals_only) {
    if (!op.contraction || !(*op.contraction < 1.0)) throw MissingContraction(op.label);
    detail::check_dim(op, x0);
    if (n < 0) throw IterationBudgetTooSmall(n, 0);
    const long E = detail::effective_horizon_floor(*op.contraction) - 1;
    detail::TraceBuilder tb(retention, "anchor_two+picard");
    ValueVec x = x0;
    for (long t = 0; t < n; ++t) {
        ValueVec a = op.apply(x);
        tb.record(x, sup_dist(a, x));
        if (t < E) {
            double beta = schedule_beta(Schedule::anchor_two, t + 1);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - beta) * x0[i] + beta * a[i];
        }
        x = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(x, sup_dist(op.apply(x), x));
    SolveReport rep;
    rep.output_value = std::move(x);
    rep.trace = tb.finish();
    return rep;
}

// *******************************************************
// Warm-started Halpern-then-Picard
// *******************************************************

/**
Three-phase discounted solve: E' = floor(1/(1-gamma)) undiscounted Picard
steps of T from 0 shrink the value error, then the remaining n - E' steps
run halpern_then_picard on T_gamma from that point. Returns V and the
greedy policy at gamma.

The trace concatenates the phases: E' undiscounted residuals, then
n - E' + 1 discounted ones.

\param gamma  discount factor in (0, 1)
\param n      total steps across phases, n >= E'
\throws GammaOutOfRange if gamma is not in (0, 1)
\throws IterationBudgetTooSmall if n < E'
*/
inline SolveReport warm_start_htp(const Mdp& m, double gamma, long n,
                                  TraceRetention retention = TraceRetention::residuals_only) {
    if (!(gamma > 0.0) || !(gamma < 1.0)) throw GammaOutOfRange(gamma);
    const long eprime = detail::effective_horizon_floor(gamma);
    if (n < eprime) throw IterationBudgetTooSmall(n, eprime);

    OperatorHandle undiscounted = optimality_operator(m, 1.0);
    OperatorHandle discounted = optimality_operator(m, gamma);
    const long E = detail::effective_horizon_floor(gamma) - 1;

    detail::TraceBuilder tb(retention, "picard+anchor_two+picard");
    ValueVec x(m.n_states, 0.0);
    for (long t = 0; t < eprime; ++t) {
        ValueVec a = undiscounted.apply(x);
        tb.record(x, sup_dist(a, x));
        x = std::move(a);
    }
    const ValueVec anchor = x;
    for (long t = 0; t < n - eprime; ++t) {
        ValueVec a = discounted.apply(x);
        tb.record(x, sup_dist(a, x));
        if (t < E) {
            double beta = schedule_beta(Schedule::anchor_two, t + 1);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - beta) * anchor[i] + beta * a[i];
        }
        x = std::move(a);
    }
    if (tb.wants_residuals()) tb.record(x, sup_dist(discounted.apply(x), x));

    SolveReport rep;
    rep.output_policy = greedy(m, x, gamma);
    rep.output_value = std::move(x);
    rep.trace = tb.finish();
    return rep;
}

// *******************************************************
// Top-level multichain solver
// *******************************************************

/**
Solves a multichain instance by the discounted route: gamma = 1 - 1/n and
warm_start_htp with a (2 + extra_k) n step budget. When ground truth is
supplied, the report carries a certified suboptimality check of
max_s(rho*(s) - rho^pi(s)) against
(T_drop + 1)((7 + 64 e^{-extra_k}) M + 2)/(n - 1), where
M = min(span(h_both), span(h_unmod)(1 + T_drop) + T_drop).

\param n        accuracy parameter, n >= 2
\param extra_k  additional budget multiplier, >= 0 with extra_k * n integral
\throws IterationBudgetTooSmall if n < 2
\throws Error if extra_k is negative or extra_k * n is not an integer
*/
inline SolveReport solve_multichain(const Mdp& m, long n, double extra_k = 0.0,
                                    const GroundTruth* gt = nullptr,
                                    TraceRetention retention = TraceRetention::residuals_only) {
    if (n < 2) throw IterationBudgetTooSmall(n, 2);
    if (extra_k < 0.0) throw Error("extra_k must be nonnegative");
    double kn = extra_k * static_cast<double>(n);
    if (std::abs(kn - std::round(kn)) > 1e-9)
        throw Error("extra_k * n must be an integer (got " + std::to_string(kn) + ")");
    const double gamma = 1.0 - 1.0 / static_cast<double>(n);
    const long budget = 2 * n + static_cast<long>(std::llround(kn));

    SolveReport rep = warm_start_htp(m, gamma, budget, retention);
    if (gt != nullptr) {
        ChainAnalysis chain = analyze(m, *rep.output_policy);
        double lhs = 0.0;
        for (long s = 0; s < m.n_states; ++s) lhs = std::max(lhs, gt->rho_star[s] - chain.gain[s]);
        double td = tdrop(m, gt->rho_star);
        double mspan = std::min(span(gt->h_both), span(gt->h_unmod) * (1.0 + td) + td);
        double rhs = (td + 1.0) * ((7.0 + 64.0 * std::exp(-extra_k)) * mspan + 2.0) /
                     static_cast<double>(n - 1);
        rep.certified.push_back(make_bound_check(
            extra_k > 0.0 ? "multichain-extra-budget-suboptimality" : "multichain-suboptimality",
            lhs, rhs));
    }
    return rep;
}

// *******************************************************
// Discounted baseline
// *******************************************************

/**
Reference discounted reduction: gamma with 1/(1-gamma) = n/(2 ln n)
(natural logarithm), n Picard steps of T_gamma from 0, greedy extraction.
When ground truth and the transient bound B are both supplied, the report
carries a certified check of sup_norm(rho^pi - rho*) against
2 (3B + 3 span(h_unmod) + 2) ln(n)/n.

\param n  iteration count, n >= 4
\throws IterationBudgetTooSmall if n < 4
*/
inline SolveReport dmdp_baseline(const Mdp& m, long n, const GroundTruth* gt = nullptr,
                                 std::optional<double> b = std::nullopt,
                                 TraceRetention retention = TraceRetention::residuals_only) {
    if (n < 4) throw IterationBudgetTooSmall(n, 4);
    const double gamma = 1.0 - 2.0 * std::log(static_cast<double>(n)) / static_cast<double>(n);
    SolveReport rep = picard(optimality_operator(m, gamma), ValueVec(m.n_states, 0.0), n, retention);
    rep.output_policy = greedy(m, rep.output_value, gamma);
    if (gt != nullptr && b.has_value()) {
        ChainAnalysis chain = analyze(m, *rep.output_policy);
        double lhs = sup_dist(chain.gain, gt->rho_star);
        double rhs = 2.0 * (3.0 * *b + 3.0 * span(gt->h_unmod) + 2.0) *
                     std::log(static_cast<double>(n)) / static_cast<double>(n);
        rep.certified.push_back(make_bound_check("baseline-suboptimality", lhs, rhs));
    }
    return rep;
}

} // namespace mvi
