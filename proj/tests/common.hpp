// Shared helpers for the test suite: reproducible random instances and the
// property checks that both the unit tests and the acceptance harness run.

#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <mvi/bellman.hpp>
#include <mvi/chain.hpp>
#include <mvi/complexity.hpp>
#include <mvi/generators.hpp>
#include <mvi/mdp.hpp>
#include <mvi/certify.hpp>
#include <mvi/oracle.hpp>
#include <mvi/rng.hpp>
#include <mvi/solvers.hpp>

namespace mvi_test {

using mvi::Mdp;
using mvi::Policy;
using mvi::SplitMix64;
using mvi::ValueVec;

inline ValueVec random_value_vec(SplitMix64& rng, long n, double lo, double hi) {
    ValueVec v(static_cast<std::size_t>(n));
    for (double& x : v) x = lo + (hi - lo) * rng.next_double();
    return v;
}

/// Random dense-ish MDP: every row places mass on a random subset of states.
/// Always passes validation.
inline Mdp random_mdp(SplitMix64& rng, long max_states, long max_actions) {
    Mdp m;
    m.n_states = 1 + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(max_states)));
    m.actions.resize(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s) {
        long na = 1 + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(max_actions)));
        for (long a = 0; a < na; ++a) {
            mvi::Action act;
            act.probs.assign(static_cast<std::size_t>(m.n_states), 0.0);
            // Support of size 1..n_states, then normalized.
            long support = 1 + static_cast<long>(
                                   rng.next_below(static_cast<std::uint64_t>(m.n_states)));
            double sum = 0.0;
            for (long k = 0; k < support; ++k) {
                long j = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(m.n_states)));
                double w = 0.05 + rng.next_double();
                act.probs[static_cast<std::size_t>(j)] += w;
                sum += w;
            }
            for (double& p : act.probs) p /= sum;
            mvi::snap_distribution(act.probs);
            act.reward = rng.next_double();
            m.actions[static_cast<std::size_t>(s)].push_back(std::move(act));
        }
    }
    return m;
}

inline Policy random_deterministic_policy(SplitMix64& rng, const Mdp& m) {
    std::vector<long> det(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s)
        det[static_cast<std::size_t>(s)] =
            static_cast<long>(rng.next_below(static_cast<std::uint64_t>(m.num_actions(s))));
    return Policy::deterministic(std::move(det));
}

inline Policy random_randomized_policy(SplitMix64& rng, const Mdp& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s) {
        std::vector<double> w(static_cast<std::size_t>(m.num_actions(s)));
        double sum = 0.0;
        for (double& x : w) {
            x = 0.05 + rng.next_double();
            sum += x;
        }
        for (double& x : w) x /= sum;
        rows[static_cast<std::size_t>(s)] = std::move(w);
    }
    return Policy::randomized(std::move(rows));
}

/// Formats a failure message; an empty return value means the check passed.
template <typename... Args> std::string fail(const Args&... args) {
    std::ostringstream out;
    out.precision(17);
    (out << ... << args);
    return out.str();
}

// *******************************************************
// mdp-core property checks
// *******************************************************

/// span(v + c 1) = span(v); span(v) <= 2 sup_norm(v); triangle inequality
/// for sup_dist on random triples.
inline std::string check_seminorm_properties(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        long n = 1 + static_cast<long>(rng.next_below(12));
        ValueVec v = random_value_vec(rng, n, -50.0, 50.0);
        double c = -100.0 + 200.0 * rng.next_double();
        ValueVec shifted = v;
        for (double& x : shifted) x += c;
        if (std::abs(mvi::span(shifted) - mvi::span(v)) > 1e-12 * (1.0 + std::abs(c)))
            return fail("span shift invariance failed, case ", i);
        if (mvi::span(v) > 2.0 * mvi::sup_norm(v) + 1e-15)
            return fail("span(v) <= 2 sup_norm(v) failed, case ", i);
        ValueVec u = random_value_vec(rng, n, -50.0, 50.0);
        ValueVec w = random_value_vec(rng, n, -50.0, 50.0);
        if (mvi::sup_dist(u, w) > mvi::sup_dist(u, v) + mvi::sup_dist(v, w) + 1e-12)
            return fail("sup_dist triangle inequality failed, case ", i);
    }
    return {};
}

// *******************************************************
// bellman property checks
// *******************************************************

/// gamma-contraction for gamma < 1 and nonexpansiveness at gamma = 1;
/// monotonicity; constant-shift rule T_g(u + c 1) = T_g(u) + g c 1;
/// evaluation dominance; greedy-evaluation exactness.
inline std::string check_bellman_properties(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.3, 0.5, 0.9, 0.99, 1.0};
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 8, 3);
        double gamma = gammas[rng.next_below(5)];
        ValueVec u = random_value_vec(rng, m.n_states, -10.0, 10.0);
        ValueVec v = random_value_vec(rng, m.n_states, -10.0, 10.0);

        double lhs = mvi::sup_dist(mvi::apply_optimality(m, u, gamma),
                                   mvi::apply_optimality(m, v, gamma));
        if (lhs > gamma * mvi::sup_dist(u, v) + 1e-12)
            return fail("contraction failed at gamma=", gamma, ", case ", i);

        ValueVec lo = u, hi = u;
        for (std::size_t s = 0; s < hi.size(); ++s) hi[s] += 5.0 * rng.next_double();
        ValueVec tlo = mvi::apply_optimality(m, lo, gamma);
        ValueVec thi = mvi::apply_optimality(m, hi, gamma);
        for (std::size_t s = 0; s < tlo.size(); ++s)
            if (tlo[s] > thi[s] + 1e-12) return fail("monotonicity failed, case ", i);

        double c = -20.0 + 40.0 * rng.next_double();
        ValueVec shifted = u;
        for (double& x : shifted) x += c;
        ValueVec a = mvi::apply_optimality(m, shifted, gamma);
        ValueVec b = mvi::apply_optimality(m, u, gamma);
        for (std::size_t s = 0; s < a.size(); ++s)
            if (std::abs(a[s] - (b[s] + gamma * c)) > 1e-10)
                return fail("constant-shift rule failed, case ", i);

        Policy pi = (i % 2 == 0) ? random_deterministic_policy(rng, m)
                                 : random_randomized_policy(rng, m);
        ValueVec ev = mvi::apply_evaluation(m, pi, u, gamma);
        for (std::size_t s = 0; s < ev.size(); ++s)
            if (ev[s] > b[s] + 1e-12) return fail("evaluation dominance failed, case ", i);

        ValueVec gv = mvi::apply_evaluation(m, mvi::greedy(m, u, gamma), u, gamma);
        for (std::size_t s = 0; s < gv.size(); ++s)
            if (gv[s] != b[s]) return fail("greedy-evaluation exactness failed, case ", i);
    }
    return {};
}

// *******************************************************
// chain property checks
// *******************************************************

inline Policy random_policy(SplitMix64& rng, const Mdp& m, int parity) {
    return parity % 2 == 0 ? random_deterministic_policy(rng, m)
                           : random_randomized_policy(rng, m);
}

/// All ChainAnalysis matrix identities at tolerance 1e-9, fuzzed over
/// random policies on random MDPs with at most 10 states.
inline std::string check_chain_invariants(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 10, 3);
        mvi::ChainAnalysis a = mvi::analyze(m, random_policy(rng, m, i));
        const long n = m.n_states;
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
        auto near0 = [](const Eigen::MatrixXd& X) { return X.cwiseAbs().maxCoeff() <= 1e-9; };

        if ((a.P_inf.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-9 ||
            a.P_inf.minCoeff() < -1e-12)
            return fail("P_inf not row-stochastic, case ", i);
        if (!near0(a.P_inf * a.P_pi - a.P_inf) || !near0(a.P_pi * a.P_inf - a.P_inf))
            return fail("P_inf P_pi = P_pi P_inf = P_inf failed, case ", i);
        if (!near0(a.H * (I - a.P_pi) - (I - a.P_inf)) ||
            !near0((I - a.P_pi) * a.H - (I - a.P_inf)))
            return fail("H (I-P) = (I-P) H = I - P_inf failed, case ", i);
        if (!near0(a.H * a.P_inf) || !near0(a.P_inf * a.H))
            return fail("H P_inf = P_inf H = 0 failed, case ", i);

        Eigen::Map<const Eigen::VectorXd> r(a.r_pi.data(), n);
        Eigen::Map<const Eigen::VectorXd> g(a.gain.data(), n);
        Eigen::Map<const Eigen::VectorXd> h(a.bias.data(), n);
        if ((a.P_inf * r - g).cwiseAbs().maxCoeff() > 1e-9 ||
            (a.H * r - h).cwiseAbs().maxCoeff() > 1e-9)
            return fail("gain/bias definitions failed, case ", i);
        if ((g + h - r - a.P_pi * h).cwiseAbs().maxCoeff() > 1e-9)
            return fail("Poisson equation failed, case ", i);
        if ((a.P_inf * h).cwiseAbs().maxCoeff() > 1e-9)
            return fail("P_inf bias = 0 failed, case ", i);
    }
    return {};
}

/// Restricted monotonicity of the deviation matrix: x <= y supported on
/// transient states (hence P_inf x = P_inf y = 0) implies H x <= H y.
inline std::string check_chain_monotonicity(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 10, 3);
        mvi::ChainAnalysis a = mvi::analyze(m, random_policy(rng, m, i));
        const long n = m.n_states;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n), y = Eigen::VectorXd::Zero(n);
        for (long s : a.transient_states) {
            x(s) = -2.0 + 4.0 * rng.next_double();
            y(s) = x(s) + 3.0 * rng.next_double();
        }
        Eigen::VectorXd d = a.H * y - a.H * x;
        if (d.minCoeff() < -1e-9) return fail("restricted monotonicity failed, case ", i);
    }
    return {};
}

/// Resolvent span bound: sup_norm((I - g P_pi)^{-1} (I - P_pi) h) <= span(h)
/// for g in {0.5, 0.9, 0.99} and random h.
inline std::string check_chain_span_bound(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.5, 0.9, 0.99};
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 10, 3);
        mvi::ChainAnalysis a = mvi::analyze(m, random_policy(rng, m, i));
        const long n = m.n_states;
        ValueVec hv = random_value_vec(rng, n, -5.0, 5.0);
        Eigen::Map<const Eigen::VectorXd> h(hv.data(), n);
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
        for (double g : gammas) {
            Eigen::VectorXd z =
                Eigen::PartialPivLU<Eigen::MatrixXd>(I - g * a.P_pi).solve((I - a.P_pi) * h);
            if (z.cwiseAbs().maxCoeff() > mvi::span(hv) + 1e-9)
                return fail("resolvent span bound failed at gamma=", g, ", case ", i);
        }
    }
    return {};
}

/// Row sums of H over transient columns stay below the worst-case
/// transient time, with equality at the maximizing start state.
inline std::string check_chain_rowsum_bound(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 10, 3);
        mvi::ChainAnalysis a = mvi::analyze(m, random_policy(rng, m, i));
        double best = 0.0;
        for (long s = 0; s < m.n_states; ++s) {
            double sum = 0.0;
            for (long t : a.transient_states) sum += a.H(s, t);
            if (sum > a.transient_time + 1e-9)
                return fail("H row-sum exceeded transient_time, case ", i);
            best = std::max(best, sum);
        }
        if (!a.transient_states.empty() && std::abs(best - a.transient_time) > 1e-9)
            return fail("row-sum maximum missed transient_time, case ", i);
    }
    return {};
}

// *******************************************************
// oracle property checks
// *******************************************************

/// Gain dominance (rho^pi <= rho* entrywise for every deterministic
/// policy) and first modified optimality equation at rho*.
inline std::string check_oracle_properties(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 5, 3);
        mvi::BruteForceGain bf = mvi::optimal_gain_bruteforce(m);
        std::vector<long> det;
        Eigen::MatrixXd P;
        Eigen::VectorXd r;
        for (unsigned long long p = 0; p < bf.enumerated; ++p) {
            mvi::detail::decode_policy(m, p, det);
            mvi::detail::assemble_det(m, det, P, r);
            ValueVec g = mvi::detail::gain_of_chain(P, r);
            for (long s = 0; s < m.n_states; ++s)
                if (g[static_cast<std::size_t>(s)] >
                    bf.rho_star[static_cast<std::size_t>(s)] + 1e-10)
                    return fail("gain dominance failed, case ", i);
        }
        for (long s = 0; s < m.n_states; ++s) {
            double best = -1e300;
            for (long a = 0; a < m.num_actions(s); ++a)
                best = std::max(best, mvi::detail::rho_backup(m, s, a, bf.rho_star));
            if (std::abs(best - bf.rho_star[static_cast<std::size_t>(s)]) > 1e-9)
                return fail("first modified equation failed at the optimum, case ", i);
        }
    }
    return {};
}

/// discounted_optimal leaves a residual below 1e-10 / (1 - gamma).
inline std::string check_discounted_residual(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.5, 0.9, 0.99};
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 8, 3);
        double gamma = gammas[rng.next_below(3)];
        mvi::DiscountedOptimum opt = mvi::discounted_optimal(m, gamma);
        if (mvi::residual_discounted(m, opt.v_star, gamma) > 1e-10 / (1.0 - gamma))
            return fail("discounted residual too large, case ", i);
    }
    return {};
}

// *******************************************************
// complexity property checks
// *******************************************************

/// A small random instance with genuine multichain structure.
inline Mdp small_multichain(SplitMix64& rng) {
    long comps = 2 + static_cast<long>(rng.next_below(2));
    long states = 1 + static_cast<long>(rng.next_below(2));
    long acts = 1 + static_cast<long>(rng.next_below(2));
    double leak = 0.2 + 0.6 * rng.next_double();
    return mvi::gen_random_multichain(comps, states, acts, leak, rng.next_u64());
}

/// T_drop <= B, T_drop <= 1/Delta (with 1/inf = 0), agreement of the
/// iteration path with the enumeration path, and finiteness.
inline std::string check_complexity_bounds(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = small_multichain(rng);
        ValueVec rho = mvi::optimal_gain_bruteforce(m).rho_star;
        double delta = mvi::min_gain_gap(m, rho);
        double td = mvi::tdrop(m, rho);
        double b = mvi::transient_time_bound(m).b;
        if (!std::isfinite(td) || td < 0.0) return fail("tdrop not finite, case ", i);
        if (td > b + 1e-9) return fail("tdrop <= B failed, case ", i, ": ", td, " vs ", b);
        double inv_delta = std::isinf(delta) ? 0.0 : 1.0 / delta;
        if (td > inv_delta + 1e-9)
            return fail("tdrop <= 1/delta failed, case ", i, ": ", td, " vs ", inv_delta);
        double td_enum = mvi::tdrop_bruteforce(m, rho);
        if (std::abs(td - td_enum) > 1e-8)
            return fail("tdrop paths disagree, case ", i, ": ", td, " vs ", td_enum);
    }
    return {};
}

/// simultaneous_argmax(rho*, h_both) yields a policy on generated
/// instances of every family.
inline std::string check_simultaneous_argmax_property(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m;
        switch (i % 3) {
        case 0: m = small_multichain(rng); break;
        case 1:
            m = mvi::gen_mkt(1 + static_cast<long>(rng.next_below(4)),
                             1 + static_cast<long>(rng.next_below(6)),
                             0.05 + 0.3 * rng.next_double(), rng.next_u64());
            break;
        default: m = mvi::gen_four_state(0.05 + 0.9 * rng.next_double()); break;
        }
        mvi::GroundTruth gt = mvi::compute_ground_truth(m);
        if (!mvi::check_modified(m, gt.rho_star, gt.h_both, 1e-8).pass)
            return fail("h_both failed the modified check, case ", i);
        if (!mvi::check_unmodified(m, gt.rho_star, gt.h_both, 1e-8).pass)
            return fail("h_both failed the unmodified check, case ", i);
        if (!mvi::simultaneous_argmax(m, gt.rho_star, gt.h_both).has_value())
            return fail("no simultaneous argmax on a generated instance, case ", i);
    }
    return {};
}

// *******************************************************
// solver property checks
// *******************************************************

/// A generated instance paired with its enumerated ground truth, rotating
/// over the three instance families.
struct TruthInstance {
    Mdp m;
    mvi::GroundTruth gt;
};

inline TruthInstance random_truth_instance(SplitMix64& rng, int which) {
    TruthInstance ti;
    switch (which % 3) {
    case 0: ti.m = small_multichain(rng); break;
    case 1:
        ti.m = mvi::gen_mkt(1 + static_cast<long>(rng.next_below(3)),
                            1 + static_cast<long>(rng.next_below(6)),
                            0.05 + 0.3 * rng.next_double(), rng.next_u64());
        break;
    default: ti.m = mvi::gen_four_state(0.05 + 0.9 * rng.next_double()); break;
    }
    ti.gt = mvi::compute_ground_truth(ti.m);
    return ti;
}

/// Relative slack granted to a theorem's right-hand side.
inline bool holds(double lhs, double rhs) {
    return lhs <= rhs + 1e-9 * std::max(1.0, std::abs(rhs));
}

/// Halpern iterates of the unshifted evaluation operator equal those of
/// the exactly shifted one plus Lambda_t rho^pi, both schedules, t <= 200.
inline std::string check_coupling_identity(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 6, 3);
        Policy pi = random_policy(rng, m, i);
        ValueVec h0 = random_value_vec(rng, m.n_states, -5.0, 5.0);
        ValueVec rho = mvi::analyze(m, pi).gain;
        mvi::OperatorHandle unshifted = mvi::evaluation_operator(m, pi, 1.0);
        mvi::OperatorHandle shifted_op = mvi::shifted(unshifted, rho);
        const long steps = 200;
        for (mvi::Schedule sched : {mvi::Schedule::anchor_two, mvi::Schedule::anchor_one}) {
            mvi::SolveReport xu =
                mvi::halpern(unshifted, h0, steps, sched, mvi::TraceRetention::full);
            mvi::SolveReport ys =
                mvi::halpern(shifted_op, h0, steps, sched, mvi::TraceRetention::full);
            for (long t = 0; t <= steps; ++t) {
                double lambda = mvi::schedule_lambda(sched, t);
                for (long s = 0; s < m.n_states; ++s) {
                    double coupled = ys.trace.iterates[t][s] + lambda * rho[s];
                    if (std::abs(xu.trace.iterates[t][s] - coupled) > 1e-9)
                        return fail("coupling identity failed, case ", i, ", schedule ",
                                    mvi::schedule_name(sched), ", t ", t);
                }
            }
        }
    }
    return {};
}

/// Anchored policy evaluation converges at rate 2/(t+1) |h0 - h^pi|.
inline std::string check_policy_eval_rate(std::uint64_t seed, int cases, long steps = 500) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 6, 3);
        Policy pi = random_policy(rng, m, i);
        ValueVec h0 = random_value_vec(rng, m.n_states, -5.0, 5.0);
        ValueVec hpi = mvi::analyze(m, pi).bias;
        double dist = mvi::sup_dist(h0, hpi);
        mvi::SolveReport rep = mvi::policy_eval_halpern(m, pi, h0, steps);
        for (long t = 0; t <= steps; ++t)
            if (!holds(rep.trace.residual_seq[t], 2.0 / static_cast<double>(t + 1) * dist))
                return fail("policy evaluation rate failed, case ", i, ", t ", t);
    }
    return {};
}

/// Halpern iteration on a nonexpansive operator with a fixed point keeps
/// the residual below 4/(t+1) |x0 - x*|.
inline std::string check_halpern_nonexpansive_rate(std::uint64_t seed, int cases,
                                                   long steps = 200) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 6, 3);
        Policy pi = random_policy(rng, m, i);
        mvi::ChainAnalysis chain = mvi::analyze(m, pi);
        mvi::OperatorHandle op = mvi::shifted(mvi::evaluation_operator(m, pi, 1.0), chain.gain);
        ValueVec x0 = random_value_vec(rng, m.n_states, -5.0, 5.0);
        double dist = mvi::sup_dist(x0, chain.bias);
        mvi::SolveReport rep = mvi::halpern(op, x0, steps, mvi::Schedule::anchor_two);
        for (long t = 0; t <= steps; ++t)
            if (!holds(rep.trace.residual_seq[t], 4.0 / static_cast<double>(t + 1) * dist))
                return fail("nonexpansive Halpern rate failed, case ", i, ", t ", t);
    }
    return {};
}

/// Picard drift stays within |h0 - h_both| of n rho* + h_both, and the
/// resulting gain estimate is within (2/n) |h0 - h_both| of rho*.
inline std::string check_gain_estimation(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        ValueVec h0 = random_value_vec(rng, ti.m.n_states, -5.0, 5.0);
        double dist = mvi::sup_dist(h0, ti.gt.h_both);
        long n = 1 + static_cast<long>(rng.next_below(200));
        ValueVec x = h0;
        for (long t = 0; t < n; ++t) x = mvi::apply_optimality(ti.m, x, 1.0);
        double drift = 0.0;
        for (long s = 0; s < ti.m.n_states; ++s)
            drift = std::max(drift, std::abs(x[s] - static_cast<double>(n) * ti.gt.rho_star[s] -
                                             ti.gt.h_both[s]));
        if (!holds(drift, dist)) return fail("Picard drift bound failed, case ", i);
        double est_err = 0.0;
        for (long s = 0; s < ti.m.n_states; ++s)
            est_err = std::max(est_err, std::abs((x[s] - h0[s]) / static_cast<double>(n) -
                                                 ti.gt.rho_star[s]));
        if (!holds(est_err, 2.0 / static_cast<double>(n) * dist))
            return fail("gain estimate bound failed, case ", i);
    }
    return {};
}

/// Undiscounted Picard from zero drifts within both span bounds of n rho*.
inline std::string check_picard_zero_gain_bounds(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        double td = mvi::tdrop(ti.m, ti.gt.rho_star);
        double span_both = mvi::span(ti.gt.h_both);
        double span_unmod = mvi::span(ti.gt.h_unmod);
        long n = 1 + static_cast<long>(rng.next_below(200));
        ValueVec x(ti.m.n_states, 0.0);
        for (long t = 0; t < n; ++t) x = mvi::apply_optimality(ti.m, x, 1.0);
        double drift = 0.0;
        for (long s = 0; s < ti.m.n_states; ++s)
            drift = std::max(drift, std::abs(x[s] - static_cast<double>(n) * ti.gt.rho_star[s]));
        if (!holds(drift, span_both))
            return fail("Picard-from-zero span(h_both) bound failed, case ", i);
        if (!holds(drift, span_unmod * (1.0 + td) + td))
            return fail("Picard-from-zero transient bound failed, case ", i);
    }
    return {};
}

/// Fixed-point error, suboptimality, and (past the large-n threshold) the
/// refined suboptimality and exact gain preservation of the two-phase
/// anchored scheme.
inline std::string check_alg1_bounds(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        ValueVec h0(ti.m.n_states, 0.0);
        if (i % 2 == 0) {
            h0 = ti.gt.h_both;
            for (double& v : h0) v += 0.2 * rng.next_double() - 0.1;
        }
        double dist = mvi::sup_dist(h0, ti.gt.h_both);
        long n = 1 + static_cast<long>(rng.next_below(60));
        mvi::SolveReport rep = mvi::approx_shifted_halpern(ti.m, h0, n);
        double nn = static_cast<double>(n);
        double base = (13.0 + 35.0 / nn + 20.0 / (nn * nn)) / nn * dist;
        double fpe = mvi::residual_average(ti.m, rep.output_value, ti.gt.rho_star);
        if (!holds(fpe, base)) return fail("two-phase fixed-point error bound failed, case ", i);
        double td = mvi::tdrop(ti.m, ti.gt.rho_star);
        ValueVec gain = mvi::analyze(ti.m, *rep.output_policy).gain;
        double subopt = mvi::sup_dist(gain, ti.gt.rho_star);
        if (!holds(subopt, base + (10.0 / 3.0) * td / nn * dist))
            return fail("two-phase suboptimality bound failed, case ", i);
        if (std::isfinite(ti.gt.delta) && nn >= 4.0 * dist / ti.gt.delta) {
            if (!holds(subopt, base))
                return fail("large-n suboptimality bound failed, case ", i);
            auto rbar = mvi::gain_dropping_reward(ti.m, ti.gt.rho_star);
            for (long s = 0; s < ti.m.n_states; ++s)
                if (rbar[s][rep.output_policy->det[s]] != 0.0)
                    return fail("large-n run chose a gain-dropping action, case ", i,
                                ", state ", s);
        }
    }
    return {};
}

/// Residuals of the switchover scheme stay below the geometric envelope
/// 8e gamma^t / sum_i gamma^i |x0 - x*| and below 4/(t+1) |x0 - x*|
/// during the anchored phase.
inline std::string check_alg2_rate(std::uint64_t seed, int cases, long steps = 200) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.5, 0.9, 0.99};
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 6, 3);
        double gamma = gammas[i % 3];
        ValueVec vstar = mvi::discounted_optimal(m, gamma).v_star;
        ValueVec x0 = random_value_vec(rng, m.n_states, -5.0, 5.0);
        double dist = mvi::sup_dist(x0, vstar);
        mvi::SolveReport rep = mvi::halpern_then_picard(mvi::optimality_operator(m, gamma), x0, steps);
        long E = mvi::detail::effective_horizon_floor(gamma) - 1;
        double pow_gamma = 1.0;
        double geo_sum = 1.0;
        for (long t = 0; t <= steps; ++t) {
            if (t > 0) {
                pow_gamma *= gamma;
                geo_sum += pow_gamma;
            }
            double envelope = 8.0 * std::exp(1.0) * pow_gamma / geo_sum * dist;
            if (!holds(rep.trace.residual_seq[t], envelope))
                return fail("switchover envelope failed, case ", i, ", gamma ", gamma, ", t ", t,
                            ": ", rep.trace.residual_seq[t], " vs ", envelope);
            if (t <= E && !holds(rep.trace.residual_seq[t], 4.0 / static_cast<double>(t + 1) * dist))
                return fail("anchored-phase rate failed, case ", i, ", t ", t);
        }
    }
    return {};
}

/// Rescaled undiscounted Picard approximates V*_gamma at rate
/// 2 M / (t (1-gamma)) for t up to the effective horizon.
inline std::string check_warm_start_value_error(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.9, 0.99};
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        double gamma = gammas[i % 2];
        double td = mvi::tdrop(ti.m, ti.gt.rho_star);
        double mspan = std::min(mvi::span(ti.gt.h_both),
                                mvi::span(ti.gt.h_unmod) * (1.0 + td) + td);
        ValueVec vstar = mvi::discounted_optimal(ti.m, gamma).v_star;
        long horizon = mvi::detail::effective_horizon_floor(gamma);
        ValueVec x(ti.m.n_states, 0.0);
        for (long t = 1; t <= horizon; ++t) {
            x = mvi::apply_optimality(ti.m, x, 1.0);
            double err = 0.0;
            for (long s = 0; s < ti.m.n_states; ++s)
                err = std::max(err,
                               std::abs(x[s] / (static_cast<double>(t) * (1.0 - gamma)) - vstar[s]));
            if (!holds(err, 2.0 * mspan / (static_cast<double>(t) * (1.0 - gamma))))
                return fail("warm-start value error failed, case ", i, ", t ", t);
        }
    }
    return {};
}

/// |V*_gamma - rho*/(1-gamma)| <= M for gamma in {0.9, 0.99, 0.999}.
inline std::string check_gain_approximation(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.9, 0.99, 0.999};
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        double td = mvi::tdrop(ti.m, ti.gt.rho_star);
        double span_unmod = mvi::span(ti.gt.h_unmod);
        double bound = std::min(mvi::span(ti.gt.h_both), span_unmod + td + span_unmod * td);
        double gamma = gammas[i % 3];
        ValueVec vstar = mvi::discounted_optimal(ti.m, gamma).v_star;
        double err = 0.0;
        for (long s = 0; s < ti.m.n_states; ++s)
            err = std::max(err, std::abs(vstar[s] - ti.gt.rho_star[s] / (1.0 - gamma)));
        if (!holds(err, bound))
            return fail("discounted gain approximation failed, case ", i, ", gamma ", gamma);
    }
    return {};
}

/// The end-to-end multichain solve meets its certified suboptimality
/// bound, with and without extra budget.
inline std::string check_multichain_theorem(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        long n = 2 + static_cast<long>(rng.next_below(40));
        double extra_k = static_cast<double>(rng.next_below(3));
        mvi::SolveReport rep = mvi::solve_multichain(ti.m, n, extra_k, &ti.gt);
        if (rep.certified.empty() || !rep.certified.front().pass)
            return fail("multichain suboptimality bound failed, case ", i, ", n ", n, ", k ",
                        extra_k);
    }
    return {};
}

/// The discounted baseline meets its certified suboptimality bound.
inline std::string check_baseline_theorem(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        long n = 4 + static_cast<long>(rng.next_below(300));
        double b = mvi::transient_time_bound(ti.m).b;
        mvi::SolveReport rep = mvi::dmdp_baseline(ti.m, n, &ti.gt, b);
        if (rep.certified.empty() || !rep.certified.front().pass)
            return fail("baseline suboptimality bound failed, case ", i, ", n ", n);
    }
    return {};
}

/// Every generator output revalidates and survives a save/load round trip
/// byte-identically, across random generator parameters.
inline std::string check_generator_outputs(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m;
        switch (i % 3) {
        case 0:
            m = mvi::gen_mkt(1 + static_cast<long>(rng.next_below(5)),
                             1 + static_cast<long>(rng.next_below(6)),
                             0.05 + 0.3 * rng.next_double(), rng.next_u64());
            break;
        case 1:
            m = mvi::gen_four_state(0.05 + 0.9 * rng.next_double());
            break;
        default:
            m = mvi::gen_random_multichain(1 + static_cast<long>(rng.next_below(3)),
                                           1 + static_cast<long>(rng.next_below(3)),
                                           1 + static_cast<long>(rng.next_below(2)),
                                           0.5 * rng.next_double(), rng.next_u64());
            break;
        }
        try {
            mvi::validate(m);
        } catch (const mvi::Error& e) {
            return fail("generated instance failed validation, case ", i, ": ", e.what());
        }
        const std::string bytes = mvi::save(m);
        if (mvi::save(mvi::load(bytes)) != bytes)
            return fail("save/load round trip not byte-stable, case ", i);
    }
    return {};
}

/// The gain-suboptimality decomposition matches the directly measured gain
/// error up to float noise, and its implied inequality holds, on random
/// (instance, policy, comparison vector) triples.
inline std::string check_identity_residual(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        const Mdp m = random_mdp(rng, 8, 3);
        const mvi::GroundTruth gt = mvi::compute_ground_truth(m);
        const Policy pi = random_policy(rng, m, i);
        const ValueVec h = random_value_vec(rng, m.n_states, -5.0, 5.0);
        const mvi::PerformanceDifference pd = mvi::performance_difference(m, pi, h, gt);
        if (pd.identity_residual > 1e-8)
            return fail("identity residual ", pd.identity_residual, ", case ", i);
        if (!pd.corollary.pass)
            return fail("decomposition corollary failed, case ", i, ", margin ",
                        pd.corollary.margin);
    }
    return {};
}

/// All reduction forms hold at the exact discounted optimum and for greedy
/// policies of perturbed value vectors.
inline std::string check_reduction_bounds(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    const double gammas[] = {0.4, 0.6, 0.9, 0.99};
    for (int i = 0; i < cases; ++i) {
        TruthInstance ti = random_truth_instance(rng, i);
        const double gamma = gammas[i % 4];
        const mvi::DiscountedOptimum opt = mvi::discounted_optimal(ti.m, gamma);
        auto checks = mvi::reduction_bound(ti.m, opt.v_star, gamma, opt.policy, 0.0, ti.gt);
        if (checks.size() != (gamma >= 0.5 ? 3u : 2u))
            return fail("unexpected reduction check count ", checks.size(), ", case ", i);
        for (const auto& c : checks)
            if (!c.pass) return fail(c.label, " failed at the optimum, case ", i);
        ValueVec v = opt.v_star;
        const ValueVec noise = random_value_vec(rng, ti.m.n_states, -1.0, 1.0);
        for (std::size_t s = 0; s < v.size(); ++s) v[s] += noise[s];
        const Policy greedy_pi = mvi::greedy(ti.m, v, gamma);
        for (const auto& c : mvi::reduction_bound(ti.m, v, gamma, greedy_pi, 0.0, ti.gt))
            if (!c.pass) return fail(c.label, " failed for a perturbed value, case ", i);
    }
    return {};
}

/// load(save(m)) equals m field by field on random models.
inline std::string check_roundtrip_property(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        Mdp m = random_mdp(rng, 6, 3);
        if (i % 3 == 0) m.name = "instance-" + std::to_string(i);
        Mdp back = mvi::load(mvi::save(m));
        if (back.n_states != m.n_states || back.name != m.name)
            return fail("round trip changed header fields, case ", i);
        for (long s = 0; s < m.n_states; ++s) {
            if (back.num_actions(s) != m.num_actions(s))
                return fail("round trip changed action count, case ", i);
            for (long a = 0; a < m.num_actions(s); ++a) {
                const auto& x = m.actions[s][a];
                const auto& y = back.actions[s][a];
                if (x.reward != y.reward)
                    return fail("round trip changed a reward, case ", i);
                for (long j = 0; j < m.n_states; ++j)
                    if (x.probs[static_cast<std::size_t>(j)] !=
                        y.probs[static_cast<std::size_t>(j)])
                        return fail("round trip changed a probability, case ", i);
            }
        }
    }
    return {};
}

} // namespace mvi_test
