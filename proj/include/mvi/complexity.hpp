// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "oracle.hpp"

namespace mvi {

/// The total-reward iteration for the gain-dropping time hit its sweep cap
/// while still moving; usually a sign that the gap tolerance misclassified
/// an action as gain-dropping.
class NonconvergenceSuspected : public Error {
  public:
    double last_change;
    explicit NonconvergenceSuspected(double change)
        : Error("gain-dropping-time iteration hit the sweep cap with sup-change " +
                std::to_string(change)),
          last_change(change) {}
};

/**
The instance's complexity parameters. The per-policy maps and the overall
transient bound are filled only when the deterministic-policy space fits
the enumeration cap; the gain gap, indicator rewards, and gain-dropping
time never need enumeration.
*/
struct ComplexityReport {
    /// Minimum gain-optimality gap; +infinity when no action drops gain.
    double delta = std::numeric_limits<double>::infinity();
    /// rbar[s][a] = 1 when action a at state s drops gain.
    std::vector<std::vector<double>> rbar;
    /// Worst-case expected number of gain-dropping steps.
    double tdrop = 0.0;
    /// Worst-case expected transient time B (enumeration-gated).
    std::optional<double> b;
    /// Per enumerated deterministic policy, T_drop^pi and B^pi.
    std::vector<std::pair<std::vector<long>, double>> tdrop_pi;
    std::vector<std::pair<std::vector<long>, double>> b_pi;
};

namespace detail {

/// Relative tolerance deciding whether a gap counts as positive.
inline double gap_tolerance(const ValueVec& rho_star) {
    return 1e-9 * std::max(1.0, sup_norm(rho_star));
}

} // namespace detail

// *******************************************************
// Gain gap and indicator rewards
// *******************************************************

/**
Minimum gain-optimality gap: the smallest rho*(s) - P_sa rho* among pairs
where that difference exceeds tol_gap = 1e-9 max(1, sup_norm(rho*));
+infinity when no pair does.
*/
inline double min_gain_gap(const Mdp& m, const ValueVec& rho_star) {
    const double tol_gap = detail::gap_tolerance(rho_star);
    double delta = std::numeric_limits<double>::infinity();
    for (long s = 0; s < m.n_states; ++s)
        for (long a = 0; a < m.num_actions(s); ++a) {
            double gap =
                rho_star[static_cast<std::size_t>(s)] - detail::rho_backup(m, s, a, rho_star);
            if (gap > tol_gap) delta = std::min(delta, gap);
        }
    return delta;
}

/// Indicator reward table rbar(s,a) = 1 when taking a at s drops the
/// optimal gain (the gap exceeds tol_gap), else 0. The tolerance matters:
/// misclassifying a pair silently changes the gain-dropping time.
inline std::vector<std::vector<double>> gain_dropping_reward(const Mdp& m,
                                                             const ValueVec& rho_star) {
    const double tol_gap = detail::gap_tolerance(rho_star);
    std::vector<std::vector<double>> rbar(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s) {
        rbar[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(m.num_actions(s)));
        for (long a = 0; a < m.num_actions(s); ++a) {
            double gap =
                rho_star[static_cast<std::size_t>(s)] - detail::rho_backup(m, s, a, rho_star);
            rbar[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
                gap > tol_gap ? 1.0 : 0.0;
        }
    }
    return rbar;
}

// *******************************************************
// Gain-dropping times
// *******************************************************

/**
Gain-dropping time of one policy: the worst-start expected total reward of
rbar under P_pi, computed as max_s (H_{P_pi} rbar_pi)(s). Gain-dropping
actions are only ever taken on transient states, so the expectation is
finite.
*/
inline double tdrop_policy(const Mdp& m, const Policy& pi, const ValueVec& rho_star) {
    std::vector<std::vector<double>> rbar = gain_dropping_reward(m, rho_star);
    ChainAnalysis a = analyze(m, pi);
    const long n = m.n_states;
    Eigen::VectorXd rbar_pi = Eigen::VectorXd::Zero(n);
    for (long s = 0; s < n; ++s) {
        if (pi.kind == Policy::Kind::Deterministic)
            rbar_pi(s) = rbar[static_cast<std::size_t>(s)]
                             [static_cast<std::size_t>(pi.det[static_cast<std::size_t>(s)])];
        else
            for (long act = 0; act < m.num_actions(s); ++act)
                rbar_pi(s) += pi.rand[static_cast<std::size_t>(s)][static_cast<std::size_t>(act)] *
                              rbar[static_cast<std::size_t>(s)][static_cast<std::size_t>(act)];
    }
    Eigen::VectorXd visits = a.H * rbar_pi;
    return std::max(0.0, visits.maxCoeff());
}

/**
Worst-case gain-dropping time over all policies, solved as the optimal
total-reward value for the indicator reward: monotone value iteration
x_{k+1}(s) = max_a rbar(s,a) + P_sa x_k from zero, stopped when the sweep
changes by less than 1e-12 in sup norm. The limit is finite because
gain-dropping actions force eventual absorption into gain-preserving
behavior.

\throws NonconvergenceSuspected if 10^6 sweeps pass and the iteration is
        still moving by more than 1e-9
*/
inline double tdrop(const Mdp& m, const ValueVec& rho_star) {
    std::vector<std::vector<double>> rbar = gain_dropping_reward(m, rho_star);
    const long n = m.n_states;
    ValueVec x(static_cast<std::size_t>(n), 0.0), next(static_cast<std::size_t>(n));
    double change = 0.0;
    for (long sweep = 0; sweep < 1000000; ++sweep) {
        for (long s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (long a = 0; a < m.num_actions(s); ++a) {
                double dot = 0.0;
                const auto& probs = m.actions[s][a].probs;
                for (std::size_t j = 0; j < probs.size(); ++j) dot += probs[j] * x[j];
                best = std::max(
                    best, rbar[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] + dot);
            }
            next[static_cast<std::size_t>(s)] = best;
        }
        change = sup_dist(next, x);
        x.swap(next);
        if (change < 1e-12) {
            double worst = 0.0;
            for (double v : x) worst = std::max(worst, v);
            return worst;
        }
    }
    if (change > 1e-9) throw NonconvergenceSuspected(change);
    double worst = 0.0;
    for (double v : x) worst = std::max(worst, v);
    return worst;
}

/// Cross-check path for tdrop: max of tdrop_policy over all enumerated
/// deterministic policies.
///
/// \throws EnumerationTooLarge if the policy space exceeds cap
inline double tdrop_bruteforce(const Mdp& m, const ValueVec& rho_star,
                               unsigned long long cap = default_enumeration_cap) {
    const unsigned long long total = detail::policy_space_size(m);
    if (total > cap) throw EnumerationTooLarge(total, cap);
    double worst = 0.0;
    detail::chunked_parallel(
        total,
        [&](unsigned long long lo, unsigned long long hi) {
            double best = 0.0;
            std::vector<long> det;
            for (unsigned long long i = lo; i < hi; ++i) {
                detail::decode_policy(m, i, det);
                best = std::max(best, tdrop_policy(m, Policy::deterministic(det), rho_star));
            }
            return best;
        },
        [&worst](double best) { worst = std::max(worst, best); });
    return worst;
}

// *******************************************************
// Transient-time bound
// *******************************************************

/// Result of transient_time_bound: B^pi per enumerated policy and their
/// maximum B.
struct TransientTimeBound {
    std::vector<std::pair<std::vector<long>, double>> b_pi;
    double b = 0.0;
};

/**
Worst-case expected transient time B = max_pi B^pi over the enumerated
deterministic policies.

\throws EnumerationTooLarge if the policy space exceeds cap
*/
inline TransientTimeBound transient_time_bound(const Mdp& m,
                                               unsigned long long cap = default_enumeration_cap) {
    const unsigned long long total = detail::policy_space_size(m);
    if (total > cap) throw EnumerationTooLarge(total, cap);
    TransientTimeBound out;
    detail::chunked_parallel(
        total,
        [&](unsigned long long lo, unsigned long long hi) {
            std::vector<std::pair<std::vector<long>, double>> part;
            std::vector<long> det;
            for (unsigned long long i = lo; i < hi; ++i) {
                detail::decode_policy(m, i, det);
                part.emplace_back(det, transient_time(m, Policy::deterministic(det)));
            }
            return part;
        },
        [&out](const std::vector<std::pair<std::vector<long>, double>>& part) {
            for (const auto& entry : part) {
                out.b = std::max(out.b, entry.second);
                out.b_pi.push_back(entry);
            }
        });
    return out;
}

// *******************************************************
// Assembled reports
// *******************************************************

/**
Builds the full complexity report for an instance with known optimal gain.
The per-policy maps and B are filled only when the policy space fits cap;
delta, rbar and the gain-dropping time are computed regardless.
*/
inline ComplexityReport complexity_report(const Mdp& m, const ValueVec& rho_star,
                                          unsigned long long cap = default_enumeration_cap) {
    ComplexityReport rep;
    rep.delta = min_gain_gap(m, rho_star);
    rep.rbar = gain_dropping_reward(m, rho_star);
    rep.tdrop = tdrop(m, rho_star);
    if (detail::policy_space_size(m) <= cap) {
        TransientTimeBound ttb = transient_time_bound(m, cap);
        rep.b = ttb.b;
        rep.b_pi = std::move(ttb.b_pi);
        std::vector<long> det;
        for (unsigned long long i = 0; i < detail::policy_space_size(m); ++i) {
            detail::decode_policy(m, i, det);
            rep.tdrop_pi.emplace_back(det,
                                      tdrop_policy(m, Policy::deterministic(det), rho_star));
        }
    }
    return rep;
}

/**
Assembles the ground truth of an instance end to end: optimal gain by
enumeration, Blackwell reference policy and its bias, the minimum gain gap,
and the explicit solution of both equation families.

\throws EnumerationTooLarge, NoReferenceFound as the underlying steps do
*/
inline GroundTruth compute_ground_truth(const Mdp& m,
                                        unsigned long long cap = default_enumeration_cap) {
    BruteForceGain bf = optimal_gain_bruteforce(m, cap);
    BlackwellReference ref = blackwell_reference(m, bf.rho_star, cap);
    GroundTruth gt;
    gt.rho_star = std::move(bf.rho_star);
    gt.blackwell_policy = std::move(ref.policy);
    gt.h_unmod = std::move(ref.h_unmod);
    gt.delta = min_gain_gap(m, gt.rho_star);
    gt.h_both = construct_h_both(m, gt);
    gt.provenance.enumerated_policies = bf.enumerated;
    gt.provenance.enumeration_cap = cap;
    return gt;
}

} // namespace mvi
