// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "mdp.hpp"

namespace mvi {

/// residual_discounted requires gamma strictly below 1.
class GammaOutOfRange : public Error {
  public:
    explicit GammaOutOfRange(double gamma)
        : Error("gamma is " + std::to_string(gamma) + ", expected a value in (0,1)") {}
};

namespace detail {

/// Backup of one action: r(s,a) + gamma * P_{sa} V, accumulated left to
/// right in 64-bit. The fixed order keeps results identical across calls
/// and platforms; no compensated summation by design.
inline double backup(const Action& act, const ValueVec& V, double gamma) {
    double dot = 0.0;
    for (std::size_t j = 0; j < act.probs.size(); ++j) dot += act.probs[j] * V[j];
    return act.reward + gamma * dot;
}

} // namespace detail

// *******************************************************
// Bellman operators
// *******************************************************

/**
Discounted Bellman optimality operator: returns W with
W(s) = max_a r(s,a) + gamma * P_{sa} V. gamma = 1 gives the average-reward
operator T.

\throws LengthMismatch if V has the wrong length
*/
inline ValueVec apply_optimality(const Mdp& m, const ValueVec& V, double gamma) {
    if (static_cast<long>(V.size()) != m.n_states)
        throw LengthMismatch(V.size(), static_cast<std::size_t>(m.n_states));
    ValueVec W(V.size());
    for (long s = 0; s < m.n_states; ++s) {
        double best = detail::backup(m.actions[s][0], V, gamma);
        for (long a = 1; a < m.num_actions(s); ++a)
            best = std::max(best, detail::backup(m.actions[s][a], V, gamma));
        W[static_cast<std::size_t>(s)] = best;
    }
    return W;
}

/**
Bellman evaluation operator of a policy:
W(s) = sum_a pi(a|s) [ r(s,a) + gamma * P_{sa} V ].

\throws LengthMismatch  if V has the wrong length
\throws PolicyMismatch  if pi does not fit the MDP
*/
inline ValueVec apply_evaluation(const Mdp& m, const Policy& pi, const ValueVec& V,
                                 double gamma) {
    if (static_cast<long>(V.size()) != m.n_states)
        throw LengthMismatch(V.size(), static_cast<std::size_t>(m.n_states));
    validate_policy(m, pi);
    ValueVec W(V.size());
    if (pi.kind == Policy::Kind::Deterministic) {
        for (long s = 0; s < m.n_states; ++s)
            W[static_cast<std::size_t>(s)] =
                detail::backup(m.actions[s][pi.det[s]], V, gamma);
    } else {
        for (long s = 0; s < m.n_states; ++s) {
            double acc = 0.0;
            for (long a = 0; a < m.num_actions(s); ++a)
                acc += pi.rand[s][a] * detail::backup(m.actions[s][a], V, gamma);
            W[static_cast<std::size_t>(s)] = acc;
        }
    }
    return W;
}

/**
Greedy policy of V: per state the action maximizing r(s,a) + gamma P_{sa} V,
ties broken by the smallest action index.
*/
inline Policy greedy(const Mdp& m, const ValueVec& V, double gamma) {
    if (static_cast<long>(V.size()) != m.n_states)
        throw LengthMismatch(V.size(), static_cast<std::size_t>(m.n_states));
    std::vector<long> det(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s) {
        long arg = 0;
        double best = detail::backup(m.actions[s][0], V, gamma);
        for (long a = 1; a < m.num_actions(s); ++a) {
            double q = detail::backup(m.actions[s][a], V, gamma);
            if (q > best) {
                best = q;
                arg = a;
            }
        }
        det[static_cast<std::size_t>(s)] = arg;
    }
    return Policy::deterministic(std::move(det));
}

// *******************************************************
// Fixed-point residuals
// *******************************************************

/**
Discounted fixed-point error sup_norm(T_gamma(V) - V).
\throws GammaOutOfRange at gamma = 1 (use residual_average there)
*/
inline double residual_discounted(const Mdp& m, const ValueVec& V, double gamma) {
    if (!(gamma > 0.0) || gamma >= 1.0) throw GammaOutOfRange(gamma);
    return sup_dist(apply_optimality(m, V, gamma), V);
}

/// Average-reward fixed-point error sup_norm(T(V) - V - rho_star).
inline double residual_average(const Mdp& m, const ValueVec& V, const ValueVec& rho_star) {
    if (V.size() != rho_star.size()) throw LengthMismatch(V.size(), rho_star.size());
    ValueVec W = apply_optimality(m, V, 1.0);
    double r = 0.0;
    for (std::size_t s = 0; s < W.size(); ++s)
        r = std::max(r, std::abs(W[s] - V[s] - rho_star[s]));
    return r;
}

} // namespace mvi
