// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "mdp.hpp"
#include "rng.hpp"

namespace mvi {

/// gen_four_state needs eps in (0,1) to keep the reward 1-eps inside [0,1).
class EpsOutOfRange : public Error {
  public:
    explicit EpsOutOfRange(double eps)
        : Error("eps is " + std::to_string(eps) + ", expected a value in (0,1)") {}
};

// *******************************************************
// Hard-instance family M(k, T, eps)
// *******************************************************

/**
Generates the hard instance M(k, T, eps): state 0 is absorbing with reward
(cycle mean) - eps; states 1..k carry a "good" action (index 0) following a
single k-cycle and a "bad" action (index 1) with reward 1 that falls into
state 0 with probability 1/T and stays put otherwise.

Good-cycle rewards are 0.5 or 1.0 with equal probability from a SplitMix64
stream, so generation is bit-reproducible for a fixed seed. (The construction
is usually written with rewards 0 or 0.5; shifting the support up by 1/2
keeps the absorbing reward inside [0,1] for every seed whenever eps <= 1/2.
The shift leaves the quantities the instance exhibits unchanged: the gain
gap eps/T, the gain-dropping time T, and the persistent fixed-point-error
plateau of value iteration. The plateau is structural — once the iterates
follow the cycle, the residual at state s is the deviation of the reward t
steps ahead from the cycle mean, and some state always attains the maximal
deviation, so the sup-norm error stays at that level forever instead of
decaying.)

\param k    number of cycle states, k >= 1
\param T    expected time the bad action needs to reach state 0, T >= 1
\param eps  gain penalty of the absorbing state, eps > 0
\param seed PRNG seed for the good rewards

\throws RewardRangeError if eps exceeds the realized cycle mean, which would
        push the absorbing reward below 0
*/
inline Mdp gen_mkt(long k, long T, double eps, std::uint64_t seed) {
    if (k < 1 || T < 1 || !(eps > 0.0))
        throw Error("gen_mkt requires k >= 1, T >= 1, eps > 0");
    SplitMix64 rng(seed);
    std::vector<double> good(static_cast<std::size_t>(k));
    double mean = 0.0;
    for (double& r : good) {
        r = (rng.next_u64() & 1ULL) ? 1.0 : 0.5;
        mean += r;
    }
    mean /= static_cast<double>(k);
    if (mean - eps < 0.0) throw RewardRangeError(0, 0, mean - eps);

    Mdp m;
    m.name = "mkt(k=" + std::to_string(k) + ",T=" + std::to_string(T) + ")";
    m.n_states = k + 1;
    m.actions.resize(static_cast<std::size_t>(k + 1));

    Action absorb;
    absorb.probs.assign(static_cast<std::size_t>(k + 1), 0.0);
    absorb.probs[0] = 1.0;
    absorb.reward = mean - eps;
    m.actions[0].push_back(std::move(absorb));

    for (long s = 1; s <= k; ++s) {
        Action good_act;
        good_act.probs.assign(static_cast<std::size_t>(k + 1), 0.0);
        good_act.probs[static_cast<std::size_t>(s == k ? 1 : s + 1)] = 1.0;
        good_act.reward = good[static_cast<std::size_t>(s - 1)];

        Action bad_act;
        bad_act.probs.assign(static_cast<std::size_t>(k + 1), 0.0);
        bad_act.probs[0] = 1.0 / static_cast<double>(T);
        bad_act.probs[static_cast<std::size_t>(s)] = 1.0 - 1.0 / static_cast<double>(T);
        snap_distribution(bad_act.probs);
        bad_act.reward = 1.0;

        m.actions[static_cast<std::size_t>(s)].push_back(std::move(good_act));
        m.actions[static_cast<std::size_t>(s)].push_back(std::move(bad_act));
    }
    return validate(m);
}

/// Optimal gain of a generated M(k,T,eps), read off analytically: the cycle
/// mean at states 1..k and the absorbing reward at state 0.
inline ValueVec mkt_rho_star(const Mdp& m) {
    ValueVec rho(static_cast<std::size_t>(m.n_states));
    double mean = 0.0;
    for (long s = 1; s < m.n_states; ++s) mean += m.actions[s][0].reward;
    mean /= static_cast<double>(m.n_states - 1);
    rho[0] = m.actions[0][0].reward;
    for (long s = 1; s < m.n_states; ++s) rho[static_cast<std::size_t>(s)] = mean;
    return rho;
}

// *******************************************************
// Four-state counterexample
// *******************************************************

/**
Generates the four-state instance with three absorbing states of rewards 1,
1-eps and 0 (states 0..2 here) plus a fourth state choosing between them:
action 0 moves to state 0 with reward 0, action 1 moves to state 1 with
reward 1, action 2 moves to state 2 with reward 0.

Its optimal gain is [1, 1-eps, 0, 1], the bias of the Blackwell-optimal
policy is [0, 0, 0, -1] (span 1), the minimal gain gap is eps, and the
gain-dropping time is 1, yet every solution of the modified optimality
equations has span at least 1/eps.

\throws EpsOutOfRange unless 0 < eps < 1
*/
inline Mdp gen_four_state(double eps) {
    if (!(eps > 0.0) || eps >= 1.0) throw EpsOutOfRange(eps);
    auto to = [](long j) {
        Action a;
        a.probs.assign(4, 0.0);
        a.probs[static_cast<std::size_t>(j)] = 1.0;
        return a;
    };
    Mdp m;
    m.name = "four-state(eps=" + std::to_string(eps) + ")";
    m.n_states = 4;
    m.actions.resize(4);
    Action s0 = to(0);
    s0.reward = 1.0;
    Action s1 = to(1);
    s1.reward = 1.0 - eps;
    Action s2 = to(2);
    s2.reward = 0.0;
    m.actions[0].push_back(std::move(s0));
    m.actions[1].push_back(std::move(s1));
    m.actions[2].push_back(std::move(s2));
    Action a0 = to(0);
    a0.reward = 0.0;
    Action a1 = to(1);
    a1.reward = 1.0;
    Action a2 = to(2);
    a2.reward = 0.0;
    m.actions[3].push_back(std::move(a0));
    m.actions[3].push_back(std::move(a1));
    m.actions[3].push_back(std::move(a2));
    return validate(m);
}

/// Optimal gain of gen_four_state(eps).
inline ValueVec four_state_rho_star(double eps) { return {1.0, 1.0 - eps, 0.0, 1.0}; }

// *******************************************************
// Random multichain instances
// *******************************************************

/**
Generates a random multichain MDP: n_components closed blocks of states_per
states whose rows are strictly positive inside the block (irreducible under
every policy), plus, when n_components >= 2, a layer of states_per transient
states. Each transient action places leak_prob of its mass on a random state
of a randomly chosen block and spreads the rest over the transient layer, so
different actions route to different components. Rewards are uniform on
[0,1]. Everything is drawn from one SplitMix64 stream; generation is
bit-reproducible for a fixed seed.

\param n_components number of closed components, >= 1
\param states_per   states per component (and in the transient layer), >= 1
\param actions_per  actions per state, >= 1
\param leak_prob    transition mass a transient action sends into its target
                    component, in [0,1)
*/
inline Mdp gen_random_multichain(long n_components, long states_per, long actions_per,
                                 double leak_prob, std::uint64_t seed) {
    if (n_components < 1 || states_per < 1 || actions_per < 1 || leak_prob < 0.0 ||
        leak_prob >= 1.0)
        throw Error("gen_random_multichain: sizes must be >= 1 and leak_prob in [0,1)");
    SplitMix64 rng(seed);
    const long n_transient = n_components >= 2 ? states_per : 0;
    const long n = n_components * states_per + n_transient;

    Mdp m;
    m.name = "random-multichain(" + std::to_string(n_components) + "x" +
             std::to_string(states_per) + ")";
    m.n_states = n;
    m.actions.resize(static_cast<std::size_t>(n));

    for (long c = 0; c < n_components; ++c) {
        const long base = c * states_per;
        for (long i = 0; i < states_per; ++i) {
            for (long a = 0; a < actions_per; ++a) {
                Action act;
                act.probs.assign(static_cast<std::size_t>(n), 0.0);
                double sum = 0.0;
                for (long j = 0; j < states_per; ++j) {
                    double w = 0.05 + rng.next_double();
                    act.probs[static_cast<std::size_t>(base + j)] = w;
                    sum += w;
                }
                for (long j = 0; j < states_per; ++j)
                    act.probs[static_cast<std::size_t>(base + j)] /= sum;
                snap_distribution(act.probs);
                act.reward = rng.next_double();
                m.actions[static_cast<std::size_t>(base + i)].push_back(std::move(act));
            }
        }
    }

    const long tbase = n_components * states_per;
    for (long i = 0; i < n_transient; ++i) {
        for (long a = 0; a < actions_per; ++a) {
            Action act;
            act.probs.assign(static_cast<std::size_t>(n), 0.0);
            long block = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n_components)));
            long target = block * states_per +
                          static_cast<long>(rng.next_below(static_cast<std::uint64_t>(states_per)));
            act.probs[static_cast<std::size_t>(target)] = leak_prob;
            double sum = 0.0;
            std::vector<double> w(static_cast<std::size_t>(n_transient));
            for (long j = 0; j < n_transient; ++j) {
                w[static_cast<std::size_t>(j)] = 0.05 + rng.next_double();
                sum += w[static_cast<std::size_t>(j)];
            }
            for (long j = 0; j < n_transient; ++j)
                act.probs[static_cast<std::size_t>(tbase + j)] =
                    (1.0 - leak_prob) * w[static_cast<std::size_t>(j)] / sum;
            snap_distribution(act.probs);
            act.reward = rng.next_double();
            m.actions[static_cast<std::size_t>(tbase + i)].push_back(std::move(act));
        }
    }
    return validate(m);
}

} // namespace mvi
