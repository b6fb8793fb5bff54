// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mvi {

/// Length-|S| real vector (values, gains, biases and the like).
using ValueVec = std::vector<double>;

// *******************************************************
// Errors
// *******************************************************

/// Base class of every exception thrown by this library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A probability row does not sum to 1 within tolerance.
class RowSumError : public Error {
  public:
    long state, action;
    RowSumError(long s, long a, double sum)
        : Error("probability row of state " + std::to_string(s) + ", action " +
                std::to_string(a) + " sums to " + std::to_string(sum) + ", expected 1"),
          state(s), action(a) {}
};

/// A reward lies outside [0,1].
class RewardRangeError : public Error {
  public:
    long state, action;
    RewardRangeError(long s, long a, double reward)
        : Error("reward of state " + std::to_string(s) + ", action " + std::to_string(a) +
                " is " + std::to_string(reward) + ", expected a value in [0,1]"),
          state(s), action(a) {}
};

/// A state has no actions.
class EmptyActionSet : public Error {
  public:
    long state;
    explicit EmptyActionSet(long s)
        : Error("state " + std::to_string(s) + " has an empty action set"), state(s) {}
};

/// Malformed input document; the message carries a line number or field path.
class ParseError : public Error {
  public:
    explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

/// Two vectors that must have equal length do not.
class LengthMismatch : public Error {
  public:
    LengthMismatch(std::size_t a, std::size_t b)
        : Error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

/// An operation that needs at least one entry received none.
class EmptyVector : public Error {
  public:
    EmptyVector() : Error("operation undefined on an empty vector") {}
};

/// A policy does not match the MDP it is applied to.
class PolicyMismatch : public Error {
  public:
    explicit PolicyMismatch(const std::string& what) : Error("policy mismatch: " + what) {}
};

// *******************************************************
// Data model
// *******************************************************

/// One action of one state: a transition row and an immediate reward.
struct Action {
    /// Transition probabilities, length n_states, nonnegative, summing to 1.
    std::vector<double> probs;
    /// Immediate reward in [0,1].
    double reward = 0.0;
};

/**
A finite Markov decision process with per-state action lists.

Action sets are ragged: each state carries its own list, so generators that
give different states different numbers of actions need no padding. Instances
are immutable after validation and safe for shared concurrent reads.
*/
struct Mdp {
    long n_states = 0;
    /// actions[s] is the action list of state s; never empty once validated.
    std::vector<std::vector<Action>> actions;
    std::optional<std::string> name;

    long num_actions(long s) const { return static_cast<long>(actions[s].size()); }
};

/// Markovian policy, either a single action per state or a distribution
/// over each state's actions.
struct Policy {
    enum class Kind { Deterministic, Randomized };
    Kind kind = Kind::Deterministic;
    /// Action index per state (Deterministic).
    std::vector<long> det;
    /// Probability vector over each state's actions (Randomized);
    /// rand[s] has one weight per action of state s and sums to 1.
    std::vector<std::vector<double>> rand;

    static Policy deterministic(std::vector<long> choice) {
        Policy p;
        p.kind = Kind::Deterministic;
        p.det = std::move(choice);
        return p;
    }
    static Policy randomized(std::vector<std::vector<double>> weights) {
        Policy p;
        p.kind = Kind::Randomized;
        p.rand = std::move(weights);
        return p;
    }
};

// *******************************************************
// Validation
// *******************************************************

/// Tolerance for probability rows: |sum - 1| must be below this.
inline constexpr double row_sum_tol = 1e-12;

/**
Adjusts a probability row so its left-to-right floating-point sum is exactly
1.0, by absorbing the residue into the largest entry. A no-op on rows that
already sum to 1 exactly, which makes renormalization at load idempotent and
round trips through save/load bit-stable. Used by load() and the instance
generators.
*/
inline void snap_distribution(std::vector<double>& probs) {
    auto total = [&probs] {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    };
    if (total() == 1.0) return;
    std::vector<std::size_t> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&probs](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    for (std::size_t k : order) {
        if (probs[k] <= 0.0) break;
        const double saved = probs[k];
        // One Newton step lands within an ulp or two; a short walk over
        // neighboring doubles then hits the exact sum if this coordinate can.
        probs[k] -= total() - 1.0;
        for (int step = 0; step < 256; ++step) {
            double s = total();
            if (s == 1.0) return;
            probs[k] = std::nextafter(probs[k], s > 1.0 ? 0.0 : 2.0);
            if (probs[k] <= 0.0) break;
        }
        probs[k] = saved;
    }
}

/**
Checks every model invariant and returns the model unchanged.

\throws EmptyActionSet   if some state has no actions
\throws RowSumError      if a probability row is the wrong length, has a
                         negative entry, or does not sum to 1 within 1e-12
\throws RewardRangeError if a reward lies outside [0,1]
*/
inline const Mdp& validate(const Mdp& m) {
    if (m.n_states <= 0 || static_cast<long>(m.actions.size()) != m.n_states)
        throw ParseError("n_states is " + std::to_string(m.n_states) + " but " +
                         std::to_string(m.actions.size()) + " state records are present");
    for (long s = 0; s < m.n_states; ++s) {
        if (m.actions[s].empty()) throw EmptyActionSet(s);
        for (long a = 0; a < m.num_actions(s); ++a) {
            const Action& act = m.actions[s][a];
            if (static_cast<long>(act.probs.size()) != m.n_states)
                throw RowSumError(s, a, static_cast<double>(act.probs.size()));
            double sum = 0.0;
            for (double p : act.probs) {
                if (p < 0.0 || !std::isfinite(p)) throw RowSumError(s, a, p);
                sum += p;
            }
            if (std::abs(sum - 1.0) > row_sum_tol) throw RowSumError(s, a, sum);
            if (!std::isfinite(act.reward) || act.reward < 0.0 || act.reward > 1.0)
                throw RewardRangeError(s, a, act.reward);
        }
    }
    return m;
}

/**
Checks that a policy is well formed for the given MDP: the per-state
structure matches, action indices are in range, and randomized rows are
distributions over the state's actions (sum 1 within 1e-12).

\throws PolicyMismatch on any violation
*/
inline const Policy& validate_policy(const Mdp& m, const Policy& pi) {
    if (pi.kind == Policy::Kind::Deterministic) {
        if (static_cast<long>(pi.det.size()) != m.n_states)
            throw PolicyMismatch("deterministic policy has " + std::to_string(pi.det.size()) +
                                 " entries for " + std::to_string(m.n_states) + " states");
        for (long s = 0; s < m.n_states; ++s)
            if (pi.det[s] < 0 || pi.det[s] >= m.num_actions(s))
                throw PolicyMismatch("action index " + std::to_string(pi.det[s]) +
                                     " out of range at state " + std::to_string(s));
    } else {
        if (static_cast<long>(pi.rand.size()) != m.n_states)
            throw PolicyMismatch("randomized policy has " + std::to_string(pi.rand.size()) +
                                 " rows for " + std::to_string(m.n_states) + " states");
        for (long s = 0; s < m.n_states; ++s) {
            if (static_cast<long>(pi.rand[s].size()) != m.num_actions(s))
                throw PolicyMismatch("row " + std::to_string(s) + " has " +
                                     std::to_string(pi.rand[s].size()) + " weights for " +
                                     std::to_string(m.num_actions(s)) + " actions");
            double sum = 0.0;
            for (double w : pi.rand[s]) {
                if (w < 0.0 || !std::isfinite(w))
                    throw PolicyMismatch("negative weight at state " + std::to_string(s));
                sum += w;
            }
            if (std::abs(sum - 1.0) > row_sum_tol)
                throw PolicyMismatch("weights of state " + std::to_string(s) + " sum to " +
                                     std::to_string(sum));
        }
    }
    return pi;
}

// *******************************************************
// Serialization
// *******************************************************

namespace detail {

inline long line_of_byte(const std::string& text, std::size_t byte) {
    long line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

inline void warn_unknown_keys(const nlohmann::ordered_json& obj,
                              std::initializer_list<const char*> known,
                              const std::string& path) {
    for (const auto& item : obj.items()) {
        bool found = false;
        for (const char* k : known)
            if (item.key() == k) { found = true; break; }
        if (!found)
            std::cerr << "warning: ignoring unknown key \"" << item.key() << "\" at " << path
                      << "\n";
    }
}

template <typename T>
T require(const nlohmann::ordered_json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) throw ParseError(path + ": missing key \"" + key + "\"");
    try {
        return obj.at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + "." + key + ": " + e.what());
    }
}

} // namespace detail

/**
Parses an MDP from its JSON document form:

    { "name": str?, "n_states": int,
      "states": [ { "actions": [ { "probs": [f64; n_states], "reward": f64 } ] } ] }

Unknown keys are ignored with a warning on standard error. Probability rows
already summing to 1 within 1e-12 are renormalized to sum to 1 exactly; rows
outside tolerance are kept as written so that validate() can report them.

\throws ParseError with a line number (syntax) or field path (structure)
*/
inline Mdp load(const std::string& bytes) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("line " + std::to_string(detail::line_of_byte(bytes, e.byte)) + ": " +
                         e.what());
    }
    if (!doc.is_object()) throw ParseError("top level: expected an object");
    detail::warn_unknown_keys(doc, {"name", "n_states", "states"}, "top level");

    Mdp m;
    m.n_states = detail::require<long>(doc, "n_states", "top level");
    if (doc.contains("name")) m.name = detail::require<std::string>(doc, "name", "top level");

    if (!doc.contains("states")) throw ParseError("top level: missing key \"states\"");
    const auto& states = doc.at("states");
    if (!states.is_array()) throw ParseError("states: expected an array");
    m.actions.reserve(states.size());
    for (std::size_t s = 0; s < states.size(); ++s) {
        const std::string spath = "states[" + std::to_string(s) + "]";
        if (!states[s].is_object()) throw ParseError(spath + ": expected an object");
        detail::warn_unknown_keys(states[s], {"actions"}, spath);
        if (!states[s].contains("actions"))
            throw ParseError(spath + ": missing key \"actions\"");
        const auto& acts = states[s].at("actions");
        if (!acts.is_array()) throw ParseError(spath + ".actions: expected an array");
        std::vector<Action> list;
        list.reserve(acts.size());
        for (std::size_t a = 0; a < acts.size(); ++a) {
            const std::string apath = spath + ".actions[" + std::to_string(a) + "]";
            if (!acts[a].is_object()) throw ParseError(apath + ": expected an object");
            detail::warn_unknown_keys(acts[a], {"probs", "reward"}, apath);
            Action act;
            act.probs = detail::require<std::vector<double>>(acts[a], "probs", apath);
            act.reward = detail::require<double>(acts[a], "reward", apath);
            double sum = 0.0;
            for (double p : act.probs) sum += p;
            if (std::isfinite(sum) && sum > 0.0 && std::abs(sum - 1.0) <= row_sum_tol)
                snap_distribution(act.probs);
            list.push_back(std::move(act));
        }
        m.actions.push_back(std::move(list));
    }
    return m;
}

/// Serializes an MDP back to its JSON document form. Doubles are written
/// with shortest round-trip precision, so load(save(m)) is value-exact.
inline std::string save(const Mdp& m) {
    nlohmann::ordered_json doc;
    if (m.name) doc["name"] = *m.name;
    doc["n_states"] = m.n_states;
    auto& states = doc["states"] = nlohmann::ordered_json::array();
    for (const auto& list : m.actions) {
        nlohmann::ordered_json acts = nlohmann::ordered_json::array();
        for (const Action& a : list)
            acts.push_back({{"probs", a.probs}, {"reward", a.reward}});
        states.push_back({{"actions", std::move(acts)}});
    }
    return doc.dump(2) + "\n";
}

// *******************************************************
// Seminorms
// *******************************************************

/// Sup norm: the largest absolute entry.
inline double sup_norm(const ValueVec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/**
Sup distance between two vectors of equal length.
\throws LengthMismatch if the lengths differ
*/
inline double sup_dist(const ValueVec& u, const ValueVec& v) {
    if (u.size() != v.size()) throw LengthMismatch(u.size(), v.size());
    double m = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u[i] - v[i]));
    return m;
}

/**
Span seminorm max(v) - min(v). Invariant under constant shifts and at most
twice the sup norm.
\throws EmptyVector on an empty input
*/
inline double span(const ValueVec& v) {
    if (v.empty()) throw EmptyVector();
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

} // namespace mvi
