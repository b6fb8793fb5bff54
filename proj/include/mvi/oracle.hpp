// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include <atomic>
#include <limits>
#include <thread>

#include "bellman.hpp"
#include "chain.hpp"

namespace mvi {

/// The deterministic-policy space exceeds the enumeration cap.
class EnumerationTooLarge : public Error {
  public:
    unsigned long long size, cap;
    EnumerationTooLarge(unsigned long long size_, unsigned long long cap_)
        : Error("policy space of size " + std::to_string(size_) +
                " exceeds the enumeration cap " + std::to_string(cap_)),
          size(size_), cap(cap_) {}
};

/// No enumerated gain-optimal policy passed the unmodified-equation check.
class NoReferenceFound : public Error {
  public:
    explicit NoReferenceFound(const std::string& report)
        : Error("no reference policy found: " + report) {}
};

/// construct_h_both received a nonpositive gain gap.
class DegenerateDelta : public Error {
  public:
    explicit DegenerateDelta(double delta)
        : Error("gain gap " + std::to_string(delta) + " is not positive") {}
};

/// Outcome of an optimality-equation check: overall verdict plus the worst
/// violation recorded per state.
struct EquationCheck {
    bool pass = false;
    ValueVec slack;
    double worst() const { return slack.empty() ? 0.0 : sup_norm(slack); }
};

/// Default bound on |Pi^MD| for the exhaustive operations.
inline constexpr unsigned long long default_enumeration_cap = 10'000'000ULL;

namespace detail {

/// Number of deterministic policies, saturating at 2^63.
inline unsigned long long policy_space_size(const Mdp& m) {
    unsigned long long total = 1;
    for (long s = 0; s < m.n_states; ++s) {
        unsigned long long a = static_cast<unsigned long long>(m.num_actions(s));
        if (total > (1ULL << 63) / a) return 1ULL << 63;
        total *= a;
    }
    return total;
}

/// Decodes enumeration index -> action choice per state; state 0 is the
/// least significant digit, which fixes the enumeration order everywhere.
inline void decode_policy(const Mdp& m, unsigned long long index, std::vector<long>& det) {
    det.resize(static_cast<std::size_t>(m.n_states));
    for (long s = 0; s < m.n_states; ++s) {
        unsigned long long a = static_cast<unsigned long long>(m.num_actions(s));
        det[static_cast<std::size_t>(s)] = static_cast<long>(index % a);
        index /= a;
    }
}

/// Assembles the chain of a deterministic policy directly.
inline void assemble_det(const Mdp& m, const std::vector<long>& det, Eigen::MatrixXd& P,
                         Eigen::VectorXd& r) {
    const long n = m.n_states;
    P.resize(n, n);
    r.resize(n);
    for (long s = 0; s < n; ++s) {
        const Action& a = m.actions[s][det[s]];
        r(s) = a.reward;
        for (long j = 0; j < n; ++j) P(s, j) = a.probs[j];
    }
}

/// Runs fn(chunk_begin, chunk_end) over [0, total) split into fixed chunks,
/// in parallel, and hands the per-chunk results to merge() in chunk order.
/// The fixed chunk grid plus ordered merging keeps every reduction
/// deterministic regardless of the worker count.
template <typename Chunk, typename Merge>
void chunked_parallel(unsigned long long total, Chunk fn, Merge merge) {
    constexpr unsigned long long chunk_size = 8192;
    const unsigned long long n_chunks = (total + chunk_size - 1) / chunk_size;
    const unsigned n_workers =
        std::max(1u, std::min(std::thread::hardware_concurrency(),
                              static_cast<unsigned>(std::min<unsigned long long>(n_chunks, 64))));
    using Result = decltype(fn(0ULL, 0ULL));
    std::vector<Result> results(static_cast<std::size_t>(n_chunks));
    std::atomic<unsigned long long> next{0};
    auto worker = [&] {
        for (;;) {
            unsigned long long c = next.fetch_add(1);
            if (c >= n_chunks) return;
            unsigned long long lo = c * chunk_size;
            unsigned long long hi = std::min(total, lo + chunk_size);
            results[static_cast<std::size_t>(c)] = fn(lo, hi);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& res : results) merge(res);
}

} // namespace detail

// *******************************************************
// Optimal gain by enumeration
// *******************************************************

/// Result of optimal_gain_bruteforce: the entrywise-optimal gain and every
/// enumerated policy attaining it at some state.
struct BruteForceGain {
    ValueVec rho_star;
    std::vector<Policy> optimal_policies;
    unsigned long long enumerated = 0;
};

/**
Computes the optimal gain rho*(s) = max_pi rho^pi(s) by enumerating all
deterministic policies (the maximum is attained on that class). Enumeration
runs in fixed-size chunks across threads with an ordered merge, so the
result does not depend on the worker count. A second pass collects the
policies whose gain matches rho* somewhere (within 1e-10).

\throws EnumerationTooLarge if the policy space exceeds cap
*/
inline BruteForceGain optimal_gain_bruteforce(const Mdp& m,
                                              unsigned long long cap = default_enumeration_cap) {
    const unsigned long long total = detail::policy_space_size(m);
    if (total > cap) throw EnumerationTooLarge(total, cap);
    const long n = m.n_states;

    BruteForceGain out;
    out.enumerated = total;
    out.rho_star.assign(static_cast<std::size_t>(n),
                        -std::numeric_limits<double>::infinity());
    detail::chunked_parallel(
        total,
        [&m, n](unsigned long long lo, unsigned long long hi) {
            ValueVec best(static_cast<std::size_t>(n),
                          -std::numeric_limits<double>::infinity());
            std::vector<long> det;
            Eigen::MatrixXd P;
            Eigen::VectorXd r;
            for (unsigned long long i = lo; i < hi; ++i) {
                detail::decode_policy(m, i, det);
                detail::assemble_det(m, det, P, r);
                ValueVec g = detail::gain_of_chain(P, r);
                for (long s = 0; s < n; ++s)
                    best[static_cast<std::size_t>(s)] =
                        std::max(best[static_cast<std::size_t>(s)],
                                 g[static_cast<std::size_t>(s)]);
            }
            return best;
        },
        [&out, n](const ValueVec& best) {
            for (long s = 0; s < n; ++s)
                out.rho_star[static_cast<std::size_t>(s)] =
                    std::max(out.rho_star[static_cast<std::size_t>(s)],
                             best[static_cast<std::size_t>(s)]);
        });

    detail::chunked_parallel(
        total,
        [&m, &out, n](unsigned long long lo, unsigned long long hi) {
            std::vector<std::vector<long>> hits;
            std::vector<long> det;
            Eigen::MatrixXd P;
            Eigen::VectorXd r;
            for (unsigned long long i = lo; i < hi; ++i) {
                detail::decode_policy(m, i, det);
                detail::assemble_det(m, det, P, r);
                ValueVec g = detail::gain_of_chain(P, r);
                for (long s = 0; s < n; ++s)
                    if (g[static_cast<std::size_t>(s)] >=
                        out.rho_star[static_cast<std::size_t>(s)] - 1e-10) {
                        hits.push_back(det);
                        break;
                    }
            }
            return hits;
        },
        [&out](const std::vector<std::vector<long>>& hits) {
            for (const auto& det : hits)
                out.optimal_policies.push_back(Policy::deterministic(det));
        });
    return out;
}

// *******************************************************
// Discounted optimum
// *******************************************************

/// Result of discounted_optimal: the fixed point of T_gamma and an optimal
/// deterministic policy.
struct DiscountedOptimum {
    ValueVec v_star;
    Policy policy;
};

/**
Exact policy iteration for gamma < 1: evaluate by solving
(I - gamma P_pi) V = r_pi, improve greedily with ties kept on the incumbent
action, stop when the policy repeats. The returned value satisfies
residual_discounted(V) <= 1e-10 / (1 - gamma).

\throws GammaOutOfRange unless 0 < gamma < 1
*/
inline DiscountedOptimum discounted_optimal(const Mdp& m, double gamma) {
    if (!(gamma > 0.0) || gamma >= 1.0) throw GammaOutOfRange(gamma);
    const long n = m.n_states;
    std::vector<long> det(static_cast<std::size_t>(n), 0);
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    ValueVec V(static_cast<std::size_t>(n), 0.0);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    for (int round = 0; round < 100000; ++round) {
        detail::assemble_det(m, det, P, r);
        Eigen::VectorXd v = detail::checked_lu(I - gamma * P).solve(r);
        V.assign(v.data(), v.data() + n);

        bool changed = false;
        for (long s = 0; s < n; ++s) {
            long arg = det[static_cast<std::size_t>(s)];
            double incumbent = detail::backup(m.actions[s][arg], V, gamma);
            double best = incumbent;
            for (long a = 0; a < m.num_actions(s); ++a) {
                double q = detail::backup(m.actions[s][a], V, gamma);
                if (q > best) {
                    best = q;
                    arg = a;
                }
            }
            if (arg != det[static_cast<std::size_t>(s)]) {
                det[static_cast<std::size_t>(s)] = arg;
                changed = true;
            }
        }
        if (!changed) return {V, Policy::deterministic(det)};
    }
    throw Error("policy iteration failed to settle");
}

// *******************************************************
// Optimality-equation checkers
// *******************************************************

namespace detail {

inline double rho_backup(const Mdp& m, long s, long a, const ValueVec& rho) {
    double dot = 0.0;
    const auto& probs = m.actions[s][a].probs;
    for (std::size_t j = 0; j < probs.size(); ++j) dot += probs[j] * rho[j];
    return dot;
}

} // namespace detail

/**
Checks the unmodified multichain optimality equations:
max_a P_sa rho = rho(s), and the restricted equation
max over {a : |P_sa rho - rho(s)| <= tol_eq} of r(s,a) + P_sa h
= rho(s) + h(s), with tol_eq = 1e-9 max(1, sup_norm(rho)). The returned
slack holds each state's worst violation.
*/
inline EquationCheck check_unmodified(const Mdp& m, const ValueVec& rho, const ValueVec& h,
                                      double tol) {
    if (static_cast<long>(rho.size()) != m.n_states || rho.size() != h.size())
        throw LengthMismatch(rho.size(), h.size());
    const double tol_eq = 1e-9 * std::max(1.0, sup_norm(rho));
    EquationCheck out;
    out.slack.assign(rho.size(), 0.0);
    for (long s = 0; s < m.n_states; ++s) {
        double best_rho = -std::numeric_limits<double>::infinity();
        for (long a = 0; a < m.num_actions(s); ++a)
            best_rho = std::max(best_rho, detail::rho_backup(m, s, a, rho));
        double v1 = std::abs(best_rho - rho[static_cast<std::size_t>(s)]);

        double best_h = -std::numeric_limits<double>::infinity();
        for (long a = 0; a < m.num_actions(s); ++a) {
            if (std::abs(detail::rho_backup(m, s, a, rho) -
                         rho[static_cast<std::size_t>(s)]) > tol_eq)
                continue;
            best_h = std::max(best_h, detail::backup(m.actions[s][a], h, 1.0));
        }
        double v2 = std::isfinite(best_h)
                        ? std::abs(best_h - (rho[static_cast<std::size_t>(s)] +
                                             h[static_cast<std::size_t>(s)]))
                        : std::numeric_limits<double>::infinity();
        out.slack[static_cast<std::size_t>(s)] = std::max(v1, v2);
    }
    out.pass = sup_norm(out.slack) <= tol;
    return out;
}

/// Checks the modified equations: max_a P_sa rho = rho(s) and
/// T(h) = rho + h, entrywise within tol.
inline EquationCheck check_modified(const Mdp& m, const ValueVec& rho, const ValueVec& h,
                                    double tol) {
    if (static_cast<long>(rho.size()) != m.n_states || rho.size() != h.size())
        throw LengthMismatch(rho.size(), h.size());
    EquationCheck out;
    out.slack.assign(rho.size(), 0.0);
    ValueVec Th = apply_optimality(m, h, 1.0);
    for (long s = 0; s < m.n_states; ++s) {
        double best_rho = -std::numeric_limits<double>::infinity();
        for (long a = 0; a < m.num_actions(s); ++a)
            best_rho = std::max(best_rho, detail::rho_backup(m, s, a, rho));
        double v1 = std::abs(best_rho - rho[static_cast<std::size_t>(s)]);
        double v2 = std::abs(Th[static_cast<std::size_t>(s)] -
                             rho[static_cast<std::size_t>(s)] -
                             h[static_cast<std::size_t>(s)]);
        out.slack[static_cast<std::size_t>(s)] = std::max(v1, v2);
    }
    out.pass = sup_norm(out.slack) <= tol;
    return out;
}

// *******************************************************
// Blackwell reference and solution construction
// *******************************************************

/// Result of blackwell_reference.
struct BlackwellReference {
    Policy policy;
    ValueVec h_unmod;
};

/**
Finds a reference gain-optimal policy whose bias solves the unmodified
equations with rho*: scans deterministic policies in enumeration order,
keeps those with sup_dist(rho^pi, rho*) <= 1e-9, and returns the first
whose (rho*, h^pi) passes check_unmodified at 1e-8.

\throws EnumerationTooLarge  if the policy space exceeds cap
\throws NoReferenceFound     if no candidate passes (numerical degeneracy)
*/
inline BlackwellReference blackwell_reference(const Mdp& m, const ValueVec& rho_star,
                                              unsigned long long cap = default_enumeration_cap) {
    const unsigned long long total = detail::policy_space_size(m);
    if (total > cap) throw EnumerationTooLarge(total, cap);
    unsigned long long gain_optimal = 0;
    double best_unmod = std::numeric_limits<double>::infinity();
    std::vector<long> det;
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    for (unsigned long long i = 0; i < total; ++i) {
        detail::decode_policy(m, i, det);
        detail::assemble_det(m, det, P, r);
        ValueVec g = detail::gain_of_chain(P, r);
        if (sup_dist(g, rho_star) > 1e-9) continue;
        ++gain_optimal;
        Policy pi = Policy::deterministic(det);
        ChainAnalysis a = analyze(m, pi);
        EquationCheck chk = check_unmodified(m, rho_star, a.bias, 1e-8);
        if (chk.pass) return {std::move(pi), std::move(a.bias)};
        best_unmod = std::min(best_unmod, chk.worst());
    }
    throw NoReferenceFound(std::to_string(gain_optimal) +
                           " gain-optimal policies at tolerance 1e-9, best unmodified slack " +
                           std::to_string(best_unmod) + " vs tolerance 1e-8");
}

/// Everything the convergence theorems reference about one instance.
struct GroundTruth {
    ValueVec rho_star;
    Policy blackwell_policy;
    ValueVec h_unmod;
    ValueVec h_both;
    /// Minimum gain-optimality gap; +infinity when no action drops gain.
    double delta = std::numeric_limits<double>::infinity();
    /// Tolerances and enumeration sizes that produced this record.
    struct Provenance {
        unsigned long long enumerated_policies = 0;
        unsigned long long enumeration_cap = 0;
        double gain_match_tol = 1e-9;
        double check_tol = 1e-8;
    } provenance;
};

/**
Builds the explicit solution of both optimality-equation families,
h = h_unmod + ((span(h_unmod) + 1) / delta) rho*, from a partially filled
GroundTruth (rho_star, h_unmod and delta must be set). When delta is
+infinity there is nothing to repair and h_unmod itself is returned.

\throws DegenerateDelta if delta <= 0
*/
inline ValueVec construct_h_both(const Mdp& m, const GroundTruth& gt) {
    if (static_cast<long>(gt.h_unmod.size()) != m.n_states)
        throw LengthMismatch(gt.h_unmod.size(), static_cast<std::size_t>(m.n_states));
    if (std::isinf(gt.delta) && gt.delta > 0.0) return gt.h_unmod;
    if (!(gt.delta > 0.0)) throw DegenerateDelta(gt.delta);
    const double c = (span(gt.h_unmod) + 1.0) / gt.delta;
    ValueVec h = gt.h_unmod;
    for (std::size_t s = 0; s < h.size(); ++s) h[s] += c * gt.rho_star[s];
    return h;
}

// *******************************************************
// Simultaneous argmax and restricted commutativity
// *******************************************************

/**
Searches each state for one action within tolerance of both maxima,
max_a P_sa rho and max_a r(s,a) + P_sa h. Returns the deterministic policy
formed by the smallest such index per state, or nothing if some state has
no such action. For a modified solution (rho, h), a policy is returned
exactly when (rho, h) also solves the unmodified family.
*/
inline std::optional<Policy> simultaneous_argmax(const Mdp& m, const ValueVec& rho,
                                                 const ValueVec& h) {
    const double tol_eq = 1e-9 * std::max(1.0, sup_norm(rho));
    const double tol_h = 1e-9 * std::max(1.0, sup_norm(h));
    std::vector<long> det(static_cast<std::size_t>(m.n_states), -1);
    for (long s = 0; s < m.n_states; ++s) {
        double best_rho = -std::numeric_limits<double>::infinity();
        double best_h = -std::numeric_limits<double>::infinity();
        for (long a = 0; a < m.num_actions(s); ++a) {
            best_rho = std::max(best_rho, detail::rho_backup(m, s, a, rho));
            best_h = std::max(best_h, detail::backup(m.actions[s][a], h, 1.0));
        }
        for (long a = 0; a < m.num_actions(s); ++a) {
            if (detail::rho_backup(m, s, a, rho) >= best_rho - tol_eq &&
                detail::backup(m.actions[s][a], h, 1.0) >= best_h - tol_h) {
                det[static_cast<std::size_t>(s)] = a;
                break;
            }
        }
        if (det[static_cast<std::size_t>(s)] < 0) return std::nullopt;
    }
    return Policy::deterministic(std::move(det));
}

/// Outcome of check_restricted_commutativity.
struct CommutativityCheck {
    bool pass = true;
    double worst = 0.0;
    double failing_alpha = 0.0;
};

/**
Verifies T(h + alpha rho*) = h + (alpha + 1) rho* within 1e-8 for each
alpha (default grid {-3, 0, 1, 5, 100}). The identity characterizes
solutions of both optimality-equation families.
*/
inline CommutativityCheck check_restricted_commutativity(
    const Mdp& m, const ValueVec& rho_star, const ValueVec& h,
    const std::vector<double>& alphas = {-3.0, 0.0, 1.0, 5.0, 100.0}) {
    CommutativityCheck out;
    for (double alpha : alphas) {
        ValueVec x = h;
        for (std::size_t s = 0; s < x.size(); ++s) x[s] += alpha * rho_star[s];
        ValueVec Tx = apply_optimality(m, x, 1.0);
        double viol = 0.0;
        for (std::size_t s = 0; s < x.size(); ++s)
            viol = std::max(viol,
                            std::abs(Tx[s] - (h[s] + (alpha + 1.0) * rho_star[s])));
        if (viol > out.worst) {
            out.worst = viol;
            out.failing_alpha = alpha;
        }
        if (viol > 1e-8) out.pass = false;
    }
    return out;
}

} // namespace mvi
