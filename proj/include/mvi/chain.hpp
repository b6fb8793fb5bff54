// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include <Eigen/Dense>

#include "mdp.hpp"

namespace mvi {

/// A linear system that should be regular is numerically singular; the
/// message carries the smallest pivot relative to the matrix sup-norm.
class SingularSystem : public Error {
  public:
    double condition_estimate;
    explicit SingularSystem(double estimate)
        : Error("singular linear system (relative pivot estimate " +
                std::to_string(estimate) + ")"),
          condition_estimate(estimate) {}
};

/// expected_visits was asked about a state that is not transient.
class NotTransient : public Error {
  public:
    long state;
    explicit NotTransient(long s)
        : Error("state " + std::to_string(s) + " is not transient under this policy"),
          state(s) {}
};

/**
Everything the chain of a fixed policy determines: transition matrix and
reward vector, recurrent/transient structure, limiting matrix, deviation
matrix (the Drazin inverse of I - P_pi), gain, bias, and the worst-case
expected time spent in transient states.
*/
struct ChainAnalysis {
    Eigen::MatrixXd P_pi;
    ValueVec r_pi;
    /// Closed strongly-connected components of the support digraph.
    std::vector<std::vector<long>> recurrent_classes;
    /// States outside every recurrent class, ascending.
    std::vector<long> transient_states;
    Eigen::MatrixXd P_inf;
    Eigen::MatrixXd H;
    ValueVec gain;
    ValueVec bias;
    /// Max over start states of the expected hitting time of the recurrent
    /// set; 0 when every state is recurrent.
    double transient_time = 0.0;
};

namespace detail {

/// LU with partial pivoting plus the singularity guard used everywhere in
/// this module: any pivot below 1e-13 times the matrix sup-norm aborts.
inline Eigen::PartialPivLU<Eigen::MatrixXd> checked_lu(const Eigen::MatrixXd& A) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (min_pivot < 1e-13 * scale) throw SingularSystem(min_pivot / scale);
    return lu;
}

/// Assembles P_pi = M_pi P and r_pi = M_pi r for either policy kind.
inline void assemble_chain(const Mdp& m, const Policy& pi, Eigen::MatrixXd& P,
                           Eigen::VectorXd& r) {
    validate_policy(m, pi);
    const long n = m.n_states;
    P = Eigen::MatrixXd::Zero(n, n);
    r = Eigen::VectorXd::Zero(n);
    for (long s = 0; s < n; ++s) {
        for (long a = 0; a < m.num_actions(s); ++a) {
            const double w = pi.kind == Policy::Kind::Deterministic
                                 ? (pi.det[s] == a ? 1.0 : 0.0)
                                 : pi.rand[s][a];
            if (w == 0.0) continue;
            r(s) += w * m.actions[s][a].reward;
            for (long j = 0; j < n; ++j) P(s, j) += w * m.actions[s][a].probs[j];
        }
    }
}

/// Strongly connected components of the support digraph (edges where
/// P > 0 exactly), Tarjan's algorithm with an explicit stack.
inline std::vector<std::vector<long>> strongly_connected(const Eigen::MatrixXd& P) {
    const long n = P.rows();
    std::vector<long> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<long> stack;
    std::vector<std::vector<long>> sccs;
    long counter = 0;

    struct Frame {
        long v;
        long next;
    };
    for (long root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            Frame& f = call.back();
            if (f.next < n) {
                const long w = f.next++;
                if (P(f.v, w) <= 0.0) continue;
                if (index[w] == -1) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                if (low[f.v] == index[f.v]) {
                    std::vector<long> scc;
                    long w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = static_cast<long>(sccs.size());
                        scc.push_back(w);
                    } while (w != f.v);
                    std::sort(scc.begin(), scc.end());
                    sccs.push_back(std::move(scc));
                }
                const long v = f.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }
    return sccs;
}

/// Gain of a fixed chain without the deviation matrix: stationary
/// distribution per closed class plus absorption probabilities. This is the
/// lean path used by policy enumeration, where the full analysis would be
/// dominated by the unneeded fundamental-matrix solve.
inline ValueVec gain_of_chain(const Eigen::MatrixXd& P, const Eigen::VectorXd& r) {
    const long n = P.rows();
    std::vector<std::vector<long>> sccs = detail::strongly_connected(P);
    std::vector<long> comp(n, -1);
    for (std::size_t c = 0; c < sccs.size(); ++c)
        for (long s : sccs[c]) comp[s] = static_cast<long>(c);
    std::vector<char> closed(sccs.size(), 1);
    for (long s = 0; s < n; ++s)
        for (long j = 0; j < n; ++j)
            if (P(s, j) > 0.0 && comp[j] != comp[s]) closed[comp[s]] = 0;

    ValueVec gain(static_cast<std::size_t>(n), 0.0);
    std::vector<char> recurrent(n, 0);
    std::vector<std::vector<long>> classes;
    std::vector<double> class_gain;
    for (std::size_t c = 0; c < sccs.size(); ++c) {
        if (!closed[c]) continue;
        const auto& cls = sccs[c];
        const long k = static_cast<long>(cls.size());
        Eigen::MatrixXd A(k, k);
        for (long i = 0; i < k; ++i)
            for (long j = 0; j < k; ++j)
                A(i, j) = P(cls[j], cls[i]) - (i == j ? 1.0 : 0.0);
        A.row(k - 1).setOnes();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
        b(k - 1) = 1.0;
        Eigen::VectorXd mu = detail::checked_lu(A).solve(b);
        double g = 0.0;
        for (long i = 0; i < k; ++i) g += mu(i) * r(cls[i]);
        for (long s : cls) {
            gain[static_cast<std::size_t>(s)] = g;
            recurrent[s] = 1;
        }
        classes.push_back(cls);
        class_gain.push_back(g);
    }
    std::vector<long> tr;
    for (long s = 0; s < n; ++s)
        if (!recurrent[s]) tr.push_back(s);
    const long t = static_cast<long>(tr.size());
    if (t > 0) {
        const long L = static_cast<long>(classes.size());
        Eigen::MatrixXd IQ(t, t);
        for (long i = 0; i < t; ++i)
            for (long j = 0; j < t; ++j)
                IQ(i, j) = (i == j ? 1.0 : 0.0) - P(tr[i], tr[j]);
        Eigen::MatrixXd Rc = Eigen::MatrixXd::Zero(t, L);
        for (long i = 0; i < t; ++i)
            for (long c = 0; c < L; ++c)
                for (long s : classes[c]) Rc(i, c) += P(tr[i], s);
        Eigen::MatrixXd absorb = detail::checked_lu(IQ).solve(Rc);
        for (long i = 0; i < t; ++i) {
            double g = 0.0;
            for (long c = 0; c < L; ++c) g += absorb(i, c) * class_gain[c];
            gain[static_cast<std::size_t>(tr[i])] = g;
        }
    }
    return gain;
}

} // namespace detail

// *******************************************************
// Chain analysis
// *******************************************************

/**
Analyzes the Markov chain induced by a policy.

Recurrent classes are the closed strongly-connected components of the
support digraph. The limiting matrix is assembled from one stationary
distribution per class, solved from (P_C' - I)x = 0 with the normalization
row replacing the last equation, plus absorption probabilities for the
transient block. The deviation matrix comes from the fundamental-matrix
identity H = (I - P_pi + P_inf)^{-1} - P_inf, which is exact for finite
chains; gain and bias are P_inf r_pi and H r_pi.

\throws SingularSystem if a linear system that should be regular is not
        (numerically); this indicates degenerate input, not a user error
*/
inline ChainAnalysis analyze(const Mdp& m, const Policy& pi) {
    const long n = m.n_states;
    ChainAnalysis out;
    Eigen::VectorXd r;
    detail::assemble_chain(m, pi, out.P_pi, r);
    out.r_pi.assign(r.data(), r.data() + n);

    // Closed SCCs are the recurrent classes.
    std::vector<std::vector<long>> sccs = detail::strongly_connected(out.P_pi);
    std::vector<long> comp(n, -1);
    for (std::size_t c = 0; c < sccs.size(); ++c)
        for (long s : sccs[c]) comp[s] = static_cast<long>(c);
    std::vector<char> closed(sccs.size(), 1);
    for (long s = 0; s < n; ++s)
        for (long j = 0; j < n; ++j)
            if (out.P_pi(s, j) > 0.0 && comp[j] != comp[s]) closed[comp[s]] = 0;
    std::vector<char> recurrent(n, 0);
    for (std::size_t c = 0; c < sccs.size(); ++c) {
        if (!closed[c]) continue;
        out.recurrent_classes.push_back(sccs[c]);
        for (long s : sccs[c]) recurrent[s] = 1;
    }
    // Keep the classes in a deterministic order (by smallest member).
    std::sort(out.recurrent_classes.begin(), out.recurrent_classes.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (long s = 0; s < n; ++s)
        if (!recurrent[s]) out.transient_states.push_back(s);

    // Stationary distribution of each class.
    out.P_inf = Eigen::MatrixXd::Zero(n, n);
    const long L = static_cast<long>(out.recurrent_classes.size());
    std::vector<Eigen::VectorXd> mu(L);
    for (long c = 0; c < L; ++c) {
        const auto& cls = out.recurrent_classes[c];
        const long k = static_cast<long>(cls.size());
        Eigen::MatrixXd A(k, k);
        for (long i = 0; i < k; ++i)
            for (long j = 0; j < k; ++j)
                A(i, j) = out.P_pi(cls[j], cls[i]) - (i == j ? 1.0 : 0.0);
        A.row(k - 1).setOnes();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
        b(k - 1) = 1.0;
        mu[c] = detail::checked_lu(A).solve(b);
        for (long i = 0; i < k; ++i)
            for (long j = 0; j < k; ++j) out.P_inf(cls[i], cls[j]) = mu[c](j);
    }

    // Transient rows of P_inf via absorption probabilities, and the
    // worst-case expected time to absorption.
    const long t = static_cast<long>(out.transient_states.size());
    if (t > 0) {
        const auto& tr = out.transient_states;
        Eigen::MatrixXd IQ(t, t);
        for (long i = 0; i < t; ++i)
            for (long j = 0; j < t; ++j)
                IQ(i, j) = (i == j ? 1.0 : 0.0) - out.P_pi(tr[i], tr[j]);
        Eigen::MatrixXd Rc = Eigen::MatrixXd::Zero(t, L);
        for (long i = 0; i < t; ++i)
            for (long c = 0; c < L; ++c)
                for (long s : out.recurrent_classes[c]) Rc(i, c) += out.P_pi(tr[i], s);
        auto lu = detail::checked_lu(IQ);
        Eigen::MatrixXd absorb = lu.solve(Rc);
        for (long i = 0; i < t; ++i)
            for (long c = 0; c < L; ++c) {
                const auto& cls = out.recurrent_classes[c];
                for (long j = 0; j < static_cast<long>(cls.size()); ++j)
                    out.P_inf(tr[i], cls[j]) += absorb(i, c) * mu[c](j);
            }
        Eigen::VectorXd hit = lu.solve(Eigen::VectorXd::Ones(t));
        out.transient_time = hit.maxCoeff();
    }

    out.H = detail::checked_lu(Eigen::MatrixXd::Identity(n, n) - out.P_pi + out.P_inf)
                .solve(Eigen::MatrixXd::Identity(n, n)) -
            out.P_inf;

    Eigen::VectorXd gain = out.P_inf * r;
    Eigen::VectorXd bias = out.H * r;
    out.gain.assign(gain.data(), gain.data() + n);
    out.bias.assign(bias.data(), bias.data() + n);
    return out;
}

/**
Worst-case expected hitting time of the recurrent set: max over start
states of E[time to reach a recurrent class], from (I - Q)x = 1 on the
transient block. 0 when every state is recurrent.
*/
inline double transient_time(const Mdp& m, const Policy& pi) {
    return analyze(m, pi).transient_time;
}

/**
Expected number of visits to a transient state s2 when started from s1,
read off the deviation matrix as H[s1, s2].

\throws NotTransient if s2 is recurrent under this policy
*/
inline double expected_visits(const ChainAnalysis& a, long s1, long s2) {
    if (!std::binary_search(a.transient_states.begin(), a.transient_states.end(), s2))
        throw NotTransient(s2);
    return a.H(s1, s2);
}

} // namespace mvi
