// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include "bound_check.hpp"
#include "chain.hpp"
#include "complexity.hpp"
#include "solvers.hpp"

namespace mvi {

// *******************************************************
// JSON views of analysis and solver records
// *******************************************************
//
// Output-only except for policies, which round-trip (the CLI accepts them
// as input). Doubles serialize with shortest round-trip precision; infinite
// values (an unbounded gain gap) serialize as null.

namespace detail {

inline nlohmann::ordered_json json_number(double x) {
    if (std::isinf(x)) return nullptr;
    return x;
}

inline nlohmann::ordered_json json_matrix(const Eigen::MatrixXd& a) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (long i = 0; i < a.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (long j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::ordered_json json_policy_values(
    const std::vector<std::pair<std::vector<long>, double>>& entries) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& [det, value] : entries)
        out.push_back({{"policy", det}, {"value", value}});
    return out;
}

} // namespace detail

/// {"det": [...]} for deterministic policies, {"rand": [[...]]} otherwise.
inline nlohmann::ordered_json json_of(const Policy& pi) {
    nlohmann::ordered_json doc;
    if (pi.kind == Policy::Kind::Deterministic)
        doc["det"] = pi.det;
    else
        doc["rand"] = pi.rand;
    return doc;
}

/**
Parses a policy document, {"det": [int per state]} or
{"rand": [[weight per action] per state]}, and validates it against m.

\throws ParseError on shape errors, PolicyMismatch on semantic ones
*/
inline Policy policy_from_json(const nlohmann::ordered_json& doc, const Mdp& m) {
    if (!doc.is_object()) throw ParseError("policy: expected an object");
    detail::warn_unknown_keys(doc, {"det", "rand"}, "policy");
    Policy pi;
    if (doc.contains("det") == doc.contains("rand"))
        throw ParseError("policy: need exactly one of \"det\" and \"rand\"");
    try {
        if (doc.contains("det")) {
            pi = Policy::deterministic(doc.at("det").get<std::vector<long>>());
        } else {
            pi = Policy::randomized(doc.at("rand").get<std::vector<std::vector<double>>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("policy: ") + e.what());
    }
    validate_policy(m, pi);
    return pi;
}

inline nlohmann::ordered_json json_of(const BoundCheck& c) {
    return {{"label", c.label},
            {"lhs", c.lhs},
            {"rhs", c.rhs},
            {"margin", c.margin},
            {"pass", c.pass}};
}

inline nlohmann::ordered_json json_of(const std::vector<BoundCheck>& checks) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& c : checks) out.push_back(json_of(c));
    return out;
}

inline nlohmann::ordered_json json_of(const IterTrace& t) {
    nlohmann::ordered_json doc;
    doc["schedule"] = t.schedule;
    doc["kept"] = t.kept == TraceRetention::none
                      ? "none"
                      : (t.kept == TraceRetention::residuals_only ? "residuals_only" : "full");
    doc["wallclock"] = t.wallclock;
    if (t.kept != TraceRetention::none) doc["residuals"] = t.residual_seq;
    if (t.gain_estimate) doc["gain_estimate"] = *t.gain_estimate;
    if (t.kept == TraceRetention::full) doc["iterates"] = t.iterates;
    return doc;
}

inline nlohmann::ordered_json json_of(const SolveReport& rep) {
    nlohmann::ordered_json doc;
    doc["value"] = rep.output_value;
    if (rep.output_policy) doc["policy"] = json_of(*rep.output_policy);
    doc["trace"] = json_of(rep.trace);
    doc["certified"] = json_of(rep.certified);
    return doc;
}

inline nlohmann::ordered_json json_of(const ChainAnalysis& a) {
    nlohmann::ordered_json doc;
    doc["gain"] = a.gain;
    doc["bias"] = a.bias;
    doc["recurrent_classes"] = a.recurrent_classes;
    doc["transient_states"] = a.transient_states;
    doc["transient_time"] = a.transient_time;
    doc["r_pi"] = a.r_pi;
    doc["p_pi"] = detail::json_matrix(a.P_pi);
    doc["p_limit"] = detail::json_matrix(a.P_inf);
    doc["deviation"] = detail::json_matrix(a.H);
    return doc;
}

inline nlohmann::ordered_json json_of(const GroundTruth& gt) {
    nlohmann::ordered_json doc;
    doc["rho_star"] = gt.rho_star;
    doc["blackwell_policy"] = json_of(gt.blackwell_policy);
    doc["h_unmod"] = gt.h_unmod;
    doc["h_both"] = gt.h_both;
    doc["delta"] = detail::json_number(gt.delta);
    doc["provenance"] = {{"enumerated_policies", gt.provenance.enumerated_policies},
                         {"enumeration_cap", gt.provenance.enumeration_cap},
                         {"gain_match_tol", gt.provenance.gain_match_tol},
                         {"check_tol", gt.provenance.check_tol}};
    return doc;
}

inline nlohmann::ordered_json json_of(const ComplexityReport& r) {
    nlohmann::ordered_json doc;
    doc["delta"] = detail::json_number(r.delta);
    doc["rbar"] = r.rbar;
    doc["tdrop"] = r.tdrop;
    if (r.b) doc["b"] = *r.b;
    doc["tdrop_pi"] = detail::json_policy_values(r.tdrop_pi);
    doc["b_pi"] = detail::json_policy_values(r.b_pi);
    return doc;
}

} // namespace mvi
