// This file is part of mvi, a C++ library for planning in average-reward
// Markov decision processes. MIT license; see LICENSE in the project root.

#pragma once

#include <cmath>
#include <string>
#include <utility>

namespace mvi {

// *******************************************************
// *  One recorded inequality check                      *
// *******************************************************

/**
A single evaluated inequality lhs <= rhs. `margin` is rhs - lhs and
`pass` grants the right-hand side a relative slack of 1e-9 (theorem
constants are exact, the left-hand side carries float error).
*/
struct BoundCheck {
    std::string label;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool pass = false;
};

/// Builds a BoundCheck, deriving `margin` and `pass` from lhs and rhs.
inline BoundCheck make_bound_check(std::string label, double lhs, double rhs) {
    BoundCheck b;
    b.label = std::move(label);
    b.lhs = lhs;
    b.rhs = rhs;
    b.margin = rhs - lhs;
    b.pass = lhs <= rhs + 1e-9 * std::max(1.0, std::abs(rhs));
    return b;
}

} // namespace mvi
