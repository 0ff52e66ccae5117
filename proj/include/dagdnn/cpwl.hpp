// Copyright 2026 The dagdnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dagdnn/error.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace dagdnn {

/// Continuous piecewise-linear scalar function of m pieces.
///
/// Piece k covers [breakpoints[k-1], breakpoints[k]) with the outer pieces
/// unbounded; slopes[k] is its slope. The anchor pins the additive constant.
struct CpwlSpec {
    std::vector<double> breakpoints;
    std::vector<double> slopes;
    double anchor_x = 0.0;
    double anchor_value = 0.0;

    std::size_t pieces() const { return slopes.size(); }

    friend bool operator==(const CpwlSpec&, const CpwlSpec&) = default;
};

struct ReluTerm {
    double coefficient = 0.0;
    double shift = 0.0;

    friend bool operator==(const ReluTerm&, const ReluTerm&) = default;
};

/// sum_i r_i ReLU(x - a_i) + sum_i l_i ReLU(t_i - x) + constant
struct ReluSum {
    std::vector<ReluTerm> right_terms;
    std::vector<ReluTerm> left_terms;
    double constant = 0.0;

    std::size_t term_count() const { return right_terms.size() + left_terms.size(); }
};

inline void validate(const CpwlSpec& spec)
{
    if (spec.slopes.empty())
        fail(ErrorCode::InvalidCpwl, "a CPWL function needs at least one piece");
    if (spec.slopes.size() != spec.breakpoints.size() + 1)
        fail(ErrorCode::InvalidCpwl, "expected " + std::to_string(spec.breakpoints.size() + 1) +
                                         " slopes, got " + std::to_string(spec.slopes.size()));
    for (double v : spec.breakpoints)
        if (!std::isfinite(v))
            fail(ErrorCode::InvalidCpwl, "non-finite breakpoint");
    for (double v : spec.slopes)
        if (!std::isfinite(v))
            fail(ErrorCode::InvalidCpwl, "non-finite slope");
    if (!std::isfinite(spec.anchor_x) || !std::isfinite(spec.anchor_value))
        fail(ErrorCode::InvalidCpwl, "non-finite anchor");
    for (std::size_t i = 1; i < spec.breakpoints.size(); ++i)
        if (!(spec.breakpoints[i - 1] < spec.breakpoints[i]))
            fail(ErrorCode::NonIncreasingBreakpoints,
                 "breakpoint " + std::to_string(i) + " does not exceed its predecessor");
}

namespace detail {

// Index of the piece containing x; a breakpoint belongs to the piece on its right.
inline std::size_t piece_of(const CpwlSpec& spec, double x)
{
    std::size_t k = 0;
    while (k < spec.breakpoints.size() && spec.breakpoints[k] <= x)
        ++k;
    return k;
}

// Function values at every breakpoint, propagated outward from the anchor.
inline std::vector<double> breakpoint_values(const CpwlSpec& spec)
{
    const auto& b = spec.breakpoints;
    const auto& s = spec.slopes;
    std::vector<double> values(b.size());
    if (b.empty())
        return values;
    const std::size_t p = piece_of(spec, spec.anchor_x);
    if (p > 0)
        values[p - 1] = spec.anchor_value + s[p] * (b[p - 1] - spec.anchor_x);
    if (p < b.size())
        values[p] = spec.anchor_value + s[p] * (b[p] - spec.anchor_x);
    for (std::size_t k = p + 1; k < b.size(); ++k)
        values[k] = values[k - 1] + s[k] * (b[k] - b[k - 1]);
    for (std::size_t k = p >= 2 ? p - 1 : 0; k-- > 0;)
        values[k] = values[k + 1] - s[k + 1] * (b[k + 1] - b[k]);
    return values;
}

} // namespace detail

inline double eval_cpwl(const CpwlSpec& spec, double x)
{
    const std::size_t k = detail::piece_of(spec, x);
    if (k == detail::piece_of(spec, spec.anchor_x))
        return spec.anchor_value + spec.slopes[k] * (x - spec.anchor_x);
    const auto values = detail::breakpoint_values(spec);
    if (k > 0)
        return values[k - 1] + spec.slopes[k] * (x - spec.breakpoints[k - 1]);
    return values[0] + spec.slopes[0] * (x - spec.breakpoints[0]);
}

/// Right derivative: the slope of the piece that starts at or contains x.
inline double derivative_cpwl(const CpwlSpec& spec, double x)
{
    return spec.slopes[detail::piece_of(spec, x)];
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double eval_relusum(const ReluSum& rs, double x)
{
    double value = rs.constant;
    for (const auto& t : rs.right_terms)
        value += t.coefficient * relu(x - t.shift);
    for (const auto& t : rs.left_terms)
        value += t.coefficient * relu(t.shift - x);
    return value;
}

/// Rewrites a CPWL function as translated ReLUs.
///
/// Right terms carry the slope jumps at breakpoints 2..m-1; the first
/// breakpoint b1 takes the slope of the second piece, and the leftmost piece
/// becomes a single left term -s0 * ReLU(b1 - x). The constant is f(b1).
/// Zero coefficients are dropped. A single affine piece has no breakpoint,
/// so it is split at the anchor into one right and one left term.
inline ReluSum decompose(const CpwlSpec& spec)
{
    validate(spec);
    ReluSum out;
    const auto& s = spec.slopes;
    const auto& b = spec.breakpoints;
    if (b.empty()) {
        if (s[0] != 0.0) {
            out.right_terms.push_back({s[0], spec.anchor_x});
            out.left_terms.push_back({-s[0], spec.anchor_x});
        }
        out.constant = spec.anchor_value;
        return out;
    }
    if (s[0] != 0.0)
        out.left_terms.push_back({-s[0], b[0]});
    if (s[1] != 0.0)
        out.right_terms.push_back({s[1], b[0]});
    for (std::size_t k = 1; k < b.size(); ++k) {
        const double jump = s[k + 1] - s[k];
        if (jump != 0.0)
            out.right_terms.push_back({jump, b[k]});
    }
    out.constant = eval_cpwl(spec, b[0]);
    return out;
}

namespace cpwl_presets {

inline CpwlSpec relu() { return {{0.0}, {0.0, 1.0}, 0.0, 0.0}; }
inline CpwlSpec abs() { return {{0.0}, {-1.0, 1.0}, 0.0, 0.0}; }
inline CpwlSpec leaky(double alpha) { return {{0.0}, {alpha, 1.0}, 0.0, 0.0}; }
inline CpwlSpec hardtanh() { return {{-1.0, 1.0}, {0.0, 1.0, 0.0}, 0.0, 0.0}; }
inline CpwlSpec negation() { return {{}, {-1.0}, 0.0, 0.0}; }

} // namespace cpwl_presets

/// Accepts "relu", "abs", "hardtanh" and "leaky:<alpha>".
inline CpwlSpec cpwl_preset(const std::string& name)
{
    if (name == "relu")
        return cpwl_presets::relu();
    if (name == "abs")
        return cpwl_presets::abs();
    if (name == "hardtanh")
        return cpwl_presets::hardtanh();
    if (name.rfind("leaky:", 0) == 0) {
        try {
            std::size_t used = 0;
            const std::string tail = name.substr(6);
            const double alpha = std::stod(tail, &used);
            if (used == tail.size())
                return cpwl_presets::leaky(alpha);
        } catch (const std::exception&) {
        }
    }
    fail(ErrorCode::InvalidCpwl, "unknown CPWL preset '" + name + "'");
}

} // namespace dagdnn
