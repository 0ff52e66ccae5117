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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace dagdnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec stack(const std::vector<Vec>& blocks)
{
    Eigen::Index total = 0;
    for (const auto& b : blocks)
        total += b.size();
    Vec out(total);
    Eigen::Index offset = 0;
    for (const auto& b : blocks) {
        out.segment(offset, b.size()) = b;
        offset += b.size();
    }
    return out;
}

inline bool all_finite(const Mat& m)
{
    return m.allFinite();
}

inline double max_abs(const Vec& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/// |a-b| <= tol * max(1, |a|, |b|), componentwise.
inline bool close_rel(const Vec& a, const Vec& b, double tol)
{
    if (a.size() != b.size())
        return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        if (!(std::abs(a[i] - b[i]) <= tol * scale))
            return false;
    }
    return true;
}

inline bool close_abs(const Vec& a, const Vec& b, double tol)
{
    if (a.size() != b.size())
        return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!(std::abs(a[i] - b[i]) <= tol))
            return false;
    return true;
}

} // namespace dagdnn
