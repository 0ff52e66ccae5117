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

// Reference implementations that share no code with the library beyond the
// graph container and single-arc function application.

#include "dagdnn/dagdnn.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

namespace dagdnn::oracle {

/// Node values of g at x by plain topological evaluation; concat nodes
/// stack, addition nodes sum. No matrices are built.
inline std::vector<Vec> node_values(const Graph& g, const Vec& x)
{
    const std::size_t n = g.node_count();
    std::vector<std::vector<const Arc*>> in(n);
    std::vector<std::size_t> pending(n, 0);
    for (const auto& a : g.arcs()) {
        in[a.dst.value].push_back(&a);
        ++pending[a.dst.value];
    }
    std::vector<Vec> value(n);
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (pending[i] == 0)
            ready.push_back(i);
    std::size_t done = 0;
    while (!ready.empty()) {
        const std::size_t v = ready.back();
        ready.pop_back();
        ++done;
        const auto& node = g.nodes()[v];
        if (node.kind == NodeKind::Input) {
            value[v] = x;
        } else if (node.kind == NodeKind::Concat) {
            std::vector<double> parts;
            for (const Arc* a : in[v]) {
                const Vec y = a->fn.apply(value[a->src.value]);
                parts.insert(parts.end(), y.data(), y.data() + y.size());
            }
            value[v] = Eigen::Map<Vec>(parts.data(), static_cast<Eigen::Index>(parts.size()));
        } else {
            Vec acc = Vec::Zero(static_cast<Eigen::Index>(node.dim));
            for (const Arc* a : in[v])
                acc += a->fn.apply(value[a->src.value]);
            value[v] = acc;
        }
        for (const auto& a : g.arcs())
            if (a.src.value == v && --pending[a.dst.value] == 0)
                ready.push_back(a.dst.value);
    }
    if (done != n)
        throw std::runtime_error("oracle: graph is cyclic");
    return value;
}

/// Outputs stacked in Graph::outputs() order.
inline Vec interpret(const Graph& g, const Vec& x)
{
    const auto values = node_values(g, x);
    std::vector<double> out;
    for (auto o : g.outputs())
        out.insert(out.end(), values[o.value].data(), values[o.value].data() + values[o.value].size());
    return Eigen::Map<Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

/// reach[i][j] iff j reaches i, by depth-first search from every node.
inline std::vector<std::vector<bool>> dfs_closure(const Graph& g)
{
    const std::size_t n = g.node_count();
    std::vector<std::vector<std::size_t>> succ(n);
    for (const auto& a : g.arcs())
        succ[a.src.value].push_back(a.dst.value);
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t j = 0; j < n; ++j) {
        std::function<void(std::size_t)> dfs = [&](std::size_t v) {
            if (reach[v][j])
                return;
            reach[v][j] = true;
            for (auto w : succ[v])
                dfs(w);
        };
        dfs(j);
    }
    return reach;
}

/// count[i][j] = number of j -> i paths with exactly k arcs, by enumeration.
inline std::vector<std::vector<long long>> enumerate_paths(const Graph& g, std::size_t k)
{
    const std::size_t n = g.node_count();
    std::vector<std::vector<std::size_t>> succ(n);
    for (const auto& a : g.arcs())
        succ[a.src.value].push_back(a.dst.value);
    std::vector<std::vector<long long>> count(n, std::vector<long long>(n, 0));
    for (std::size_t j = 0; j < n; ++j) {
        std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t v, std::size_t len) {
            if (len == k) {
                ++count[v][j];
                return;
            }
            for (auto w : succ[v])
                walk(w, len + 1);
        };
        walk(j, 0);
    }
    return count;
}

/// Longest-path length from the input to every node, by enumerating paths.
inline std::vector<std::size_t> longest_paths(const Graph& g)
{
    const std::size_t n = g.node_count();
    std::vector<std::vector<std::size_t>> succ(n);
    for (const auto& a : g.arcs())
        succ[a.src.value].push_back(a.dst.value);
    std::vector<std::size_t> best(n, 0);
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t v, std::size_t len) {
        best[v] = std::max(best[v], len);
        for (auto w : succ[v])
            walk(w, len + 1);
    };
    walk(g.input().value, 0);
    return best;
}

/// Backtracking search for a node bijection preserving kind, dim, level,
/// the output, and the multiset of (src, dst, function) arcs.
inline bool isomorphic(const Graph& a, const Graph& b)
{
    if (a.node_count() != b.node_count() || a.arcs().size() != b.arcs().size())
        return false;
    const auto la = longest_paths(a);
    const auto lb = longest_paths(b);
    const std::size_t n = a.node_count();
    using Between = std::map<std::pair<std::size_t, std::size_t>, std::vector<const ArcFunction*>>;
    auto index = [](const Graph& g) {
        Between out;
        for (const auto& arc : g.arcs())
            out[{arc.src.value, arc.dst.value}].push_back(&arc.fn);
        return out;
    };
    const Between ea = index(a);
    const Between eb = index(b);
    auto arcs_of = [](const Between& e, std::size_t s, std::size_t d) {
        auto it = e.find({s, d});
        return it == e.end() ? std::vector<const ArcFunction*>{} : it->second;
    };
    auto same_arcs = [](const std::vector<const ArcFunction*>& x, const std::vector<const ArcFunction*>& y) {
        if (x.size() != y.size())
            return false;
        std::vector<bool> used(y.size(), false);
        for (const auto* f : x) {
            bool found = false;
            for (std::size_t k = 0; k < y.size() && !found; ++k)
                if (!used[k] && *f == *y[k]) {
                    used[k] = true;
                    found = true;
                }
            if (!found)
                return false;
        }
        return true;
    };
    auto is_out = [](const Graph& g, std::size_t v) {
        return std::find(g.outputs().begin(), g.outputs().end(), NodeId{v}) != g.outputs().end();
    };
    std::vector<std::size_t> seq(n);
    for (std::size_t v = 0; v < n; ++v)
        seq[v] = v;
    std::stable_sort(seq.begin(), seq.end(), [&](std::size_t x, std::size_t y) { return la[x] < la[y]; });
    std::vector<std::size_t> map(n, SIZE_MAX);
    std::vector<bool> taken(n, false);
    std::function<bool(std::size_t)> extend = [&](std::size_t pos) -> bool {
        if (pos == n)
            return true;
        const std::size_t v = seq[pos];
        for (std::size_t w = 0; w < n; ++w) {
            if (taken[w] || la[v] != lb[w] || a.nodes()[v].kind != b.nodes()[w].kind ||
                a.nodes()[v].dim != b.nodes()[w].dim || is_out(a, v) != is_out(b, w))
                continue;
            bool ok = true;
            for (std::size_t q = 0; q < pos && ok; ++q) {
                const std::size_t u = seq[q];
                ok = same_arcs(arcs_of(ea, u, v), arcs_of(eb, map[u], w)) &&
                     same_arcs(arcs_of(ea, v, u), arcs_of(eb, w, map[u]));
            }
            if (!ok)
                continue;
            map[v] = w;
            taken[w] = true;
            if (extend(pos + 1))
                return true;
            taken[w] = false;
            map[v] = SIZE_MAX;
        }
        return false;
    };
    return extend(0);
}

/// Central differences of f at theta, one coordinate at a time.
inline ParamSet finite_difference(const std::function<double(const ParamSet&)>& f, const ParamSet& theta,
                                  double h = 1e-6)
{
    ParamSet out;
    for (const auto& [id, p] : theta) {
        std::vector<double> d(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            ParamSet plus = theta;
            ParamSet minus = theta;
            plus[id][k] += h;
            minus[id][k] -= h;
            d[k] = (f(plus) - f(minus)) / (2.0 * h);
        }
        out[id] = d;
    }
    return out;
}

/// Smallest distance of any activation pre-image to a breakpoint.
inline double kink_distance(const Graph& g, const std::vector<Vec>& inputs)
{
    double d = std::numeric_limits<double>::infinity();
    for (const auto& x : inputs) {
        const auto values = oracle::node_values(g, x);
        for (const auto& a : g.arcs()) {
            const auto* act = std::get_if<fn::ActAffine>(&a.fn.variant());
            if (act == nullptr)
                continue;
            const Vec pre = act->weight * values[a.src.value] + act->bias;
            for (Eigen::Index i = 0; i < pre.size(); ++i)
                for (double b : act->cpwl.breakpoints)
                    d = std::min(d, std::abs(pre[i] - b));
        }
    }
    return d;
}

/// Least-squares fit of y ~ W x + b; returns the minimal mean squared error.
inline double least_squares_mse(const std::vector<Vec>& xs, const std::vector<Vec>& ys)
{
    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto p = xs.front().size();
    const auto q = ys.front().size();
    Mat X(n, p + 1);
    Mat Y(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i).head(p) = xs[static_cast<std::size_t>(i)].transpose();
        X(i, p) = 1.0;
        Y.row(i) = ys[static_cast<std::size_t>(i)].transpose();
    }
    const Mat coef = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
    return (X * coef - Y).squaredNorm() / static_cast<double>(n);
}

/// Squared-error loss computed from the oracle interpreter.
inline double mse(const Graph& g, const Dataset& data)
{
    double total = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k)
        total += (interpret(g, data.inputs[k]) - data.targets[k]).squaredNorm();
    return total / static_cast<double>(data.size());
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

} // namespace dagdnn::oracle
