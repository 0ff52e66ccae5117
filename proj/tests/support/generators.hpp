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

#include "dagdnn/dagdnn.hpp"

#include <algorithm>
#include <cstddef>
#include <random>
#include <vector>

namespace dagdnn::gen {

using Rng = std::mt19937_64;

inline double normal(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0)
{
    Vec v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = uniform(rng, -scale, scale);
    return v;
}

inline Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols)
{
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = normal(rng, sd);
    return m;
}

inline Vec random_bias(Rng& rng, std::size_t n)
{
    Vec v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = normal(rng, 0.5);
    return v;
}

/// One of Affine, ReLU after Affine, Identity (when dims agree, otherwise
/// Affine) and sigmoid after Affine.
inline ArcFunction random_fn(Rng& rng, std::size_t in, std::size_t out)
{
    switch (pick(rng, 0, 3)) {
    case 0:
        return ArcFunction::affine(random_mat(rng, out, in), random_bias(rng, out));
    case 1:
        return ArcFunction::act_affine(cpwl_presets::relu(), random_mat(rng, out, in), random_bias(rng, out));
    case 2:
        if (in == out)
            return ArcFunction::identity(in);
        return ArcFunction::affine(random_mat(rng, out, in), random_bias(rng, out));
    default:
        return ArcFunction::sigma_affine("sigmoid", random_mat(rng, out, in), random_bias(rng, out));
    }
}

struct DagOptions {
    std::size_t min_nodes = 5;
    std::size_t max_nodes = 25;
    std::size_t max_dim = 8;
    /// Probability of a concat / addition node among non-input nodes.
    double concat_rate = 0.15;
    double addition_rate = 0.15;
    /// Forces at least this many concat nodes when positive.
    std::size_t min_concats = 0;
    std::size_t max_concats = 1000;
};

/// Random connected DAG-DNN with concat and addition nodes and jumps. When
/// several nodes have no successor they are stacked by a final concat
/// output node.
inline Graph random_dag(Rng& rng, const DagOptions& o = {})
{
    const std::size_t total = pick(rng, o.min_nodes, o.max_nodes);
    Graph g;
    g.add_node(NodeKind::Input, pick(rng, 1, o.max_dim));
    const std::size_t body = total - 1;
    const std::size_t concats_wanted = std::min(o.min_concats, body > 1 ? body - 1 : 0);
    std::size_t concats = 0;
    std::vector<bool> has_succ(1, false);
    for (std::size_t k = 1; k < body; ++k) {
        const std::size_t existing = g.node_count();
        const std::size_t remaining = body - k;
        const double r = uniform(rng, 0.0, 1.0);
        NodeKind kind = NodeKind::Compute;
        if ((concats < concats_wanted && remaining <= concats_wanted - concats) ||
            (concats < o.max_concats && r < o.concat_rate))
            kind = NodeKind::Concat;
        else if (r < o.concat_rate + o.addition_rate && existing >= 2)
            kind = NodeKind::Addition;
        // Recent nodes are more likely parents; older ones create jumps.
        auto parent = [&]() {
            const std::size_t lo = existing > 4 && uniform(rng, 0.0, 1.0) < 0.7 ? existing - 4 : 0;
            return pick(rng, lo, existing - 1);
        };
        if (kind == NodeKind::Compute) {
            const std::size_t p = parent();
            const std::size_t d = pick(rng, 1, o.max_dim);
            const NodeId v = g.add_node(kind, d);
            g.add_arc(NodeId{p}, v, random_fn(rng, g.dim(NodeId{p}), d));
            has_succ[p] = true;
        } else if (kind == NodeKind::Concat) {
            ++concats;
            const std::size_t k_in = pick(rng, 1, 3);
            std::vector<std::size_t> ps;
            std::vector<std::size_t> widths;
            std::size_t d = 0;
            for (std::size_t q = 0; q < k_in; ++q) {
                ps.push_back(parent());
                widths.push_back(pick(rng, 1, std::max<std::size_t>(1, o.max_dim / 2)));
                d += widths.back();
            }
            const NodeId v = g.add_node(kind, d);
            for (std::size_t q = 0; q < k_in; ++q) {
                g.add_arc(NodeId{ps[q]}, v, random_fn(rng, g.dim(NodeId{ps[q]}), widths[q]));
                has_succ[ps[q]] = true;
            }
        } else {
            std::vector<std::size_t> ps;
            const std::size_t k_in = std::min<std::size_t>(pick(rng, 2, 3), existing);
            while (ps.size() < k_in) {
                const std::size_t p = parent();
                if (std::find(ps.begin(), ps.end(), p) == ps.end())
                    ps.push_back(p);
            }
            const std::size_t d = pick(rng, 1, o.max_dim);
            const NodeId v = g.add_node(kind, d);
            for (auto p : ps) {
                g.add_arc(NodeId{p}, v, random_fn(rng, g.dim(NodeId{p}), d));
                has_succ[p] = true;
            }
        }
        has_succ.push_back(false);
    }
    std::vector<NodeId> sinks;
    for (std::size_t v = 0; v < g.node_count(); ++v)
        if (!has_succ[v])
            sinks.push_back(NodeId{v});
    if (sinks.size() == 1) {
        if (g.node(sinks[0]).kind == NodeKind::Compute)
            g.mutable_node(sinks[0]).kind = NodeKind::Output;
        g.set_outputs(sinks);
    } else {
        std::size_t d = 0;
        for (auto s : sinks)
            d += g.dim(s);
        const NodeId out = g.add_node(NodeKind::Concat, d);
        for (auto s : sinks)
            g.add_arc(s, out, ArcFunction::identity(g.dim(s)));
        g.set_outputs({out});
    }
    require_valid(g);
    return g;
}

inline Graph random_normalized(Rng& rng, const DagOptions& o = {}) { return normalize(random_dag(rng, o)); }

/// Two branches x -> f1(x), x -> f2(x) stacked by a concat output node.
inline Graph two_branch_concat()
{
    Mat w1(2, 2);
    w1 << 1.0, -0.5, 0.25, 2.0;
    Vec b1(2);
    b1 << 0.1, -0.3;
    Mat w2(1, 2);
    w2 << -1.5, 0.75;
    Vec b2(1);
    b2 << 0.2;
    const Graph one = apply_series(single_node_graph(2), ArcFunction::act_affine(cpwl_presets::relu(), w1, b1));
    const Graph two = apply_series(single_node_graph(2), ArcFunction::sigma_affine("sigmoid", w2, b2));
    return apply_concat({one, two});
}

/// The seven-node, one-addition-node network equivalent to two_branch_concat().
inline Graph two_branch_normalized() { return normalize(two_branch_concat()); }

/// Ids of two_branch_normalized() nodes listed as 1..7 in level order.
inline std::vector<NodeId> two_branch_numbering()
{
    const Graph g = two_branch_normalized();
    return assign_levels(g).order();
}

struct JumpFixture {
    Graph graph;
    ArcFunction f1, f2, rho_m, f3, f4, f5, f6, f7;
};

/// Concat of three branches where the first branch reaches the concat by a
/// level-skipping arc, followed by f7.
inline JumpFixture concat_with_jump()
{
    Rng rng(7);
    JumpFixture s;
    s.f1 = ArcFunction::affine(random_mat(rng, 3, 2), random_bias(rng, 3));
    s.f2 = ArcFunction::act_affine(cpwl_presets::relu(), random_mat(rng, 2, 2), random_bias(rng, 2));
    s.rho_m = ArcFunction::act_affine(cpwl_presets::relu(), random_mat(rng, 2, 3), random_bias(rng, 2));
    s.f3 = ArcFunction::affine(random_mat(rng, 2, 2), random_bias(rng, 2));
    s.f4 = ArcFunction::sigma_affine("sigmoid", random_mat(rng, 1, 2), random_bias(rng, 1));
    s.f5 = ArcFunction::act_affine(cpwl_presets::relu(), random_mat(rng, 1, 2), random_bias(rng, 1));
    s.f6 = ArcFunction::affine(random_mat(rng, 2, 1), random_bias(rng, 2));
    s.f7 = ArcFunction::affine(random_mat(rng, 2, 5), random_bias(rng, 2));
    Graph& g = s.graph;
    const NodeId x = g.add_node(NodeKind::Input, 2);
    const NodeId a = g.add_node(NodeKind::Compute, 3);
    const NodeId b = g.add_node(NodeKind::Compute, 2);
    const NodeId c3 = g.add_node(NodeKind::Compute, 2);
    const NodeId c4 = g.add_node(NodeKind::Compute, 1);
    const NodeId cat = g.add_node(NodeKind::Concat, 5);
    const NodeId out = g.add_node(NodeKind::Output, 2);
    g.add_arc(x, a, s.f1);
    g.add_arc(x, b, s.f2);
    g.add_arc(b, c3, s.f3);
    g.add_arc(b, c4, s.f4);
    g.add_arc(a, cat, s.rho_m);
    g.add_arc(c3, cat, s.f5);
    g.add_arc(c4, cat, s.f6);
    g.add_arc(cat, out, s.f7);
    g.set_outputs({out});
    require_valid(g);
    return s;
}

struct DeadUnitFixture {
    Graph graph;
    Dataset data;
    /// Dead hidden units, deepest first.
    std::vector<NodeId> dead;
};

namespace detail {

inline Dataset fixture_data(Rng& rng, std::size_t n)
{
    Dataset d;
    for (std::size_t k = 0; k < n; ++k) {
        Vec u = random_vec(rng, 2);
        Vec v(1);
        v[0] = std::sin(1.5 * u[0]) + 0.5 * u[1] * u[1] - 0.25;
        d.inputs.push_back(u);
        d.targets.push_back(v);
    }
    return d;
}

// Bias that keeps w.x + b below -1 for every x in xs.
inline double killing_bias(const Mat& w, const std::vector<Vec>& xs)
{
    double peak = 0.0;
    for (const auto& x : xs)
        peak = std::max(peak, (w * x).cwiseAbs().maxCoeff());
    return -peak - 1.0;
}

} // namespace detail

/// Input (dim 2) -> four width-1 ReLU units -> addition output. The last
/// unit's bias sits below minus its largest pre-activation on the data, so
/// it is zero on every training input from the start.
inline DeadUnitFixture one_dead_unit(std::uint64_t seed = 11, std::size_t samples = 32)
{
    Rng rng(seed);
    DeadUnitFixture f;
    f.data = detail::fixture_data(rng, samples);
    Graph& g = f.graph;
    const NodeId x = g.add_node(NodeKind::Input, 2);
    std::vector<NodeId> units;
    for (int k = 0; k < 4; ++k)
        units.push_back(g.add_node(NodeKind::Compute, 1));
    const NodeId out = g.add_node(NodeKind::Addition, 1);
    for (std::size_t k = 0; k < units.size(); ++k) {
        const Mat w = random_mat(rng, 1, 2);
        Vec b(1);
        b[0] = k + 1 < units.size() ? 0.5 + uniform(rng, 0.0, 0.5) : detail::killing_bias(w, f.data.inputs);
        g.add_arc(x, units[k], ArcFunction::act_affine(cpwl_presets::relu(), w, b));
        g.add_arc(units[k], out, ArcFunction::linear(random_mat(rng, 1, 1)));
    }
    g.set_outputs({out});
    require_normalized(g);
    f.dead = {units.back()};
    return f;
}

/// Two ReLU layers of width-1 units joined by addition nodes; one unit of
/// each layer is dead on the data.
inline DeadUnitFixture two_dead_units(std::uint64_t seed = 23, std::size_t samples = 32)
{
    Rng rng(seed);
    DeadUnitFixture f;
    f.data = detail::fixture_data(rng, samples);
    Graph& g = f.graph;
    const NodeId x = g.add_node(NodeKind::Input, 2);
    std::vector<NodeId> first;
    for (int k = 0; k < 3; ++k)
        first.push_back(g.add_node(NodeKind::Compute, 1));
    const NodeId mid = g.add_node(NodeKind::Addition, 3);
    std::vector<NodeId> second;
    for (int k = 0; k < 3; ++k)
        second.push_back(g.add_node(NodeKind::Compute, 1));
    const NodeId out = g.add_node(NodeKind::Addition, 1);

    std::vector<Mat> w1, v1;
    for (std::size_t k = 0; k < first.size(); ++k) {
        w1.push_back(random_mat(rng, 1, 2));
        v1.push_back(random_mat(rng, 3, 1));
    }
    std::vector<double> b1;
    for (std::size_t k = 0; k < first.size(); ++k)
        b1.push_back(k + 1 < first.size() ? 0.5 + uniform(rng, 0.0, 0.5)
                                          : detail::killing_bias(w1[k], f.data.inputs));
    // Values of the middle addition node on the data.
    std::vector<Vec> mids;
    for (const auto& u : f.data.inputs) {
        Vec m = Vec::Zero(3);
        for (std::size_t k = 0; k < first.size(); ++k)
            m += v1[k] * std::max(0.0, (w1[k] * u)(0) + b1[k]);
        mids.push_back(m);
    }
    for (std::size_t k = 0; k < first.size(); ++k) {
        Vec b(1);
        b[0] = b1[k];
        g.add_arc(x, first[k], ArcFunction::act_affine(cpwl_presets::relu(), w1[k], b));
        g.add_arc(first[k], mid, ArcFunction::linear(v1[k]));
    }
    for (std::size_t k = 0; k < second.size(); ++k) {
        const Mat w = random_mat(rng, 1, 3);
        Vec b(1);
        b[0] = k + 1 < second.size() ? 0.5 + uniform(rng, 0.0, 0.5) : detail::killing_bias(w, mids);
        g.add_arc(mid, second[k], ArcFunction::act_affine(cpwl_presets::relu(), w, b));
        g.add_arc(second[k], out, ArcFunction::linear(random_mat(rng, 1, 1)));
    }
    g.set_outputs({out});
    require_normalized(g);
    f.dead = {second.back(), first.back()};
    return f;
}

/// Input -> ReLU layer -> ReLU layer -> affine output, plus a skip arc from
/// the input to an addition output node.
inline Graph three_level_net(Rng& rng)
{
    const std::size_t d0 = pick(rng, 2, 4);
    const std::size_t d1 = pick(rng, 2, 5);
    const std::size_t d2 = pick(rng, 2, 4);
    const std::size_t d3 = pick(rng, 1, 3);
    Graph g;
    const NodeId x = g.add_node(NodeKind::Input, d0);
    const NodeId h1 = g.add_node(NodeKind::Compute, d1);
    const NodeId h2 = g.add_node(NodeKind::Compute, d2);
    const NodeId y = g.add_node(NodeKind::Addition, d3);
    g.add_arc(x, h1, ArcFunction::act_affine(cpwl_presets::relu(), random_mat(rng, d1, d0), random_bias(rng, d1)));
    g.add_arc(h1, h2, ArcFunction::act_affine(cpwl_presets::leaky(0.1), random_mat(rng, d2, d1), random_bias(rng, d2)));
    g.add_arc(h2, y, ArcFunction::affine(random_mat(rng, d3, d2), random_bias(rng, d3)));
    g.add_arc(x, y, ArcFunction::sigma_affine("sigmoid", random_mat(rng, d3, d0), random_bias(rng, d3)));
    g.add_arc(x, y, ArcFunction::linear(random_mat(rng, d3, d0)));
    g.set_outputs({y});
    return normalize(g);
}

inline Dataset random_data(Rng& rng, std::size_t n, std::size_t in, std::size_t out)
{
    Dataset d;
    for (std::size_t k = 0; k < n; ++k) {
        d.inputs.push_back(random_vec(rng, in));
        d.targets.push_back(random_vec(rng, out));
    }
    return d;
}

} // namespace dagdnn::gen
