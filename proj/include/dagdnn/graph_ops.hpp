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

#include "dagdnn/graph.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <vector>

namespace dagdnn {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// The one-node graph: its input is also its output.
inline Graph single_node_graph(std::size_t dim)
{
    Graph g;
    auto id = g.add_node(NodeKind::Input, dim);
    g.set_outputs({id});
    return g;
}

/// Series connection: the output of g feeds f.
inline Graph apply_series(const Graph& g, const ArcFunction& f)
{
    require_valid(g);
    const NodeId out = g.output();
    if (f.in_dim() != g.dim(out))
        fail(ErrorCode::DimensionMismatch, "cannot attach " + f.describe() + " to an output of dim " +
                                               std::to_string(g.dim(out)));
    Graph r = g;
    if (r.node(out).kind == NodeKind::Output)
        r.mutable_node(out).kind = NodeKind::Compute;
    auto next = r.add_node(NodeKind::Output, f.out_dim());
    r.add_arc(out, next, f);
    r.set_outputs({next});
    require_valid(r);
    return r;
}

/// Concatenation of networks sharing one input: x -> [g1(x); ...; gk(x)].
inline Graph apply_concat(const std::vector<Graph>& gs)
{
    if (gs.empty())
        fail(ErrorCode::InvalidGraph, "concatenation needs at least one operand");
    for (const auto& g : gs)
        require_valid(g);
    const std::size_t in_dim = gs.front().dim(gs.front().input());
    for (const auto& g : gs)
        if (g.dim(g.input()) != in_dim)
            fail(ErrorCode::DimensionMismatch, "concatenated networks must share the input dimension");

    Graph r;
    const NodeId shared = r.add_node(NodeKind::Input, in_dim);
    std::vector<NodeId> tails;
    std::size_t width = 0;
    for (const auto& g : gs) {
        std::vector<NodeId> map(g.node_count());
        for (const auto& node : g.nodes()) {
            if (node.kind == NodeKind::Input) {
                map[node.id.value] = shared;
                continue;
            }
            const auto kind = node.kind == NodeKind::Output ? NodeKind::Compute : node.kind;
            map[node.id.value] = r.add_node(kind, node.dim, node.label);
        }
        for (const auto& a : g.arcs())
            r.add_arc(map[a.src.value], map[a.dst.value], a.fn);
        tails.push_back(map[g.output().value]);
        width += g.dim(g.output());
    }
    const NodeId cat = r.add_node(NodeKind::Concat, width);
    for (auto t : tails)
        r.add_arc(t, cat, ArcFunction::identity(r.dim(t)));
    r.set_outputs({cat});
    require_valid(r);
    return r;
}

/// Duplication of the output m times: y -> [y; ...; y].
inline Graph apply_duplicate(const Graph& g, std::size_t copies)
{
    require_valid(g);
    if (copies == 0)
        fail(ErrorCode::InvalidGraph, "duplication needs at least one copy");
    Graph r = g;
    const NodeId out = g.output();
    if (r.node(out).kind == NodeKind::Output)
        r.mutable_node(out).kind = NodeKind::Compute;
    const std::size_t d = g.dim(out);
    const NodeId cat = r.add_node(NodeKind::Concat, d * copies);
    for (std::size_t k = 0; k < copies; ++k)
        r.add_arc(out, cat, ArcFunction::identity(d));
    r.set_outputs({cat});
    require_valid(r);
    return r;
}

/// G(i, j) = 1 iff there is an arc j -> i.
inline BitMatrix adjacency(const Graph& g)
{
    const auto n = static_cast<Eigen::Index>(g.node_count());
    BitMatrix m = BitMatrix::Zero(n, n);
    for (const auto& a : g.arcs())
        if (a.src != a.dst)
            m(static_cast<Eigen::Index>(a.dst.value), static_cast<Eigen::Index>(a.src.value)) = 1;
    return m;
}

/// G^k: entry (i, j) counts the paths of exactly k arcs from j to i, parallel
/// arcs counted separately.
inline IntMatrix path_counts(const Graph& g, std::size_t k)
{
    const auto n = static_cast<Eigen::Index>(g.node_count());
    IntMatrix adj = IntMatrix::Zero(n, n);
    for (const auto& a : g.arcs())
        ++adj(static_cast<Eigen::Index>(a.dst.value), static_cast<Eigen::Index>(a.src.value));
    IntMatrix p = IntMatrix::Identity(adj.rows(), adj.cols());
    for (std::size_t step = 0; step < k; ++step)
        p = adj * p;
    return p;
}

/// R(i, j) = 1 iff j reaches i (the diagonal is set).
inline BitMatrix reachability(const Graph& g)
{
    const IntMatrix adj = adjacency(g).cast<std::int64_t>();
    const auto n = adj.rows();
    IntMatrix power = IntMatrix::Identity(n, n);
    IntMatrix closure = power;
    for (Eigen::Index k = 1; k <= n; ++k) {
        power = (adj * power).unaryExpr([](std::int64_t v) -> std::int64_t { return v != 0 ? 1 : 0; });
        if (power.isZero())
            break;
        closure = closure.cwiseMax(power);
    }
    return closure.cast<std::uint8_t>();
}

/// Keeps the nodes with keep[i] set, renumbering them densely in order;
/// arcs touching a dropped node are dropped, arc ids are preserved.
inline Graph compact(const Graph& g, const std::vector<bool>& keep)
{
    Graph r;
    r.reserve_arc_ids(g.next_arc_id());
    std::vector<std::size_t> map(g.node_count(), SIZE_MAX);
    for (const auto& node : g.nodes())
        if (keep[node.id.value])
            map[node.id.value] = r.add_node(node.kind, node.dim, node.label).value;
    for (const auto& a : g.arcs())
        if (keep[a.src.value] && keep[a.dst.value])
            r.add_arc_with_id(a.id, NodeId{map[a.src.value]}, NodeId{map[a.dst.value]}, a.fn);
    std::vector<NodeId> outs;
    for (auto o : g.outputs())
        if (keep[o.value])
            outs.push_back(NodeId{map[o.value]});
    r.set_outputs(outs);
    return r;
}

} // namespace dagdnn
