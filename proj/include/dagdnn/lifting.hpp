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
#include "dagdnn/expr.hpp"
#include "dagdnn/func_matrix.hpp"
#include "dagdnn/graph.hpp"
#include "dagdnn/levels.hpp"
#include "dagdnn/normalize.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace dagdnn {

/// Row/column label of a lifting matrix.
struct LiftNode {
    NodeId id;
    std::size_t level = 0;
    std::size_t dim = 0;
    NodeKind kind = NodeKind::Compute;

    bool operator==(const LiftNode&) const = default;
};

/// Unit lower-triangular matrix B_{n+1,n} = [[I,0,0],[E,I,0],[0,0,I]].
///
/// Only the E block is stored: rows are the level-(n+1) nodes, columns the
/// nodes of levels 0..n. `nodes` lists every node of the graph in level
/// order and fixes the full matrix's row and column order.
struct LiftingMatrix {
    std::vector<LiftNode> nodes;
    std::size_t n = 0;
    FuncMatrix e;
    bool inverted = false;

    std::vector<NodeId> ids() const
    {
        std::vector<NodeId> out;
        for (const auto& node : nodes)
            out.push_back(node.id);
        return out;
    }

    std::vector<std::size_t> dims() const
    {
        std::vector<std::size_t> out;
        for (const auto& node : nodes)
            out.push_back(node.dim);
        return out;
    }

    /// The full m x m matrix in level order.
    FuncMatrix to_matrix() const
    {
        FuncMatrix m = FuncMatrix::identity(ids(), dims());
        for (const auto& [cell, expr] : e.cells())
            m.set(m.row_of(e.rows()[cell.first]), m.col_of(e.cols()[cell.second]), expr);
        return m;
    }
};

inline std::vector<LiftNode> lift_nodes(const Graph& g, const LevelMap& lm)
{
    std::vector<LiftNode> out;
    for (auto id : lm.order())
        out.push_back({id, lm.level(id), g.dim(id), g.node(id).kind});
    return out;
}

/// E_{n+1,<=n}: entry (i, j) is the function on arc j -> i, else Zero.
inline FuncMatrix build_E(const Graph& g, const LevelMap& lm, std::size_t n)
{
    if (n + 1 > lm.max_level())
        fail(ErrorCode::LevelOutOfRange, "no level " + std::to_string(n + 1) + " above level " + std::to_string(n) +
                                             " (top level is " + std::to_string(lm.max_level()) + ")");
    const auto& rows = lm.at_level(n + 1);
    std::vector<NodeId> cols(lm.order().begin(),
                             lm.order().begin() + static_cast<std::ptrdiff_t>(lm.count_up_to(n)));
    std::vector<std::size_t> row_dims;
    std::vector<std::size_t> col_dims;
    for (auto id : rows)
        row_dims.push_back(g.dim(id));
    for (auto id : cols)
        col_dims.push_back(g.dim(id));
    FuncMatrix e(rows, row_dims, cols, col_dims);
    for (const auto& a : g.arcs()) {
        if (lm.level(a.dst) != n + 1)
            continue;
        const auto r = e.row_of(a.dst);
        const auto c = e.col_of(a.src);
        const auto fn = ArcExpr::base(a.fn);
        if (e.is_zero(r, c))
            e.set(r, c, fn);
        else
            e.set(r, c, sum_simplified({e.at(r, c), fn}, fn.in_dim(), fn.out_dim()));
    }
    return e;
}

inline LiftingMatrix build_B(const Graph& g, const LevelMap& lm, std::size_t n)
{
    return {lift_nodes(g, lm), n, build_E(g, lm, n), false};
}

/// [B_{1,0}, ..., B_{L,L-1}] with C_{<=L} = B_{L,L-1} ... B_{1,0} I.
inline std::vector<LiftingMatrix> factorize(const Graph& g)
{
    require_normalized(g);
    const LevelMap lm = assign_levels(g);
    std::vector<LiftingMatrix> out;
    for (std::size_t n = 0; n < lm.max_level(); ++n)
        out.push_back(build_B(g, lm, n));
    return out;
}

/// C_{<=L} from the product form, multiplying right to left from C_0 = I.
inline FuncMatrix allpair_product(const std::vector<LiftNode>& nodes, const std::vector<LiftingMatrix>& bs)
{
    std::vector<NodeId> ids;
    std::vector<std::size_t> dims;
    for (const auto& node : nodes) {
        ids.push_back(node.id);
        dims.push_back(node.dim);
    }
    FuncMatrix c = FuncMatrix::identity(ids, dims);
    for (const auto& b : bs)
        c = mat_mul(b.to_matrix(), c);
    return c;
}

inline FuncMatrix allpair_product(const Graph& g)
{
    return allpair_product(lift_nodes(g, assign_levels(g)), factorize(g));
}

/// C_{<=L} by induction over levels: f[a,a] = I and, for level(a) > level(c),
/// f[a,c] = sum over arcs b -> a of arc[a,b] after f[b,c].
inline FuncMatrix allpair_inductive(const Graph& g)
{
    require_normalized(g);
    const LevelMap lm = assign_levels(g);
    std::vector<std::size_t> dims;
    for (auto id : lm.order())
        dims.push_back(g.dim(id));
    FuncMatrix c(lm.order(), dims, lm.order(), dims);
    const std::size_t m = lm.order().size();
    for (std::size_t k = 0; k < m; ++k)
        c.set(k, k, ArcExpr::identity(dims[k]));
    for (std::size_t ai = 0; ai < m; ++ai) {
        const NodeId a = lm.order()[ai];
        const auto incoming = g.in_arcs(a);
        for (std::size_t ci = 0; ci < m; ++ci) {
            const NodeId col = lm.order()[ci];
            if (lm.level(col) >= lm.level(a))
                continue;
            std::vector<ArcExpr> terms;
            for (auto k : incoming) {
                const auto& arc = g.arcs()[k];
                const auto bi = lm.position(arc.src);
                if (c.is_zero(bi, ci))
                    continue;
                terms.push_back(compose_simplified(ArcExpr::base(arc.fn), c.at(bi, ci)));
            }
            if (!terms.empty())
                c.set(ai, ci, sum_simplified(terms, dims[ci], dims[ai]));
        }
    }
    return c;
}

/// Inverse lifting: the E block negated by composing with Linear(-I).
inline LiftingMatrix inverse_B(const LiftingMatrix& b)
{
    LiftingMatrix out{b.nodes, b.n, FuncMatrix(b.e.rows(), b.e.row_dims(), b.e.cols(), b.e.col_dims()), !b.inverted};
    for (const auto& [cell, expr] : b.e.cells()) {
        const auto neg = ArcExpr::base(ArcFunction::scale(expr.out_dim(), -1.0));
        out.e.set(cell.first, cell.second, ArcExpr::compose(neg, expr));
    }
    return out;
}

/// Inverses in application order: B^{-1}_{L,L-1} first, B^{-1}_{1,0} last.
inline std::vector<LiftingMatrix> inverse_chain(const std::vector<LiftingMatrix>& bs)
{
    std::vector<LiftingMatrix> out;
    for (auto it = bs.rbegin(); it != bs.rend(); ++it)
        out.push_back(inverse_B(*it));
    return out;
}

namespace detail {

inline void check_sequence(const std::vector<LiftingMatrix>& bs)
{
    if (bs.empty())
        return;
    const auto& nodes = bs.front().nodes;
    for (std::size_t k = 0; k < bs.size(); ++k) {
        const auto& b = bs[k];
        const std::string where = "lifting matrix " + std::to_string(k);
        if (b.nodes != nodes)
            fail(ErrorCode::MalformedSequence, where + " has a different node table");
        if (b.n != k)
            fail(ErrorCode::MalformedSequence, where + " lifts level " + std::to_string(b.n) + ", expected " +
                                                   std::to_string(k));
        if (b.inverted)
            fail(ErrorCode::MalformedSequence, where + " is an inverse lifting");
        std::map<NodeId, const LiftNode*> by_id;
        for (const auto& node : nodes)
            by_id[node.id] = &node;
        for (auto r : b.e.rows())
            if (!by_id.count(r) || by_id[r]->level != k + 1)
                fail(ErrorCode::MalformedSequence, where + " has a row outside level " + std::to_string(k + 1));
        for (auto c : b.e.cols())
            if (!by_id.count(c) || by_id[c]->level > k)
                fail(ErrorCode::MalformedSequence, where + " has a column above level " + std::to_string(k));
        for (const auto& [cell, expr] : b.e.cells())
            if (expr.op() != ArcExpr::Op::Base)
                fail(ErrorCode::MalformedSequence, where + " has a non-base entry");
    }
}

// Merges relays with one incoming arc and one identity outgoing arc into the
// incoming arc.
inline Graph fold_identity_relays(Graph g)
{
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& node : g.nodes()) {
            if (node.kind != NodeKind::Relay)
                continue;
            const auto in = g.in_arcs(node.id);
            const auto out = g.out_arcs(node.id);
            if (in.size() != 1 || out.size() != 1 || !g.arcs()[out[0]].fn.is<fn::Identity>())
                continue;
            const NodeId dst = g.arcs()[out[0]].dst;
            const bool parallel = std::any_of(g.arcs().begin(), g.arcs().end(), [&](const Arc& a) {
                return a.src == g.arcs()[in[0]].src && a.dst == dst;
            });
            if (parallel)
                continue;
            g.mutable_arcs()[in[0]].dst = dst;
            g.mutable_arcs().erase(g.mutable_arcs().begin() + static_cast<std::ptrdiff_t>(out[0]));
            std::vector<bool> keep(g.node_count(), true);
            keep[node.id.value] = false;
            g = compact(g, keep);
            changed = true;
            break;
        }
    }
    return g;
}

} // namespace detail

/// Reads the arcs back from the E blocks, back-tracks from the output to
/// the input and drops every node off those paths. Nodes are renumbered in
/// level order. With fold_relays, identity relay chains are merged back
/// into single arcs.
inline Graph reconstruct_graph(const std::vector<LiftingMatrix>& bs, bool fold_relays = false)
{
    if (bs.empty())
        fail(ErrorCode::MalformedSequence, "empty lifting sequence; a single-node graph has no lifting matrices");
    detail::check_sequence(bs);
    const auto& nodes = bs.front().nodes;
    const std::size_t top = bs.size();

    std::map<NodeId, std::size_t> slot;
    for (std::size_t k = 0; k < nodes.size(); ++k)
        slot[nodes[k].id] = k;
    struct Edge {
        std::size_t src;
        std::size_t dst;
        ArcFunction fn;
    };
    std::vector<Edge> edges;
    for (const auto& b : bs)
        for (const auto& [cell, expr] : b.e.cells())
            edges.push_back({slot[b.e.cols()[cell.second]], slot[b.e.rows()[cell.first]], expr.fn()});

    std::vector<std::size_t> sources;
    std::vector<std::size_t> sinks;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k].level == 0)
            sources.push_back(k);
        if (nodes[k].level == top)
            sinks.push_back(k);
    }
    if (sources.size() != 1 || sinks.size() != 1)
        fail(ErrorCode::MalformedSequence, "the lifting sequence must have one node at level 0 and one at the top");

    // Edges are grouped by ascending target level, so one sweep each way
    // settles reachability.
    std::vector<bool> back(nodes.size(), false);
    back[sinks[0]] = true;
    for (auto it = edges.rbegin(); it != edges.rend(); ++it)
        if (back[it->dst])
            back[it->src] = true;
    std::vector<bool> fwd(nodes.size(), false);
    fwd[sources[0]] = true;
    for (const auto& e : edges)
        if (fwd[e.src])
            fwd[e.dst] = true;

    Graph g;
    std::vector<std::size_t> map(nodes.size(), SIZE_MAX);
    for (std::size_t k = 0; k < nodes.size(); ++k)
        if (back[k] && fwd[k])
            map[k] = g.add_node(nodes[k].kind, nodes[k].dim).value;
    for (const auto& e : edges)
        if (map[e.src] != SIZE_MAX && map[e.dst] != SIZE_MAX)
            g.add_arc(NodeId{map[e.src]}, NodeId{map[e.dst]}, e.fn);
    g.set_outputs({NodeId{map[sinks[0]]}});
    require_valid(g);
    return fold_relays ? detail::fold_identity_relays(std::move(g)) : g;
}

namespace detail {

inline Graph companion(const Graph& g, double sign)
{
    require_valid(g);
    const NodeId in = g.input();
    const NodeId out = g.output();
    const std::size_t dx = g.dim(in);
    const std::size_t dy = g.dim(out);
    const std::size_t total = dx + dy;

    Graph h;
    const NodeId xy = h.add_node(NodeKind::Input, total, "companion:input");
    std::vector<NodeId> map(g.node_count());
    for (const auto& node : g.nodes()) {
        auto kind = node.kind;
        if (kind == NodeKind::Input || kind == NodeKind::Output)
            kind = NodeKind::Compute;
        map[node.id.value] = h.add_node(kind, node.dim, node.label);
    }
    h.add_arc(xy, map[in.value], ArcFunction::select(total, dx, 0));
    for (const auto& a : g.arcs())
        h.add_arc(map[a.src.value], map[a.dst.value], a.fn);
    const NodeId y = h.add_node(NodeKind::Compute, dy, "companion:y");
    h.add_arc(xy, y, ArcFunction::select(total, dy, dx));
    const NodeId sum = h.add_node(NodeKind::Addition, dy, "companion:sum");
    h.add_arc(y, sum, ArcFunction::identity(dy));
    h.add_arc(map[out.value], sum, ArcFunction::scale(dy, sign));
    const NodeId result = h.add_node(NodeKind::Concat, total, "companion:output");
    h.add_arc(map[in.value], result, ArcFunction::identity(dx));
    h.add_arc(sum, result, ArcFunction::identity(dy));
    h.set_outputs({result});
    require_valid(h);
    return h;
}

} // namespace detail

/// (x, y) -> (x, y + F(x)) for the network F computed by g.
inline Graph companion_forward(const Graph& g) { return detail::companion(g, 1.0); }

/// (x, y) -> (x, y - F(x)); inverts companion_forward(g).
inline Graph companion_inverse(const Graph& g) { return detail::companion(g, -1.0); }

} // namespace dagdnn
