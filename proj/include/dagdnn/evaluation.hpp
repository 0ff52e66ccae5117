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
#include "dagdnn/func_matrix.hpp"
#include "dagdnn/graph.hpp"
#include "dagdnn/graph_ops.hpp"
#include "dagdnn/levels.hpp"
#include "dagdnn/lifting.hpp"
#include "dagdnn/linalg.hpp"

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace dagdnn {

/// x^{(n)}: one block per node (indexed by node id), zero above level n.
struct StateVec {
    std::vector<Vec> blocks;
    std::size_t level = 0;

    std::size_t total_dim() const
    {
        std::size_t d = 0;
        for (const auto& b : blocks)
            d += static_cast<std::size_t>(b.size());
        return d;
    }

    /// Blocks stacked in the given node order.
    Vec stacked(const std::vector<NodeId>& order) const
    {
        std::vector<Vec> parts;
        for (auto id : order)
            parts.push_back(blocks.at(id.value));
        return stack(parts);
    }
};

struct EvalTrace {
    std::vector<StateVec> states;
    /// Value of every node at the level where it is produced.
    std::vector<Vec> node_values;
    double seconds = 0.0;
    std::size_t expr_applications = 0;
};

struct ForwardResult {
    Vec y;
    EvalTrace trace;
};

/// x^{(0)}: the input block holds x, every other block is zero.
inline StateVec init_state(const std::vector<LiftNode>& nodes, const Vec& x)
{
    std::size_t m = 0;
    for (const auto& node : nodes)
        m = std::max(m, node.id.value + 1);
    StateVec s;
    s.blocks.assign(m, Vec());
    bool placed = false;
    for (const auto& node : nodes) {
        s.blocks[node.id.value] = Vec::Zero(static_cast<Eigen::Index>(node.dim));
        if (node.level == 0) {
            if (static_cast<std::size_t>(x.size()) != node.dim)
                fail(ErrorCode::DimensionMismatch, "input has dim " + std::to_string(x.size()) + ", the network expects " +
                                                       std::to_string(node.dim));
            s.blocks[node.id.value] = x;
            placed = true;
        }
    }
    if (!placed)
        fail(ErrorCode::MissingInputOrOutput, "no level-0 node to hold the input");
    return s;
}

inline StateVec init_state(const Graph& g, const Vec& x) { return init_state(lift_nodes(g, assign_levels(g)), x); }

/// x^{(n+1)} = B_{n+1,n} x^{(n)}, or x^{(n)} = B^{-1} x^{(n+1)} for an inverse.
inline StateVec lift_state(const StateVec& s, const LiftingMatrix& b, std::size_t* applications = nullptr)
{
    const std::size_t expected = b.inverted ? b.n + 1 : b.n;
    if (s.level != expected)
        fail(ErrorCode::LevelMismatch, "state is at level " + std::to_string(s.level) + ", lifting matrix expects " +
                                           std::to_string(expected));
    StateVec out = s;
    std::vector<ExprEvaluator::VecPtr> cols;
    for (auto id : b.e.cols())
        cols.push_back(std::make_shared<const Vec>(s.blocks.at(id.value)));
    ExprEvaluator evaluator;
    for (const auto& [cell, expr] : b.e.cells()) {
        out.blocks[b.e.rows()[cell.first].value] += *evaluator.eval(expr, cols[cell.second]);
        if (applications)
            ++*applications;
    }
    out.level = b.inverted ? b.n : b.n + 1;
    return out;
}

/// Applies the factors in order; the output block of the top node is y.
inline ForwardResult forward(const std::vector<LiftNode>& nodes, const std::vector<LiftingMatrix>& bs, const Vec& x,
                             bool keep_trace = false)
{
    const auto start = std::chrono::steady_clock::now();
    ForwardResult r;
    StateVec s = init_state(nodes, x);
    if (keep_trace)
        r.trace.states.push_back(s);
    for (const auto& b : bs) {
        s = lift_state(s, b, &r.trace.expr_applications);
        if (keep_trace)
            r.trace.states.push_back(s);
    }
    const auto& top = nodes.back();
    r.y = s.blocks.at(top.id.value);
    if (keep_trace)
        r.trace.node_values = s.blocks;
    r.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// Network output through the lifting recursion; g must be normalized.
inline ForwardResult forward(const Graph& g, const Vec& x, bool keep_trace = false)
{
    const auto bs = factorize(g);
    return forward(lift_nodes(g, assign_levels(g)), bs, x, keep_trace);
}

/// Undoes a forward lifting: applies B^{-1}_{L,L-1} ... B^{-1}_{1,0}.
inline StateVec unlift(const StateVec& top, const std::vector<LiftingMatrix>& bs)
{
    StateVec s = top;
    for (const auto& inv : inverse_chain(bs))
        s = lift_state(s, inv);
    return s;
}

/// Signal that the start node does not reach the end node.
struct Unreachable {
    NodeId from;
    NodeId to;
};

using SubgraphValue = std::variant<Vec, Unreachable>;

/// Nodes on some j -> i path.
inline std::vector<bool> path_union(const Graph& g, NodeId i, NodeId j)
{
    auto fwd = forward_reachable(g, {j});
    const auto back = backward_reachable(g, {i});
    for (std::size_t k = 0; k < fwd.size(); ++k)
        fwd[k] = fwd[k] && back[k];
    return fwd;
}

/// f[i,j](z): the sub-graph from j to i with z at j. Merge inputs from
/// nodes outside the sub-graph count as zero.
inline SubgraphValue subgraph_eval(const Graph& g, NodeId i, NodeId j, const Vec& z)
{
    require_valid(g);
    if (static_cast<std::size_t>(z.size()) != g.dim(j))
        fail(ErrorCode::DimensionMismatch, "node " + std::to_string(j.value) + " has dim " +
                                               std::to_string(g.dim(j)) + ", got " + std::to_string(z.size()));
    const auto in_sub = path_union(g, i, j);
    if (!in_sub[i.value])
        return Unreachable{j, i};
    std::vector<Vec> value(g.node_count());
    value[j.value] = z;
    for (auto v : topological_order(g)) {
        if (!in_sub[v.value] || v == j)
            continue;
        const auto& node = g.node(v);
        Vec acc = Vec::Zero(static_cast<Eigen::Index>(node.dim));
        Eigen::Index offset = 0;
        for (auto k : g.in_arcs(v)) {
            const auto& a = g.arcs()[k];
            const auto width = static_cast<Eigen::Index>(a.fn.out_dim());
            if (in_sub[a.src.value]) {
                if (node.kind == NodeKind::Concat)
                    acc.segment(offset, width) = a.fn.apply(value[a.src.value]);
                else
                    acc += a.fn.apply(value[a.src.value]);
            }
            offset += width;
        }
        value[v.value] = std::move(acc);
    }
    return value[i.value];
}

/// Every merge node strictly after j on a j -> i path has all of its
/// in-neighbours on such paths; j itself must not be a merge node unless
/// i == j.
inline bool is_complete_subgraph(const Graph& g, NodeId i, NodeId j)
{
    if (i == j)
        return true;
    const auto in_sub = path_union(g, i, j);
    if (!in_sub[i.value])
        return false;
    if (is_merge(g.node(j).kind))
        return false;
    for (const auto& a : g.arcs())
        if (in_sub[a.dst.value] && a.dst != j && is_merge(g.node(a.dst).kind) && !in_sub[a.src.value])
            return false;
    return true;
}

/// M(i, j) = 1 iff the j -> i sub-graph is complete, indexed by node id.
inline BitMatrix completeness_matrix(const Graph& g)
{
    const auto m = static_cast<Eigen::Index>(g.node_count());
    BitMatrix out = BitMatrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            out(i, j) = is_complete_subgraph(g, NodeId{static_cast<std::size_t>(i)},
                                             NodeId{static_cast<std::size_t>(j)})
                            ? 1
                            : 0;
    return out;
}

/// Replaces entries on incomplete sub-graphs with masked zeros.
inline FuncMatrix mask_incomplete(const FuncMatrix& c, const Graph& g)
{
    FuncMatrix out = c;
    for (const auto& [cell, expr] : c.cells())
        if (!is_complete_subgraph(g, c.rows()[cell.first], c.cols()[cell.second]))
            out.mask(cell.first, cell.second);
    return out;
}

} // namespace dagdnn
