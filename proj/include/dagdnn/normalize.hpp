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
#include "dagdnn/graph_ops.hpp"
#include "dagdnn/levels.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dagdnn {

/// Merges several inputs into one stacked input feeding selection arcs, and
/// several outputs into one concat node. Inputs stack in ascending id order,
/// outputs in the order of Graph::outputs().
inline Graph normalize_io(const Graph& g)
{
    require_valid(g, {.allow_multi_io = true});
    const auto ins = g.inputs();
    if (ins.size() == 1 && g.outputs().size() == 1)
        return g;
    Graph r = g;
    if (ins.size() > 1) {
        std::size_t total = 0;
        for (auto i : ins)
            total += g.dim(i);
        const NodeId merged = r.add_node(NodeKind::Input, total, "io:input");
        std::size_t offset = 0;
        for (auto i : ins) {
            r.mutable_node(i).kind = NodeKind::Compute;
            r.add_arc(merged, i, ArcFunction::select(total, g.dim(i), offset));
            offset += g.dim(i);
        }
    }
    if (g.outputs().size() > 1) {
        std::size_t total = 0;
        for (auto o : g.outputs())
            total += g.dim(o);
        const NodeId cat = r.add_node(NodeKind::Concat, total, "io:output");
        for (auto o : g.outputs()) {
            if (r.node(o).kind == NodeKind::Output)
                r.mutable_node(o).kind = NodeKind::Compute;
            r.add_arc(o, cat, ArcFunction::identity(g.dim(o)));
        }
        r.set_outputs({cat});
    }
    require_valid(r);
    return r;
}

/// Replaces every k-way concat node by an addition node.
///
/// Each incoming arc p -> c is redirected into a fresh relay r_i, and r_i
/// feeds the addition node through the block embedding I_i. The former
/// concat's outgoing arcs leave from one more fresh node fed by an identity
/// arc, giving k+1 inserted nodes per concat.
inline Graph concat_to_addition(const Graph& g)
{
    require_valid(g);
    Graph r = g;
    for (const auto& node : g.nodes()) {
        if (node.kind != NodeKind::Concat)
            continue;
        const NodeId c = node.id;
        const auto outgoing = r.out_arcs(c);
        const auto incoming = r.in_arcs(c);
        std::size_t offset = 0;
        std::size_t ordinal = 0;
        for (auto k : incoming) {
            const std::size_t width = r.arcs()[k].fn.out_dim();
            const std::string label =
                "concat:" + std::to_string(c.value) + ":arc" + std::to_string(r.arcs()[k].id.value) + ":" +
                std::to_string(ordinal++);
            const NodeId relay = r.add_node(NodeKind::Relay, width, label);
            r.mutable_arcs()[k].dst = relay;
            r.add_arc(relay, c, ArcFunction::embed(width, node.dim, offset));
            offset += width;
        }
        r.mutable_node(c).kind = NodeKind::Addition;
        const bool was_output = std::find(g.outputs().begin(), g.outputs().end(), c) != g.outputs().end();
        const NodeId after = r.add_node(was_output ? NodeKind::Output : NodeKind::Relay, node.dim,
                                        "concat:" + std::to_string(c.value) + ":out");
        for (auto k : outgoing)
            r.mutable_arcs()[k].src = after;
        r.add_arc(c, after, ArcFunction::identity(node.dim));
        if (was_output) {
            auto outs = r.outputs();
            std::replace(outs.begin(), outs.end(), c, after);
            r.set_outputs(outs);
        }
    }
    require_valid(r);
    return r;
}

/// Replaces every jump a0 -> an (level gap n >= 2) by a chain through n-1
/// relay nodes; the jump's function stays on the first chain arc and the
/// remaining arcs are identities.
inline Graph eliminate_jumps(const Graph& g)
{
    require_valid(g);
    const LevelMap lm = assign_levels(g);
    Graph r = g;
    const std::size_t arc_count = g.arcs().size();
    for (std::size_t k = 0; k < arc_count; ++k) {
        const Arc arc = g.arcs()[k];
        const std::size_t gap = lm.level(arc.dst) - lm.level(arc.src);
        if (gap < 2)
            continue;
        const std::size_t width = arc.fn.out_dim();
        NodeId prev = r.add_node(NodeKind::Relay, width, "jump:arc" + std::to_string(arc.id.value) + ":1");
        r.mutable_arcs()[k].dst = prev;
        for (std::size_t step = 2; step < gap; ++step) {
            const NodeId next = r.add_node(NodeKind::Relay, width,
                                           "jump:arc" + std::to_string(arc.id.value) + ":" + std::to_string(step));
            r.add_arc(prev, next, ArcFunction::identity(width));
            prev = next;
        }
        r.add_arc(prev, arc.dst, ArcFunction::identity(width));
    }
    require_valid(r);
    return r;
}

/// normalize_io -> concat_to_addition -> eliminate_jumps.
inline Graph normalize(const Graph& g)
{
    return eliminate_jumps(concat_to_addition(normalize_io(g)));
}

enum class OplusViolation { ParallelArcs, InDegree };

struct OplusIssue {
    OplusViolation kind;
    NodeId src;
    NodeId dst;
    std::string message;
};

struct OplusReport {
    std::vector<OplusIssue> violations;
    /// Jump targets that are not addition nodes (reported, not enforced).
    std::vector<NodeId> non_addition_jump_targets;

    bool ok() const { return violations.empty(); }
};

/// (i) at most one arc per ordered node pair; (ii) every non-addition node
/// other than the input has exactly one incoming arc.
inline OplusReport check_oplus_invariants(const Graph& g)
{
    OplusReport report;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> pairs;
    for (const auto& a : g.arcs())
        ++pairs[{a.src.value, a.dst.value}];
    for (const auto& [key, count] : pairs)
        if (count > 1)
            report.violations.push_back({OplusViolation::ParallelArcs, NodeId{key.first}, NodeId{key.second},
                                         std::to_string(count) + " arcs from node " + std::to_string(key.first) +
                                             " to node " + std::to_string(key.second)});
    std::vector<std::size_t> indeg(g.node_count(), 0);
    for (const auto& a : g.arcs())
        ++indeg[a.dst.value];
    for (const auto& node : g.nodes()) {
        if (node.kind == NodeKind::Input || node.kind == NodeKind::Addition)
            continue;
        if (indeg[node.id.value] != 1)
            report.violations.push_back({OplusViolation::InDegree, node.id, node.id,
                                         to_string(node.kind) + " node " + std::to_string(node.id.value) + " has " +
                                             std::to_string(indeg[node.id.value]) + " incoming arcs"});
    }
    if (!topological_order(g).empty() && g.inputs().size() == 1) {
        const LevelMap lm = assign_levels(g);
        for (const auto& a : g.arcs())
            if (lm.level(a.dst) - lm.level(a.src) >= 2 && g.node(a.dst).kind != NodeKind::Addition)
                report.non_addition_jump_targets.push_back(a.dst);
    }
    return report;
}

/// Addition-node level-graph form: valid, no concat nodes, one arc per node
/// pair, a single in-arc on every non-addition node, unit level gaps, and the
/// output alone on the top level.
inline bool is_normalized(const Graph& g, std::string* why = nullptr)
{
    auto reject = [&](std::string msg) {
        if (why)
            *why = std::move(msg);
        return false;
    };
    const auto report = validate(g);
    if (!report.ok())
        return reject(report.issues.front().message);
    for (const auto& node : g.nodes())
        if (node.kind == NodeKind::Concat)
            return reject("node " + std::to_string(node.id.value) + " is a concat node");
    const auto inv = check_oplus_invariants(g);
    if (!inv.ok())
        return reject(inv.violations.front().message);
    const LevelMap lm = assign_levels(g);
    for (const auto& a : g.arcs())
        if (lm.level(a.dst) != lm.level(a.src) + 1)
            return reject("arc " + std::to_string(a.id.value) + " spans more than one level");
    const auto top = lm.max_level();
    if (lm.level(g.output()) != top || lm.count(top) != 1)
        return reject("the output node must be the only node on the top level");
    return true;
}

inline void require_normalized(const Graph& g)
{
    std::string why;
    if (!is_normalized(g, &why))
        fail(ErrorCode::NotNormalized, why);
}

} // namespace dagdnn
