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

#include "dagdnn/arc_function.hpp"
#include "dagdnn/error.hpp"

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <vector>

namespace dagdnn {

struct NodeId {
    std::size_t value = 0;

    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct ArcId {
    std::size_t value = 0;

    friend auto operator<=>(const ArcId&, const ArcId&) = default;
};

enum class NodeKind { Input, Output, Compute, Concat, Addition, Relay };

inline std::string to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::Input: return "input";
    case NodeKind::Output: return "output";
    case NodeKind::Compute: return "compute";
    case NodeKind::Concat: return "concat";
    case NodeKind::Addition: return "addition";
    case NodeKind::Relay: return "relay";
    }
    return "compute";
}

inline NodeKind node_kind_from_string(const std::string& s)
{
    if (s == "input") return NodeKind::Input;
    if (s == "output") return NodeKind::Output;
    if (s == "compute") return NodeKind::Compute;
    if (s == "concat") return NodeKind::Concat;
    if (s == "addition") return NodeKind::Addition;
    if (s == "relay") return NodeKind::Relay;
    fail(ErrorCode::ParseError, "unknown node kind '" + s + "'");
}

/// Concat and Addition nodes merge several incoming arcs; every other
/// non-input node takes exactly one.
inline bool is_merge(NodeKind kind) { return kind == NodeKind::Concat || kind == NodeKind::Addition; }

struct Node {
    NodeId id;
    NodeKind kind = NodeKind::Compute;
    std::size_t dim = 0;
    std::string label;
};

struct Arc {
    ArcId id;
    NodeId src;
    NodeId dst;
    ArcFunction fn;
};

/// DAG-DNN: nodes carry output dimensions, arcs carry base functions.
///
/// Node ids are dense (node i has id i). Arc ids are stable labels that
/// survive rewrite passes; they key trainable parameters. A Concat node
/// stacks its inputs in arc-list order.
class Graph {
public:
    NodeId add_node(NodeKind kind, std::size_t dim, std::string label = {})
    {
        NodeId id{nodes_.size()};
        nodes_.push_back({id, kind, dim, std::move(label)});
        return id;
    }

    ArcId add_arc(NodeId src, NodeId dst, ArcFunction fn)
    {
        ArcId id{next_arc_id_++};
        arcs_.push_back({id, src, dst, std::move(fn)});
        return id;
    }

    /// Appends an arc keeping a caller-supplied id.
    void add_arc_with_id(ArcId id, NodeId src, NodeId dst, ArcFunction fn)
    {
        arcs_.push_back({id, src, dst, std::move(fn)});
        next_arc_id_ = std::max(next_arc_id_, id.value + 1);
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Arc>& arcs() const { return arcs_; }
    std::vector<Arc>& mutable_arcs() { return arcs_; }
    std::size_t node_count() const { return nodes_.size(); }

    const Node& node(NodeId id) const
    {
        if (id.value >= nodes_.size())
            fail(ErrorCode::InvalidGraph, "node " + std::to_string(id.value) + " does not exist");
        return nodes_[id.value];
    }
    Node& mutable_node(NodeId id) { return nodes_.at(id.value); }

    std::size_t dim(NodeId id) const { return node(id).dim; }

    const std::vector<NodeId>& outputs() const { return outputs_; }
    void set_outputs(std::vector<NodeId> outs) { outputs_ = std::move(outs); }

    std::vector<NodeId> inputs() const
    {
        std::vector<NodeId> out;
        for (const auto& n : nodes_)
            if (n.kind == NodeKind::Input)
                out.push_back(n.id);
        return out;
    }

    NodeId input() const
    {
        auto ins = inputs();
        if (ins.size() != 1)
            fail(ins.empty() ? ErrorCode::MissingInputOrOutput : ErrorCode::MultipleInputs,
                 "graph has " + std::to_string(ins.size()) + " input nodes");
        return ins.front();
    }

    NodeId output() const
    {
        if (outputs_.size() != 1)
            fail(outputs_.empty() ? ErrorCode::MissingInputOrOutput : ErrorCode::MultipleOutputs,
                 "graph has " + std::to_string(outputs_.size()) + " output nodes");
        return outputs_.front();
    }

    /// Indices into arcs() of the arcs entering `id`, in arc-list order.
    std::vector<std::size_t> in_arcs(NodeId id) const
    {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < arcs_.size(); ++k)
            if (arcs_[k].dst == id)
                out.push_back(k);
        return out;
    }

    std::vector<std::size_t> out_arcs(NodeId id) const
    {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < arcs_.size(); ++k)
            if (arcs_[k].src == id)
                out.push_back(k);
        return out;
    }

    std::size_t arc_index(ArcId id) const
    {
        for (std::size_t k = 0; k < arcs_.size(); ++k)
            if (arcs_[k].id == id)
                return k;
        fail(ErrorCode::InvalidGraph, "arc " + std::to_string(id.value) + " does not exist");
    }

    std::size_t next_arc_id() const { return next_arc_id_; }
    void reserve_arc_ids(std::size_t next) { next_arc_id_ = std::max(next_arc_id_, next); }

private:
    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::vector<NodeId> outputs_;
    std::size_t next_arc_id_ = 0;
};

struct ValidationIssue {
    ErrorCode code;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }
    bool has(ErrorCode code) const
    {
        return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.code == code; });
    }
};

struct ValidateOptions {
    /// Accept several Input nodes and several outputs (before I/O normalization).
    bool allow_multi_io = false;
};

/// Deterministic topological order (smallest ready id first); empty if cyclic.
inline std::vector<NodeId> topological_order(const Graph& g)
{
    const std::size_t n = g.node_count();
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<std::size_t>> succ(n);
    for (const auto& a : g.arcs()) {
        if (a.src.value >= n || a.dst.value >= n)
            return {};
        ++indeg[a.dst.value];
        succ[a.src.value].push_back(a.dst.value);
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0)
            ready.push(i);
    std::vector<NodeId> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t v = ready.top();
        ready.pop();
        order.push_back(NodeId{v});
        for (std::size_t w : succ[v])
            if (--indeg[w] == 0)
                ready.push(w);
    }
    if (order.size() != n)
        return {};
    return order;
}

/// Nodes reachable from `sources` following arcs forward (sources included).
inline std::vector<bool> forward_reachable(const Graph& g, const std::vector<NodeId>& sources)
{
    std::vector<std::vector<std::size_t>> succ(g.node_count());
    for (const auto& a : g.arcs())
        succ[a.src.value].push_back(a.dst.value);
    std::vector<bool> seen(g.node_count(), false);
    std::vector<std::size_t> stack;
    for (auto s : sources) {
        if (!seen[s.value]) {
            seen[s.value] = true;
            stack.push_back(s.value);
        }
    }
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto w : succ[v])
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
    }
    return seen;
}

/// Nodes from which one of `targets` is reachable (targets included).
inline std::vector<bool> backward_reachable(const Graph& g, const std::vector<NodeId>& targets)
{
    std::vector<std::vector<std::size_t>> pred(g.node_count());
    for (const auto& a : g.arcs())
        pred[a.dst.value].push_back(a.src.value);
    std::vector<bool> seen(g.node_count(), false);
    std::vector<std::size_t> stack;
    for (auto t : targets) {
        if (!seen[t.value]) {
            seen[t.value] = true;
            stack.push_back(t.value);
        }
    }
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto w : pred[v])
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
    }
    return seen;
}

inline ValidationReport validate(const Graph& g, const ValidateOptions& opts = {})
{
    ValidationReport report;
    auto issue = [&](ErrorCode code, std::string msg) { report.issues.push_back({code, std::move(msg)}); };
    const std::size_t n = g.node_count();

    for (std::size_t i = 0; i < n; ++i)
        if (g.nodes()[i].id.value != i)
            issue(ErrorCode::InvalidGraph, "node ids must be dense; position " + std::to_string(i) + " holds id " +
                                               std::to_string(g.nodes()[i].id.value));
    if (n == 0) {
        issue(ErrorCode::MissingInputOrOutput, "graph has no nodes");
        return report;
    }
    bool endpoints_ok = true;
    for (const auto& a : g.arcs()) {
        if (a.src.value >= n || a.dst.value >= n) {
            issue(ErrorCode::InvalidGraph, "arc " + std::to_string(a.id.value) + " references a missing node");
            endpoints_ok = false;
        } else if (a.src == a.dst) {
            issue(ErrorCode::CycleDetected, "arc " + std::to_string(a.id.value) + " is a self-loop on node " +
                                                std::to_string(a.src.value));
        }
    }
    if (!endpoints_ok)
        return report;

    const auto ins = g.inputs();
    if (ins.empty())
        issue(ErrorCode::MissingInputOrOutput, "graph has no input node");
    else if (ins.size() > 1 && !opts.allow_multi_io)
        issue(ErrorCode::MultipleInputs, "graph has " + std::to_string(ins.size()) + " input nodes");
    if (g.outputs().empty())
        issue(ErrorCode::MissingInputOrOutput, "graph has no output node");
    else if (g.outputs().size() > 1 && !opts.allow_multi_io)
        issue(ErrorCode::MultipleOutputs, "graph has " + std::to_string(g.outputs().size()) + " output nodes");
    for (auto o : g.outputs())
        if (o.value >= n)
            issue(ErrorCode::InvalidGraph, "output " + std::to_string(o.value) + " does not exist");
    for (const auto& node : g.nodes())
        if (node.kind == NodeKind::Output &&
            std::find(g.outputs().begin(), g.outputs().end(), node.id) == g.outputs().end())
            issue(ErrorCode::InvalidGraph, "node " + std::to_string(node.id.value) + " is of kind output but not an output");

    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::size_t> concat_width(n, 0);
    for (const auto& a : g.arcs()) {
        ++indeg[a.dst.value];
        const auto& src = g.node(a.src);
        const auto& dst = g.node(a.dst);
        if (a.fn.in_dim() != src.dim)
            issue(ErrorCode::DimensionMismatch, "arc " + std::to_string(a.id.value) + " (" + a.fn.describe() +
                                                    ") input dim differs from node " + std::to_string(src.id.value) +
                                                    " dim " + std::to_string(src.dim));
        if (dst.kind == NodeKind::Concat)
            concat_width[a.dst.value] += a.fn.out_dim();
        else if (a.fn.out_dim() != dst.dim)
            issue(ErrorCode::DimensionMismatch, "arc " + std::to_string(a.id.value) + " (" + a.fn.describe() +
                                                    ") output dim differs from node " + std::to_string(dst.id.value) +
                                                    " dim " + std::to_string(dst.dim));
    }
    for (const auto& node : g.nodes()) {
        const auto i = node.id.value;
        if (node.kind == NodeKind::Input) {
            if (indeg[i] != 0)
                issue(ErrorCode::InvalidInDegree, "input node " + std::to_string(i) + " has incoming arcs");
            continue;
        }
        if (node.kind == NodeKind::Concat && indeg[i] > 0 && concat_width[i] != node.dim)
            issue(ErrorCode::DimensionMismatch, "concat node " + std::to_string(i) + " has dim " +
                                                    std::to_string(node.dim) + " but its inputs stack to " +
                                                    std::to_string(concat_width[i]));
        if (!is_merge(node.kind) && indeg[i] > 1)
            issue(ErrorCode::InvalidInDegree, to_string(node.kind) + " node " + std::to_string(i) + " has " +
                                                  std::to_string(indeg[i]) + " incoming arcs");
    }

    if (topological_order(g).empty())
        issue(ErrorCode::CycleDetected, "graph contains a directed cycle");
    const auto seen = forward_reachable(g, ins);
    for (std::size_t i = 0; i < n; ++i)
        if (!seen[i])
            issue(ErrorCode::UnreachableNode, "node " + std::to_string(i) + " is not reachable from the input");
    return report;
}

/// Throws the first validation issue, if any.
inline void require_valid(const Graph& g, const ValidateOptions& opts = {})
{
    const auto report = validate(g, opts);
    if (!report.ok())
        fail(report.issues.front().code, report.issues.front().message);
}

} // namespace dagdnn
