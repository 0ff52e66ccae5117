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

#include <cstddef>
#include <vector>

namespace dagdnn {

/// Longest-path levels of a single-input DAG and the induced node order.
///
/// Nodes are ordered by level, ties broken by ascending id; position()
/// gives a node's row/column in every function matrix built on the graph.
class LevelMap {
public:
    LevelMap() = default;

    explicit LevelMap(std::vector<std::size_t> level) : level_(std::move(level))
    {
        std::size_t top = 0;
        for (auto l : level_)
            top = std::max(top, l);
        per_level_.assign(level_.empty() ? 0 : top + 1, {});
        for (std::size_t i = 0; i < level_.size(); ++i)
            per_level_[level_[i]].push_back(NodeId{i});
        position_.assign(level_.size(), 0);
        for (const auto& nodes : per_level_)
            for (auto id : nodes) {
                position_[id.value] = order_.size();
                order_.push_back(id);
            }
    }

    std::size_t level(NodeId id) const { return level_.at(id.value); }
    std::size_t max_level() const { return per_level_.empty() ? 0 : per_level_.size() - 1; }
    std::size_t level_count() const { return per_level_.size(); }
    const std::vector<NodeId>& at_level(std::size_t l) const { return per_level_.at(l); }

    /// m_l: number of nodes at level l.
    std::size_t count(std::size_t l) const { return per_level_.at(l).size(); }

    /// m_{<=n}: number of nodes at levels 0..n.
    std::size_t count_up_to(std::size_t n) const
    {
        std::size_t total = 0;
        for (std::size_t l = 0; l <= n && l < per_level_.size(); ++l)
            total += per_level_[l].size();
        return total;
    }

    const std::vector<NodeId>& order() const { return order_; }
    std::size_t position(NodeId id) const { return position_.at(id.value); }
    const std::vector<std::size_t>& levels() const { return level_; }

private:
    std::vector<std::size_t> level_;
    std::vector<std::vector<NodeId>> per_level_;
    std::vector<NodeId> order_;
    std::vector<std::size_t> position_;
};

/// level(a) = number of arcs on the longest path from the input to a.
inline LevelMap assign_levels(const Graph& g)
{
    const auto order = topological_order(g);
    if (order.empty() && g.node_count() > 0)
        fail(ErrorCode::CycleDetected, "levels are undefined on a cyclic graph");
    const NodeId in = g.input();
    std::vector<std::vector<std::size_t>> pred(g.node_count());
    for (const auto& a : g.arcs())
        pred[a.dst.value].push_back(a.src.value);
    std::vector<std::size_t> level(g.node_count(), 0);
    for (auto v : order) {
        if (v == in)
            continue;
        if (pred[v.value].empty())
            fail(ErrorCode::UnreachableNode, "node " + std::to_string(v.value) + " has no incoming arc");
        std::size_t best = 0;
        for (auto p : pred[v.value])
            best = std::max(best, level[p] + 1);
        level[v.value] = best;
    }
    return LevelMap(std::move(level));
}

} // namespace dagdnn
