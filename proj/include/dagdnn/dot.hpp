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
#include "dagdnn/levels.hpp"

#include <sstream>
#include <string>

namespace dagdnn {

/// Graphviz rendering; node labels read "id:level:kind". Levels are omitted
/// (shown as "?") when the graph is not levelizable.
inline std::string to_dot(const Graph& g)
{
    LevelMap lm;
    bool have_levels = true;
    try {
        lm = assign_levels(g);
    } catch (const Error&) {
        have_levels = false;
    }
    std::ostringstream os;
    os << "digraph dagdnn {\n  rankdir=LR;\n";
    for (const auto& n : g.nodes()) {
        os << "  n" << n.id.value << " [label=\"" << n.id.value << ':'
           << (have_levels ? std::to_string(lm.level(n.id)) : std::string("?")) << ':' << to_string(n.kind) << "\"";
        if (n.kind == NodeKind::Addition)
            os << ", shape=box";
        else if (n.kind == NodeKind::Relay)
            os << ", shape=point";
        os << "];\n";
    }
    for (const auto& a : g.arcs())
        os << "  n" << a.src.value << " -> n" << a.dst.value << " [label=\"" << a.fn.describe() << "\"];\n";
    os << "}\n";
    return os.str();
}

} // namespace dagdnn
