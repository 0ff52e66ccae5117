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
#include "dagdnn/cpwl.hpp"
#include "dagdnn/dot.hpp"
#include "dagdnn/error.hpp"
#include "dagdnn/evaluation.hpp"
#include "dagdnn/expr.hpp"
#include "dagdnn/func_matrix.hpp"
#include "dagdnn/graph.hpp"
#include "dagdnn/graph_ops.hpp"
#include "dagdnn/levels.hpp"
#include "dagdnn/lifting.hpp"
#include "dagdnn/linalg.hpp"
#include "dagdnn/normalize.hpp"
#include "dagdnn/pruning.hpp"
#include "dagdnn/serialize.hpp"
#include "dagdnn/sigma.hpp"
