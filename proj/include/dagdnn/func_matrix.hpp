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
#include "dagdnn/graph.hpp"
#include "dagdnn/levels.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dagdnn {

/// Matrix over arc expressions, rows and columns labelled by nodes.
///
/// Storage is sparse: absent cells are Zero. Masked cells are Zero cells
/// that were explicitly blanked, e.g. functions on incomplete sub-graphs.
class FuncMatrix {
public:
    using Cell = std::pair<std::size_t, std::size_t>;

    FuncMatrix() = default;

    FuncMatrix(std::vector<NodeId> rows, std::vector<std::size_t> row_dims, std::vector<NodeId> cols,
               std::vector<std::size_t> col_dims)
        : rows_(std::move(rows)), cols_(std::move(cols)), row_dims_(std::move(row_dims)), col_dims_(std::move(col_dims))
    {
        if (rows_.size() != row_dims_.size() || cols_.size() != col_dims_.size())
            fail(ErrorCode::ShapeMismatch, "node and dimension lists differ in length");
    }

    /// Square matrix with the identity function on the diagonal.
    static FuncMatrix identity(const std::vector<NodeId>& nodes, const std::vector<std::size_t>& dims)
    {
        FuncMatrix m(nodes, dims, nodes, dims);
        for (std::size_t k = 0; k < nodes.size(); ++k)
            m.set(k, k, ArcExpr::identity(dims[k]));
        return m;
    }

    std::size_t row_count() const { return rows_.size(); }
    std::size_t col_count() const { return cols_.size(); }
    const std::vector<NodeId>& rows() const { return rows_; }
    const std::vector<NodeId>& cols() const { return cols_; }
    const std::vector<std::size_t>& row_dims() const { return row_dims_; }
    const std::vector<std::size_t>& col_dims() const { return col_dims_; }

    std::size_t row_of(NodeId id) const { return index_of(rows_, id, "row"); }
    std::size_t col_of(NodeId id) const { return index_of(cols_, id, "column"); }

    ArcExpr at(std::size_t r, std::size_t c) const
    {
        check_cell(r, c);
        if (auto it = cells_.find({r, c}); it != cells_.end())
            return it->second;
        return ArcExpr::zero(col_dims_[c], row_dims_[r]);
    }

    ArcExpr at(NodeId row, NodeId col) const { return at(row_of(row), col_of(col)); }

    bool is_zero(std::size_t r, std::size_t c) const { return cells_.find({r, c}) == cells_.end(); }

    void set(std::size_t r, std::size_t c, const ArcExpr& e)
    {
        check_cell(r, c);
        if (e.in_dim() != col_dims_[c] || e.out_dim() != row_dims_[r])
            fail(ErrorCode::DimensionMismatch, "cell (" + std::to_string(r) + "," + std::to_string(c) + ") expects " +
                                                   std::to_string(col_dims_[c]) + "->" + std::to_string(row_dims_[r]) +
                                                   ", got " + std::to_string(e.in_dim()) + "->" +
                                                   std::to_string(e.out_dim()));
        if (e.is_zero())
            cells_.erase({r, c});
        else
            cells_.insert_or_assign(Cell{r, c}, e);
    }

    /// Blanks a cell and records it as masked.
    void mask(std::size_t r, std::size_t c)
    {
        check_cell(r, c);
        cells_.erase({r, c});
        masked_.insert({r, c});
    }

    bool is_masked(std::size_t r, std::size_t c) const { return masked_.count({r, c}) > 0; }
    const std::set<Cell>& masked() const { return masked_; }

    /// Nonzero cells in row-major order.
    const std::map<Cell, ArcExpr>& cells() const { return cells_; }
    std::size_t nonzero_count() const { return cells_.size(); }

    /// True when no nonzero cell has a column node above its row node in `lm`.
    bool is_lower_triangular(const LevelMap& lm) const
    {
        for (const auto& [cell, e] : cells_)
            if (lm.position(cols_[cell.second]) > lm.position(rows_[cell.first]))
                return false;
        return true;
    }

private:
    static std::size_t index_of(const std::vector<NodeId>& ids, NodeId id, const char* what)
    {
        for (std::size_t k = 0; k < ids.size(); ++k)
            if (ids[k] == id)
                return k;
        fail(ErrorCode::ShapeMismatch, std::string("node ") + std::to_string(id.value) + " is not a " + what);
    }

    void check_cell(std::size_t r, std::size_t c) const
    {
        if (r >= rows_.size() || c >= cols_.size())
            fail(ErrorCode::ShapeMismatch, "cell (" + std::to_string(r) + "," + std::to_string(c) + ") is outside a " +
                                               std::to_string(rows_.size()) + "x" + std::to_string(cols_.size()) +
                                               " matrix");
    }

    std::vector<NodeId> rows_;
    std::vector<NodeId> cols_;
    std::vector<std::size_t> row_dims_;
    std::vector<std::size_t> col_dims_;
    std::map<Cell, ArcExpr> cells_;
    std::set<Cell> masked_;
};

/// Cellwise sum; zero cells are elided.
inline FuncMatrix mat_add(const FuncMatrix& a, const FuncMatrix& c)
{
    if (a.rows() != c.rows() || a.cols() != c.cols() || a.row_dims() != c.row_dims() || a.col_dims() != c.col_dims())
        fail(ErrorCode::ShapeMismatch, "matrix sum needs identical row and column labels");
    FuncMatrix out(a.rows(), a.row_dims(), a.cols(), a.col_dims());
    for (const auto& [cell, e] : a.cells())
        out.set(cell.first, cell.second, e);
    for (const auto& [cell, e] : c.cells()) {
        if (out.is_zero(cell.first, cell.second))
            out.set(cell.first, cell.second, e);
        else
            out.set(cell.first, cell.second,
                    sum_simplified({out.at(cell.first, cell.second), e}, e.in_dim(), e.out_dim()));
    }
    return out;
}

/// Product a*c with entry (i,j) = sum over l of a(i,l) after c(l,j).
inline FuncMatrix mat_mul(const FuncMatrix& a, const FuncMatrix& c)
{
    if (a.cols() != c.rows())
        fail(ErrorCode::ShapeMismatch, "matrix product needs the left columns to match the right rows");
    if (a.col_dims() != c.row_dims())
        fail(ErrorCode::DimensionMismatch, "matrix product has mismatched inner block dims");
    std::vector<std::vector<std::pair<std::size_t, ArcExpr>>> c_rows(c.row_count());
    for (const auto& [cell, e] : c.cells())
        c_rows[cell.first].emplace_back(cell.second, e);

    std::map<FuncMatrix::Cell, std::vector<ArcExpr>> terms;
    for (const auto& [cell, left] : a.cells())
        for (const auto& [j, right] : c_rows[cell.second])
            terms[{cell.first, j}].push_back(compose_simplified(left, right));

    FuncMatrix out(a.rows(), a.row_dims(), c.cols(), c.col_dims());
    for (const auto& [cell, ts] : terms)
        out.set(cell.first, cell.second, sum_simplified(ts, c.col_dims()[cell.second], a.row_dims()[cell.first]));
    return out;
}

/// Applies the matrix to column blocks: row i gets sum over j of m(i,j)(x_j).
inline std::vector<Vec> eval_matrix(const FuncMatrix& m, const std::vector<Vec>& x)
{
    if (x.size() != m.col_count())
        fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(m.col_count()) + " input blocks, got " +
                                           std::to_string(x.size()));
    std::vector<ExprEvaluator::VecPtr> inputs;
    inputs.reserve(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (static_cast<std::size_t>(x[j].size()) != m.col_dims()[j])
            fail(ErrorCode::DimensionMismatch, "input block " + std::to_string(j) + " has the wrong dimension");
        inputs.push_back(std::make_shared<const Vec>(x[j]));
    }
    std::vector<Vec> out;
    out.reserve(m.row_count());
    for (auto d : m.row_dims())
        out.push_back(Vec::Zero(static_cast<Eigen::Index>(d)));
    ExprEvaluator evaluator;
    for (const auto& [cell, e] : m.cells())
        out[cell.first] += *evaluator.eval(e, inputs[cell.second]);
    return out;
}

} // namespace dagdnn
