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
#include "dagdnn/linalg.hpp"

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dagdnn {

/// Element of the closure of the base set under composition and addition.
///
/// Values are immutable and share subtrees. Composition is never
/// re-associated and never distributed over a sum from the left.
class ArcExpr {
public:
    enum class Op { Zero, Identity, Base, Compose, Sum };

    static ArcExpr zero(std::size_t in_dim, std::size_t out_dim)
    {
        return ArcExpr(std::make_shared<Node>(Node{Op::Zero, in_dim, out_dim, {}, {}}));
    }

    static ArcExpr identity(std::size_t dim)
    {
        return ArcExpr(std::make_shared<Node>(Node{Op::Identity, dim, dim, {}, {}}));
    }

    static ArcExpr base(ArcFunction fn)
    {
        const auto in = fn.in_dim();
        const auto out = fn.out_dim();
        return ArcExpr(std::make_shared<Node>(Node{Op::Base, in, out, std::move(fn), {}}));
    }

    /// outer after inner; no simplification.
    static ArcExpr compose(const ArcExpr& outer, const ArcExpr& inner)
    {
        if (inner.out_dim() != outer.in_dim())
            fail(ErrorCode::DimensionMismatch, "cannot compose: inner output dim " + std::to_string(inner.out_dim()) +
                                                   " != outer input dim " + std::to_string(outer.in_dim()));
        return ArcExpr(
            std::make_shared<Node>(Node{Op::Compose, inner.in_dim(), outer.out_dim(), {}, {outer, inner}}));
    }

    /// Sum of one or more terms with equal dimensions; no simplification.
    static ArcExpr sum(std::vector<ArcExpr> terms)
    {
        if (terms.empty())
            fail(ErrorCode::ShapeMismatch, "a sum needs at least one term");
        for (const auto& t : terms)
            if (t.in_dim() != terms.front().in_dim() || t.out_dim() != terms.front().out_dim())
                fail(ErrorCode::DimensionMismatch, "sum terms must share input and output dims");
        const auto in = terms.front().in_dim();
        const auto out = terms.front().out_dim();
        return ArcExpr(std::make_shared<Node>(Node{Op::Sum, in, out, {}, std::move(terms)}));
    }

    Op op() const { return node_->op; }
    std::size_t in_dim() const { return node_->in_dim; }
    std::size_t out_dim() const { return node_->out_dim; }
    bool is_zero() const { return node_->op == Op::Zero; }
    bool is_identity() const { return node_->op == Op::Identity; }

    const ArcFunction& fn() const
    {
        if (node_->op != Op::Base)
            fail(ErrorCode::InvalidGraph, "expression is not a base function");
        return *node_->fn;
    }
    const ArcExpr& outer() const { return node_->children.at(0); }
    const ArcExpr& inner() const { return node_->children.at(1); }
    const std::vector<ArcExpr>& terms() const { return node_->children; }

    /// Stable identity of the shared node, for memoization.
    const void* key() const { return node_.get(); }

private:
    struct Node {
        Op op;
        std::size_t in_dim;
        std::size_t out_dim;
        std::optional<ArcFunction> fn;
        std::vector<ArcExpr> children;
    };

    explicit ArcExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    std::shared_ptr<const Node> node_;
};

/// True when e(0) = 0 can be read off the structure.
inline bool maps_zero_to_zero(const ArcExpr& e)
{
    switch (e.op()) {
    case ArcExpr::Op::Zero:
    case ArcExpr::Op::Identity:
        return true;
    case ArcExpr::Op::Base:
        return e.fn().maps_zero_to_zero();
    case ArcExpr::Op::Compose:
        return maps_zero_to_zero(e.outer()) && maps_zero_to_zero(e.inner());
    case ArcExpr::Op::Sum:
        return std::all_of(e.terms().begin(), e.terms().end(), [](const ArcExpr& t) { return maps_zero_to_zero(t); });
    }
    return false;
}

/// Composition with zero absorbed and the neutral identity elided.
inline ArcExpr compose_simplified(const ArcExpr& outer, const ArcExpr& inner)
{
    if (inner.out_dim() != outer.in_dim())
        fail(ErrorCode::DimensionMismatch, "cannot compose: inner output dim " + std::to_string(inner.out_dim()) +
                                               " != outer input dim " + std::to_string(outer.in_dim()));
    if (outer.is_zero() || (inner.is_zero() && maps_zero_to_zero(outer)))
        return ArcExpr::zero(inner.in_dim(), outer.out_dim());
    if (outer.is_identity())
        return inner;
    if (inner.is_identity())
        return outer;
    return ArcExpr::compose(outer, inner);
}

/// Sum with zero terms dropped and nested sums flattened.
inline ArcExpr sum_simplified(const std::vector<ArcExpr>& terms, std::size_t in_dim, std::size_t out_dim)
{
    std::vector<ArcExpr> flat;
    for (const auto& t : terms) {
        if (t.in_dim() != in_dim || t.out_dim() != out_dim)
            fail(ErrorCode::DimensionMismatch, "sum terms must share input and output dims");
        if (t.is_zero())
            continue;
        if (t.op() == ArcExpr::Op::Sum)
            flat.insert(flat.end(), t.terms().begin(), t.terms().end());
        else
            flat.push_back(t);
    }
    if (flat.empty())
        return ArcExpr::zero(in_dim, out_dim);
    if (flat.size() == 1)
        return flat.front();
    return ArcExpr::sum(std::move(flat));
}

/// Evaluation-preserving cleanup: zero absorption, identity elision and sum
/// flattening. Shared subtrees are simplified once.
inline ArcExpr simplify(const ArcExpr& e)
{
    std::unordered_map<const void*, ArcExpr> done;
    std::function<ArcExpr(const ArcExpr&)> go = [&](const ArcExpr& x) -> ArcExpr {
        if (auto it = done.find(x.key()); it != done.end())
            return it->second;
        ArcExpr out = x;
        switch (x.op()) {
        case ArcExpr::Op::Compose:
            out = compose_simplified(go(x.outer()), go(x.inner()));
            break;
        case ArcExpr::Op::Sum: {
            std::vector<ArcExpr> terms;
            for (const auto& t : x.terms())
                terms.push_back(go(t));
            out = sum_simplified(terms, x.in_dim(), x.out_dim());
            break;
        }
        default:
            break;
        }
        done.emplace(x.key(), out);
        return out;
    };
    return go(e);
}

/// Evaluates expressions with memoization on (subexpression, input) pairs,
/// so shared sub-path expressions are computed once per input.
class ExprEvaluator {
public:
    using VecPtr = std::shared_ptr<const Vec>;

    VecPtr eval(const ArcExpr& e, const VecPtr& x)
    {
        if (static_cast<std::size_t>(x->size()) != e.in_dim())
            fail(ErrorCode::DimensionMismatch, "expression expects input dim " + std::to_string(e.in_dim()) +
                                                   ", got " + std::to_string(x->size()));
        const Key key{e.key(), x.get()};
        if (auto it = memo_.find(key); it != memo_.end())
            return it->second;
        VecPtr out;
        switch (e.op()) {
        case ArcExpr::Op::Zero:
            out = std::make_shared<const Vec>(Vec::Zero(static_cast<Eigen::Index>(e.out_dim())));
            break;
        case ArcExpr::Op::Identity:
            out = x;
            break;
        case ArcExpr::Op::Base:
            out = std::make_shared<const Vec>(e.fn().apply(*x));
            break;
        case ArcExpr::Op::Compose:
            out = eval(e.outer(), eval(e.inner(), x));
            break;
        case ArcExpr::Op::Sum: {
            Vec acc = Vec::Zero(static_cast<Eigen::Index>(e.out_dim()));
            for (const auto& t : e.terms())
                acc += *eval(t, x);
            out = std::make_shared<const Vec>(std::move(acc));
            break;
        }
        }
        // Holding the input keeps its address from being reused by a later key.
        inputs_.push_back(x);
        memo_.emplace(key, out);
        return out;
    }

    Vec operator()(const ArcExpr& e, const Vec& x) { return *eval(e, std::make_shared<const Vec>(x)); }

private:
    struct Key {
        const void* expr;
        const void* input;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const
        {
            const auto a = std::hash<const void*>{}(k.expr);
            const auto b = std::hash<const void*>{}(k.input);
            return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        }
    };

    std::unordered_map<Key, VecPtr, KeyHash> memo_;
    std::vector<VecPtr> inputs_;
};

inline Vec eval_expr(const ArcExpr& e, const Vec& x)
{
    ExprEvaluator evaluator;
    return evaluator(e, x);
}

/// Factors of a composition chain, outermost first; a non-composition is a
/// chain of one.
inline std::vector<ArcExpr> compose_factors(const ArcExpr& e)
{
    if (e.op() != ArcExpr::Op::Compose)
        return {e};
    auto out = compose_factors(e.outer());
    auto in = compose_factors(e.inner());
    out.insert(out.end(), in.begin(), in.end());
    return out;
}

inline bool structurally_equal(const ArcExpr& a, const ArcExpr& b)
{
    if (a.key() == b.key())
        return true;
    if (a.op() != b.op() || a.in_dim() != b.in_dim() || a.out_dim() != b.out_dim())
        return false;
    switch (a.op()) {
    case ArcExpr::Op::Zero:
    case ArcExpr::Op::Identity:
        return true;
    case ArcExpr::Op::Base:
        return a.fn() == b.fn();
    case ArcExpr::Op::Compose:
        return structurally_equal(a.outer(), b.outer()) && structurally_equal(a.inner(), b.inner());
    case ArcExpr::Op::Sum:
        if (a.terms().size() != b.terms().size())
            return false;
        for (std::size_t i = 0; i < a.terms().size(); ++i)
            if (!structurally_equal(a.terms()[i], b.terms()[i]))
                return false;
        return true;
    }
    return false;
}

namespace detail {

// (W, b) of an expression built only from affine pieces, if it is one.
inline std::optional<std::pair<Mat, Vec>> as_affine(const ArcExpr& e)
{
    const auto rows = static_cast<Eigen::Index>(e.out_dim());
    const auto cols = static_cast<Eigen::Index>(e.in_dim());
    switch (e.op()) {
    case ArcExpr::Op::Zero:
        return std::pair{Mat::Zero(rows, cols), Vec::Zero(rows)};
    case ArcExpr::Op::Identity:
        return std::pair{Mat::Identity(rows, cols), Vec::Zero(rows)};
    case ArcExpr::Op::Base: {
        const auto& f = e.fn();
        if (f.is<fn::Identity>() || f.is<fn::RestrictedIdentity>() || f.is<fn::Zero>()) {
            Mat w(rows, cols);
            for (Eigen::Index c = 0; c < cols; ++c) {
                Vec unit = Vec::Zero(cols);
                unit[c] = 1.0;
                w.col(c) = f.apply(unit);
            }
            return std::pair{w, Vec::Zero(rows)};
        }
        if (f.is<fn::Linear>())
            return std::pair{f.as<fn::Linear>().weight, Vec::Zero(rows)};
        if (f.is<fn::Affine>())
            return std::pair{f.as<fn::Affine>().weight, f.as<fn::Affine>().bias};
        return std::nullopt;
    }
    case ArcExpr::Op::Compose: {
        auto o = as_affine(e.outer());
        auto i = as_affine(e.inner());
        if (!o || !i)
            return std::nullopt;
        return std::pair{Mat(o->first * i->first), Vec(o->first * i->second + o->second)};
    }
    case ArcExpr::Op::Sum: {
        Mat w = Mat::Zero(rows, cols);
        Vec b = Vec::Zero(rows);
        for (const auto& t : e.terms()) {
            auto p = as_affine(t);
            if (!p)
                return std::nullopt;
            w += p->first;
            b += p->second;
        }
        return std::pair{w, b};
    }
    }
    return std::nullopt;
}

} // namespace detail

/// Optional fold: every maximal affine subtree collapses to one Affine base
/// function. Not applied by any other operation.
inline ArcExpr fold_affine(const ArcExpr& e)
{
    if (e.op() != ArcExpr::Op::Base || !e.fn().is<fn::Affine>())
        if (auto aff = detail::as_affine(e))
            return ArcExpr::base(ArcFunction::affine(aff->first, aff->second));
    switch (e.op()) {
    case ArcExpr::Op::Compose:
        return ArcExpr::compose(fold_affine(e.outer()), fold_affine(e.inner()));
    case ArcExpr::Op::Sum: {
        std::vector<ArcExpr> terms;
        for (const auto& t : e.terms())
            terms.push_back(fold_affine(t));
        return ArcExpr::sum(std::move(terms));
    }
    default:
        return e;
    }
}

/// Human-readable rendering, e.g. "(affine(3->2) o relu...)".
inline std::string render(const ArcExpr& e)
{
    switch (e.op()) {
    case ArcExpr::Op::Zero:
        return "0";
    case ArcExpr::Op::Identity:
        return "I";
    case ArcExpr::Op::Base:
        return e.fn().describe();
    case ArcExpr::Op::Compose:
        return render(e.outer()) + " o " + render(e.inner());
    case ArcExpr::Op::Sum: {
        std::string s = "(";
        for (std::size_t i = 0; i < e.terms().size(); ++i)
            s += (i ? " + " : "") + render(e.terms()[i]);
        return s + ")";
    }
    }
    return "?";
}

} // namespace dagdnn
