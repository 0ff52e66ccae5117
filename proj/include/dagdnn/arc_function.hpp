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

#include "dagdnn/cpwl.hpp"
#include "dagdnn/error.hpp"
#include "dagdnn/linalg.hpp"
#include "dagdnn/sigma.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace dagdnn {

namespace fn {

struct Identity {
    std::size_t dim = 0;
};

/// Bounded linear map x -> W x.
struct Linear {
    Mat weight;
};

/// x -> W x + b.
struct Affine {
    Mat weight;
    Vec bias;
};

/// Pointwise CPWL activation.
struct Activation {
    CpwlSpec cpwl;
    std::size_t dim = 0;
};

/// x -> rho(W x + b).
struct ActAffine {
    CpwlSpec cpwl;
    Mat weight;
    Vec bias;
};

/// x -> sigma(x) or sigma(W x + b) for a registered transformation.
struct Sigma {
    std::string kind;
    std::size_t dim = 0;
    std::optional<Affine> pre;
};

/// Contiguous block of an identity matrix.
///
/// With out_dim > in_dim the input is embedded at rows [offset, offset+in_dim)
/// of a zero vector; with out_dim < in_dim rows [offset, offset+out_dim) of the
/// input are selected.
struct RestrictedIdentity {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t offset = 0;
};

/// Non-overlapping max over consecutive windows.
struct MaxPool {
    std::size_t in_dim = 0;
    std::size_t window = 1;
};

struct Zero {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
};

} // namespace fn

struct ArcGradient {
    Vec input;
    std::vector<double> params;
};

/// A member of the base function set attached to an arc.
class ArcFunction {
public:
    using Variant = std::variant<fn::Identity, fn::Linear, fn::Affine, fn::Activation, fn::ActAffine,
                                 fn::Sigma, fn::RestrictedIdentity, fn::MaxPool, fn::Zero>;

    ArcFunction() : value_(fn::Identity{0}) {}
    ArcFunction(Variant v) : value_(std::move(v)) { check(); }

    template <class T>
        requires std::is_constructible_v<Variant, T> && (!std::is_same_v<std::decay_t<T>, Variant>) &&
                 (!std::is_same_v<std::decay_t<T>, ArcFunction>)
    ArcFunction(T f) : ArcFunction(Variant(std::move(f)))
    {
    }

    static ArcFunction identity(std::size_t dim) { return fn::Identity{dim}; }
    static ArcFunction linear(Mat w) { return fn::Linear{std::move(w)}; }
    static ArcFunction scale(std::size_t dim, double c) { return fn::Linear{Mat::Identity(dim, dim) * c}; }
    static ArcFunction affine(Mat w, Vec b) { return fn::Affine{std::move(w), std::move(b)}; }
    static ArcFunction activation(CpwlSpec rho, std::size_t dim) { return fn::Activation{std::move(rho), dim}; }
    static ArcFunction act_affine(CpwlSpec rho, Mat w, Vec b)
    {
        return fn::ActAffine{std::move(rho), std::move(w), std::move(b)};
    }
    static ArcFunction sigma(std::string kind, std::size_t dim) { return fn::Sigma{std::move(kind), dim, {}}; }
    static ArcFunction sigma_affine(std::string kind, Mat w, Vec b)
    {
        const auto dim = static_cast<std::size_t>(w.rows());
        return fn::Sigma{std::move(kind), dim, fn::Affine{std::move(w), std::move(b)}};
    }
    static ArcFunction embed(std::size_t width, std::size_t total, std::size_t offset)
    {
        return fn::RestrictedIdentity{width, total, offset};
    }
    static ArcFunction select(std::size_t total, std::size_t width, std::size_t offset)
    {
        return fn::RestrictedIdentity{total, width, offset};
    }
    static ArcFunction max_pool(std::size_t in_dim, std::size_t window) { return fn::MaxPool{in_dim, window}; }
    static ArcFunction zero(std::size_t in_dim, std::size_t out_dim) { return fn::Zero{in_dim, out_dim}; }

    const Variant& variant() const { return value_; }

    template <class T>
    bool is() const
    {
        return std::holds_alternative<T>(value_);
    }

    template <class T>
    const T& as() const
    {
        return std::get<T>(value_);
    }

    std::size_t in_dim() const
    {
        return std::visit(
            [](const auto& f) -> std::size_t {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, fn::Identity> || std::is_same_v<T, fn::Activation>)
                    return f.dim;
                else if constexpr (std::is_same_v<T, fn::Linear> || std::is_same_v<T, fn::Affine> ||
                                   std::is_same_v<T, fn::ActAffine>)
                    return static_cast<std::size_t>(f.weight.cols());
                else if constexpr (std::is_same_v<T, fn::Sigma>)
                    return f.pre ? static_cast<std::size_t>(f.pre->weight.cols()) : f.dim;
                else
                    return f.in_dim;
            },
            value_);
    }

    std::size_t out_dim() const
    {
        return std::visit(
            [](const auto& f) -> std::size_t {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, fn::Identity> || std::is_same_v<T, fn::Activation>)
                    return f.dim;
                else if constexpr (std::is_same_v<T, fn::Linear> || std::is_same_v<T, fn::Affine> ||
                                   std::is_same_v<T, fn::ActAffine>)
                    return static_cast<std::size_t>(f.weight.rows());
                else if constexpr (std::is_same_v<T, fn::Sigma>)
                    return f.pre ? static_cast<std::size_t>(f.pre->weight.rows()) : f.dim;
                else if constexpr (std::is_same_v<T, fn::MaxPool>)
                    return f.in_dim / f.window;
                else
                    return f.out_dim;
            },
            value_);
    }

    std::string type_name() const
    {
        static constexpr const char* names[] = {"identity", "linear",  "affine",  "activation", "act_affine",
                                                "sigma",    "restricted_identity", "maxpool", "zero"};
        return names[value_.index()];
    }

    Vec apply(const Vec& x) const
    {
        if (static_cast<std::size_t>(x.size()) != in_dim())
            fail(ErrorCode::DimensionMismatch, type_name() + " expects input of dim " + std::to_string(in_dim()) +
                                                   ", got " + std::to_string(x.size()));
        return std::visit([&](const auto& f) -> Vec { return apply_impl(f, x); }, value_);
    }

    /// Vector-Jacobian product at x. CPWL kinks use the right derivative.
    ArcGradient vjp(const Vec& x, const Vec& upstream) const
    {
        return std::visit([&](const auto& f) -> ArcGradient { return vjp_impl(f, x, upstream); }, value_);
    }

    /// Only Linear, Affine and ActAffine arcs carry trainable parameters.
    bool trainable() const { return is<fn::Linear>() || is<fn::Affine>() || is<fn::ActAffine>(); }

    std::size_t param_count() const
    {
        if (is<fn::Linear>())
            return static_cast<std::size_t>(as<fn::Linear>().weight.size());
        if (is<fn::Affine>()) {
            const auto& f = as<fn::Affine>();
            return static_cast<std::size_t>(f.weight.size() + f.bias.size());
        }
        if (is<fn::ActAffine>()) {
            const auto& f = as<fn::ActAffine>();
            return static_cast<std::size_t>(f.weight.size() + f.bias.size());
        }
        return 0;
    }

    /// Weight entries in row-major order followed by the bias.
    std::vector<double> params() const
    {
        std::vector<double> out;
        out.reserve(param_count());
        auto push = [&](const Mat& w, const Vec* b) {
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c)
                    out.push_back(w(r, c));
            if (b)
                for (Eigen::Index i = 0; i < b->size(); ++i)
                    out.push_back((*b)[i]);
        };
        if (is<fn::Linear>())
            push(as<fn::Linear>().weight, nullptr);
        else if (is<fn::Affine>())
            push(as<fn::Affine>().weight, &as<fn::Affine>().bias);
        else if (is<fn::ActAffine>())
            push(as<fn::ActAffine>().weight, &as<fn::ActAffine>().bias);
        return out;
    }

    ArcFunction with_params(std::span<const double> p) const
    {
        if (p.size() != param_count())
            fail(ErrorCode::ShapeMismatch, "parameter count mismatch for " + type_name());
        std::size_t k = 0;
        auto fill = [&](Mat& w, Vec* b) {
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c)
                    w(r, c) = p[k++];
            if (b)
                for (Eigen::Index i = 0; i < b->size(); ++i)
                    (*b)[i] = p[k++];
        };
        Variant v = value_;
        if (auto* f = std::get_if<fn::Linear>(&v))
            fill(f->weight, nullptr);
        else if (auto* g = std::get_if<fn::Affine>(&v))
            fill(g->weight, &g->bias);
        else if (auto* h = std::get_if<fn::ActAffine>(&v))
            fill(h->weight, &h->bias);
        return ArcFunction(std::move(v));
    }

    /// True when f(0) = 0 is guaranteed by the function's form.
    bool maps_zero_to_zero() const
    {
        return std::visit(
            [](const auto& f) -> bool {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, fn::Affine>)
                    return f.bias.isZero(0.0);
                else if constexpr (std::is_same_v<T, fn::Activation>)
                    return eval_cpwl(f.cpwl, 0.0) == 0.0;
                else if constexpr (std::is_same_v<T, fn::ActAffine>)
                    return f.bias.isZero(0.0) && eval_cpwl(f.cpwl, 0.0) == 0.0;
                else if constexpr (std::is_same_v<T, fn::Sigma>)
                    return false;
                else
                    return true;
            },
            value_);
    }

    std::string describe() const
    {
        std::ostringstream os;
        os << type_name();
        if (is<fn::Sigma>())
            os << ":" << as<fn::Sigma>().kind;
        os << "(" << in_dim() << "->" << out_dim() << ")";
        return os.str();
    }

    friend bool operator==(const ArcFunction& a, const ArcFunction& b) { return equal(a.value_, b.value_); }

private:
    static bool same(const Mat& a, const Mat& b)
    {
        return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
    }
    static bool same(const Vec& a, const Vec& b) { return a.size() == b.size() && (a.size() == 0 || a == b); }

    static bool equal(const Variant& a, const Variant& b)
    {
        if (a.index() != b.index())
            return false;
        return std::visit(
            [&](const auto& fa) -> bool {
                using T = std::decay_t<decltype(fa)>;
                const auto& fb = std::get<T>(b);
                if constexpr (std::is_same_v<T, fn::Identity>)
                    return fa.dim == fb.dim;
                else if constexpr (std::is_same_v<T, fn::Linear>)
                    return same(fa.weight, fb.weight);
                else if constexpr (std::is_same_v<T, fn::Affine>)
                    return same(fa.weight, fb.weight) && same(fa.bias, fb.bias);
                else if constexpr (std::is_same_v<T, fn::Activation>)
                    return fa.cpwl == fb.cpwl && fa.dim == fb.dim;
                else if constexpr (std::is_same_v<T, fn::ActAffine>)
                    return fa.cpwl == fb.cpwl && same(fa.weight, fb.weight) && same(fa.bias, fb.bias);
                else if constexpr (std::is_same_v<T, fn::Sigma>)
                    return fa.kind == fb.kind && fa.dim == fb.dim && fa.pre.has_value() == fb.pre.has_value() &&
                           (!fa.pre || (same(fa.pre->weight, fb.pre->weight) && same(fa.pre->bias, fb.pre->bias)));
                else if constexpr (std::is_same_v<T, fn::RestrictedIdentity>)
                    return fa.in_dim == fb.in_dim && fa.out_dim == fb.out_dim && fa.offset == fb.offset;
                else if constexpr (std::is_same_v<T, fn::MaxPool>)
                    return fa.in_dim == fb.in_dim && fa.window == fb.window;
                else
                    return fa.in_dim == fb.in_dim && fa.out_dim == fb.out_dim;
            },
            a);
    }

    void check() const
    {
        std::visit(
            [](const auto& f) {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, fn::Linear>) {
                    if (!all_finite(f.weight))
                        fail(ErrorCode::InvalidGraph, "linear map has non-finite entries");
                } else if constexpr (std::is_same_v<T, fn::Affine> || std::is_same_v<T, fn::ActAffine>) {
                    if (f.bias.size() != f.weight.rows())
                        fail(ErrorCode::DimensionMismatch, "bias length differs from weight rows");
                    if (!all_finite(f.weight) || !f.bias.allFinite())
                        fail(ErrorCode::InvalidGraph, "affine map has non-finite entries");
                    if constexpr (std::is_same_v<T, fn::ActAffine>)
                        validate(f.cpwl);
                } else if constexpr (std::is_same_v<T, fn::Activation>) {
                    validate(f.cpwl);
                } else if constexpr (std::is_same_v<T, fn::Sigma>) {
                    if (!SigmaRegistry::instance().contains(f.kind))
                        fail(ErrorCode::UnknownSigma, "no transformation registered as '" + f.kind + "'");
                    if (f.pre && f.pre->bias.size() != f.pre->weight.rows())
                        fail(ErrorCode::DimensionMismatch, "bias length differs from weight rows");
                } else if constexpr (std::is_same_v<T, fn::RestrictedIdentity>) {
                    const std::size_t width = std::min(f.in_dim, f.out_dim);
                    const std::size_t total = std::max(f.in_dim, f.out_dim);
                    if (f.offset + width > total)
                        fail(ErrorCode::DimensionMismatch, "restricted identity block exceeds its range");
                } else if constexpr (std::is_same_v<T, fn::MaxPool>) {
                    if (f.window == 0 || f.in_dim % f.window != 0)
                        fail(ErrorCode::DimensionMismatch, "max-pool window must divide the input dim");
                }
            },
            value_);
    }

    static Vec apply_rho(const CpwlSpec& rho, const Vec& z)
    {
        return z.unaryExpr([&](double v) { return eval_cpwl(rho, v); });
    }

    static Vec apply_impl(const fn::Identity&, const Vec& x) { return x; }
    static Vec apply_impl(const fn::Linear& f, const Vec& x) { return f.weight * x; }
    static Vec apply_impl(const fn::Affine& f, const Vec& x) { return f.weight * x + f.bias; }
    static Vec apply_impl(const fn::Activation& f, const Vec& x) { return apply_rho(f.cpwl, x); }
    static Vec apply_impl(const fn::ActAffine& f, const Vec& x)
    {
        return apply_rho(f.cpwl, f.weight * x + f.bias);
    }
    static Vec apply_impl(const fn::Sigma& f, const Vec& x)
    {
        const auto kind = SigmaRegistry::instance().get(f.kind);
        return f.pre ? kind.eval(f.pre->weight * x + f.pre->bias) : kind.eval(x);
    }
    static Vec apply_impl(const fn::RestrictedIdentity& f, const Vec& x)
    {
        if (f.out_dim >= f.in_dim) {
            Vec y = Vec::Zero(static_cast<Eigen::Index>(f.out_dim));
            y.segment(static_cast<Eigen::Index>(f.offset), x.size()) = x;
            return y;
        }
        return x.segment(static_cast<Eigen::Index>(f.offset), static_cast<Eigen::Index>(f.out_dim));
    }
    static Vec apply_impl(const fn::MaxPool& f, const Vec& x)
    {
        const auto w = static_cast<Eigen::Index>(f.window);
        Vec y(x.size() / w);
        for (Eigen::Index i = 0; i < y.size(); ++i)
            y[i] = x.segment(i * w, w).maxCoeff();
        return y;
    }
    static Vec apply_impl(const fn::Zero& f, const Vec&) { return Vec::Zero(static_cast<Eigen::Index>(f.out_dim)); }

    static void push_outer(std::vector<double>& out, const Vec& g, const Vec& x)
    {
        for (Eigen::Index r = 0; r < g.size(); ++r)
            for (Eigen::Index c = 0; c < x.size(); ++c)
                out.push_back(g[r] * x[c]);
    }

    static Vec rho_slopes(const CpwlSpec& rho, const Vec& z)
    {
        return z.unaryExpr([&](double v) { return derivative_cpwl(rho, v); });
    }

    static ArcGradient vjp_impl(const fn::Identity&, const Vec&, const Vec& g) { return {g, {}}; }
    static ArcGradient vjp_impl(const fn::Linear& f, const Vec& x, const Vec& g)
    {
        ArcGradient out{f.weight.transpose() * g, {}};
        push_outer(out.params, g, x);
        return out;
    }
    static ArcGradient vjp_impl(const fn::Affine& f, const Vec& x, const Vec& g)
    {
        ArcGradient out{f.weight.transpose() * g, {}};
        push_outer(out.params, g, x);
        out.params.insert(out.params.end(), g.data(), g.data() + g.size());
        return out;
    }
    static ArcGradient vjp_impl(const fn::Activation& f, const Vec& x, const Vec& g)
    {
        return {(rho_slopes(f.cpwl, x).array() * g.array()).matrix(), {}};
    }
    static ArcGradient vjp_impl(const fn::ActAffine& f, const Vec& x, const Vec& g)
    {
        const Vec z = f.weight * x + f.bias;
        const Vec gz = (rho_slopes(f.cpwl, z).array() * g.array()).matrix();
        ArcGradient out{f.weight.transpose() * gz, {}};
        push_outer(out.params, gz, x);
        out.params.insert(out.params.end(), gz.data(), gz.data() + gz.size());
        return out;
    }
    static ArcGradient vjp_impl(const fn::Sigma& f, const Vec& x, const Vec& g)
    {
        const auto kind = SigmaRegistry::instance().get(f.kind);
        if (!kind.vjp)
            fail(ErrorCode::NonDifferentiableArc, "transformation '" + f.kind + "' has no registered derivative");
        if (!f.pre)
            return {kind.vjp(x, g), {}};
        const Vec gz = kind.vjp(f.pre->weight * x + f.pre->bias, g);
        return {f.pre->weight.transpose() * gz, {}};
    }
    static ArcGradient vjp_impl(const fn::RestrictedIdentity& f, const Vec&, const Vec& g)
    {
        if (f.out_dim >= f.in_dim)
            return {g.segment(static_cast<Eigen::Index>(f.offset), static_cast<Eigen::Index>(f.in_dim)), {}};
        Vec gx = Vec::Zero(static_cast<Eigen::Index>(f.in_dim));
        gx.segment(static_cast<Eigen::Index>(f.offset), g.size()) = g;
        return {gx, {}};
    }
    static ArcGradient vjp_impl(const fn::MaxPool& f, const Vec& x, const Vec& g)
    {
        const auto w = static_cast<Eigen::Index>(f.window);
        Vec gx = Vec::Zero(x.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            Eigen::Index arg = 0;
            x.segment(i * w, w).maxCoeff(&arg);
            gx[i * w + arg] += g[i];
        }
        return {gx, {}};
    }
    static ArcGradient vjp_impl(const fn::Zero& f, const Vec&, const Vec&)
    {
        return {Vec::Zero(static_cast<Eigen::Index>(f.in_dim)), {}};
    }

    Variant value_;
};

} // namespace dagdnn
