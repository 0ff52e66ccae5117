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
#include "dagdnn/error.hpp"
#include "dagdnn/evaluation.hpp"
#include "dagdnn/expr.hpp"
#include "dagdnn/func_matrix.hpp"
#include "dagdnn/graph.hpp"
#include "dagdnn/levels.hpp"
#include "dagdnn/lifting.hpp"
#include "dagdnn/pruning.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace dagdnn {

using Json = nlohmann::json;

inline constexpr const char* kSchema = "dagdnn/1";

namespace detail {

inline const Json& field(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        fail(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* key)
{
    try {
        return field(j, key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
    }
}

inline void check_schema(const Json& j)
{
    if (j.is_object() && j.contains("schema") && j.at("schema") != kSchema)
        fail(ErrorCode::ParseError, "unsupported schema " + j.at("schema").dump());
}

} // namespace detail

inline Json vec_to_json(const Vec& v)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(v[i]);
    return out;
}

inline Vec vec_from_json(const Json& j)
{
    if (!j.is_array())
        fail(ErrorCode::ParseError, "expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            fail(ErrorCode::ParseError, "expected a number, got " + j[i].dump());
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

/// Row-major nested arrays.
inline Json mat_to_json(const Mat& m)
{
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

/// Nested row arrays; an empty array needs the column count from `cols`.
inline Mat mat_from_json(const Json& j, std::size_t cols_if_empty = 0)
{
    if (!j.is_array())
        fail(ErrorCode::ParseError, "expected a matrix as nested row arrays");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? static_cast<Eigen::Index>(cols_if_empty) : static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vec row = vec_from_json(j[static_cast<std::size_t>(r)]);
        if (row.size() != cols)
            fail(ErrorCode::ParseError, "matrix rows have different lengths");
        m.row(r) = row.transpose();
    }
    return m;
}

inline Json cpwl_to_json(const CpwlSpec& s)
{
    Json b = Json::array();
    for (double v : s.breakpoints)
        b.push_back(v);
    Json sl = Json::array();
    for (double v : s.slopes)
        sl.push_back(v);
    return {{"breakpoints", b}, {"slopes", sl}, {"anchor", {s.anchor_x, s.anchor_value}}};
}

/// {breakpoints, slopes, anchor: [x0, f(x0)]} or a preset name.
inline CpwlSpec cpwl_from_json(const Json& j)
{
    if (j.is_string())
        return cpwl_preset(j.get<std::string>());
    CpwlSpec s;
    s.breakpoints = detail::get_as<std::vector<double>>(j, "breakpoints");
    s.slopes = detail::get_as<std::vector<double>>(j, "slopes");
    if (j.contains("anchor")) {
        const auto a = detail::get_as<std::vector<double>>(j, "anchor");
        if (a.size() != 2)
            fail(ErrorCode::ParseError, "anchor must be [x0, f(x0)]");
        s.anchor_x = a[0];
        s.anchor_value = a[1];
    }
    validate(s);
    return s;
}

inline Json fn_to_json(const ArcFunction& f)
{
    Json j{{"type", f.type_name()}};
    if (f.is<fn::Identity>()) {
        j["dim"] = f.in_dim();
    } else if (f.is<fn::Linear>()) {
        j["weight"] = mat_to_json(f.as<fn::Linear>().weight);
        j["in_dim"] = f.in_dim();
    } else if (f.is<fn::Affine>()) {
        j["weight"] = mat_to_json(f.as<fn::Affine>().weight);
        j["bias"] = vec_to_json(f.as<fn::Affine>().bias);
        j["in_dim"] = f.in_dim();
    } else if (f.is<fn::Activation>()) {
        j["cpwl"] = cpwl_to_json(f.as<fn::Activation>().cpwl);
        j["dim"] = f.in_dim();
    } else if (f.is<fn::ActAffine>()) {
        const auto& a = f.as<fn::ActAffine>();
        j["cpwl"] = cpwl_to_json(a.cpwl);
        j["weight"] = mat_to_json(a.weight);
        j["bias"] = vec_to_json(a.bias);
        j["in_dim"] = f.in_dim();
    } else if (f.is<fn::Sigma>()) {
        const auto& s = f.as<fn::Sigma>();
        j["kind"] = s.kind;
        j["dim"] = s.dim;
        if (s.pre) {
            j["weight"] = mat_to_json(s.pre->weight);
            j["bias"] = vec_to_json(s.pre->bias);
            j["in_dim"] = f.in_dim();
        }
    } else if (f.is<fn::RestrictedIdentity>()) {
        const auto& r = f.as<fn::RestrictedIdentity>();
        j["in_dim"] = r.in_dim;
        j["out_dim"] = r.out_dim;
        j["offset"] = r.offset;
    } else if (f.is<fn::MaxPool>()) {
        j["in_dim"] = f.as<fn::MaxPool>().in_dim;
        j["window"] = f.as<fn::MaxPool>().window;
    } else if (f.is<fn::Zero>()) {
        j["in_dim"] = f.in_dim();
        j["out_dim"] = f.out_dim();
    }
    return j;
}

inline ArcFunction fn_from_json(const Json& j)
{
    const auto type = detail::get_as<std::string>(j, "type");
    auto size = [&](const char* key) { return detail::get_as<std::size_t>(j, key); };
    auto in_dim = [&]() { return j.contains("in_dim") ? size("in_dim") : 0; };
    if (type == "identity")
        return ArcFunction::identity(size("dim"));
    if (type == "linear")
        return ArcFunction::linear(mat_from_json(detail::field(j, "weight"), in_dim()));
    if (type == "affine")
        return ArcFunction::affine(mat_from_json(detail::field(j, "weight"), in_dim()),
                                   vec_from_json(detail::field(j, "bias")));
    if (type == "activation")
        return ArcFunction::activation(cpwl_from_json(detail::field(j, "cpwl")), size("dim"));
    if (type == "act_affine")
        return ArcFunction::act_affine(cpwl_from_json(detail::field(j, "cpwl")),
                                       mat_from_json(detail::field(j, "weight"), in_dim()),
                                       vec_from_json(detail::field(j, "bias")));
    if (type == "sigma") {
        const auto kind = detail::get_as<std::string>(j, "kind");
        if (j.contains("weight"))
            return ArcFunction::sigma_affine(kind, mat_from_json(detail::field(j, "weight"), in_dim()),
                                             vec_from_json(detail::field(j, "bias")));
        return ArcFunction::sigma(kind, size("dim"));
    }
    if (type == "restricted_identity")
        return ArcFunction(fn::RestrictedIdentity{size("in_dim"), size("out_dim"), size("offset")});
    if (type == "maxpool")
        return ArcFunction::max_pool(size("in_dim"), size("window"));
    if (type == "zero")
        return ArcFunction::zero(size("in_dim"), size("out_dim"));
    fail(ErrorCode::ParseError, "unknown function type '" + type + "'");
}

inline Json graph_to_json(const Graph& g)
{
    Json nodes = Json::array();
    for (const auto& n : g.nodes()) {
        Json node{{"id", n.id.value}, {"kind", to_string(n.kind)}, {"dim", n.dim}};
        if (!n.label.empty())
            node["label"] = n.label;
        nodes.push_back(std::move(node));
    }
    Json arcs = Json::array();
    for (const auto& a : g.arcs())
        arcs.push_back({{"id", a.id.value}, {"src", a.src.value}, {"dst", a.dst.value}, {"fn", fn_to_json(a.fn)}});
    Json outs = Json::array();
    for (auto o : g.outputs())
        outs.push_back(o.value);
    return {{"schema", kSchema}, {"nodes", nodes}, {"arcs", arcs}, {"outputs", outs}};
}

/// Parses a graph document without validating it. Arc ids default to list
/// positions; outputs default to the output-kind nodes, or to the only node.
inline Graph graph_from_json_unchecked(const Json& j)
{
    detail::check_schema(j);
    const auto& nodes = detail::field(j, "nodes");
    const auto& arcs = detail::field(j, "arcs");
    if (!nodes.is_array() || !arcs.is_array())
        fail(ErrorCode::ParseError, "nodes and arcs must be arrays");
    std::vector<const Json*> by_id(nodes.size(), nullptr);
    for (const auto& n : nodes) {
        const auto id = detail::get_as<std::size_t>(n, "id");
        if (id >= nodes.size() || by_id[id])
            fail(ErrorCode::InvalidGraph, "node ids must be dense and unique, got " + std::to_string(id));
        by_id[id] = &n;
    }
    Graph g;
    for (const auto* n : by_id)
        g.add_node(node_kind_from_string(detail::get_as<std::string>(*n, "kind")), detail::get_as<std::size_t>(*n, "dim"),
                   n->contains("label") ? detail::get_as<std::string>(*n, "label") : std::string{});
    std::size_t position = 0;
    for (const auto& a : arcs) {
        const ArcId id{a.contains("id") ? detail::get_as<std::size_t>(a, "id") : position};
        g.add_arc_with_id(id, NodeId{detail::get_as<std::size_t>(a, "src")}, NodeId{detail::get_as<std::size_t>(a, "dst")},
                          fn_from_json(detail::field(a, "fn")));
        ++position;
    }
    std::vector<NodeId> outs;
    if (j.contains("outputs")) {
        for (const auto& o : j.at("outputs"))
            outs.push_back(NodeId{o.get<std::size_t>()});
    } else {
        for (const auto& n : g.nodes())
            if (n.kind == NodeKind::Output)
                outs.push_back(n.id);
        if (outs.empty() && g.node_count() == 1)
            outs.push_back(NodeId{0});
    }
    g.set_outputs(outs);
    return g;
}

/// A validated graph, or the report listing every violation.
using BuildResult = std::variant<Graph, ValidationReport>;

inline BuildResult build_graph(const Json& j, const ValidateOptions& opts = {})
{
    Graph g = graph_from_json_unchecked(j);
    auto report = validate(g, opts);
    if (!report.ok())
        return report;
    return g;
}

/// Throws the first violation.
inline Graph graph_from_json(const Json& j, const ValidateOptions& opts = {})
{
    auto r = build_graph(j, opts);
    if (auto* report = std::get_if<ValidationReport>(&r))
        fail(report->issues.front().code, report->issues.front().message);
    return std::get<Graph>(std::move(r));
}

inline Json report_to_json(const ValidationReport& r)
{
    Json issues = Json::array();
    for (const auto& i : r.issues)
        issues.push_back({{"code", to_string(i.code)}, {"message", i.message}});
    return {{"ok", r.ok()}, {"issues", issues}};
}

inline Json levels_to_json(const LevelMap& lm)
{
    Json levels = Json::array();
    for (std::size_t l = 0; l < lm.level_count(); ++l) {
        Json ids = Json::array();
        for (auto id : lm.at_level(l))
            ids.push_back(id.value);
        levels.push_back(std::move(ids));
    }
    Json per_node = Json::array();
    for (auto l : lm.levels())
        per_node.push_back(l);
    Json order = Json::array();
    for (auto id : lm.order())
        order.push_back(id.value);
    return {{"schema", kSchema}, {"max_level", lm.max_level()}, {"level", per_node}, {"per_level", levels},
            {"order", order}};
}

inline Json expr_to_json(const ArcExpr& e)
{
    switch (e.op()) {
    case ArcExpr::Op::Zero:
        return {{"op", "zero"}, {"in_dim", e.in_dim()}, {"out_dim", e.out_dim()}};
    case ArcExpr::Op::Identity:
        return {{"op", "id"}, {"dim", e.in_dim()}};
    case ArcExpr::Op::Base:
        return {{"op", "base"}, {"fn", fn_to_json(e.fn())}};
    case ArcExpr::Op::Compose:
        return {{"op", "compose"}, {"outer", expr_to_json(e.outer())}, {"inner", expr_to_json(e.inner())}};
    case ArcExpr::Op::Sum: {
        Json terms = Json::array();
        for (const auto& t : e.terms())
            terms.push_back(expr_to_json(t));
        return {{"op", "sum"}, {"terms", terms}};
    }
    }
    return {};
}

inline ArcExpr expr_from_json(const Json& j)
{
    const auto op = detail::get_as<std::string>(j, "op");
    if (op == "zero")
        return ArcExpr::zero(detail::get_as<std::size_t>(j, "in_dim"), detail::get_as<std::size_t>(j, "out_dim"));
    if (op == "id")
        return ArcExpr::identity(detail::get_as<std::size_t>(j, "dim"));
    if (op == "base")
        return ArcExpr::base(fn_from_json(detail::field(j, "fn")));
    if (op == "compose")
        return ArcExpr::compose(expr_from_json(detail::field(j, "outer")), expr_from_json(detail::field(j, "inner")));
    if (op == "sum") {
        std::vector<ArcExpr> terms;
        for (const auto& t : detail::field(j, "terms"))
            terms.push_back(expr_from_json(t));
        return ArcExpr::sum(std::move(terms));
    }
    fail(ErrorCode::ParseError, "unknown expression op '" + op + "'");
}

inline Json func_matrix_to_json(const FuncMatrix& m)
{
    auto labels = [](const std::vector<NodeId>& ids, const std::vector<std::size_t>& dims) {
        Json out = Json::array();
        for (std::size_t k = 0; k < ids.size(); ++k)
            out.push_back({{"node", ids[k].value}, {"dim", dims[k]}});
        return out;
    };
    Json cells = Json::array();
    for (const auto& [cell, e] : m.cells())
        cells.push_back({{"row", cell.first}, {"col", cell.second}, {"expr", expr_to_json(e)}});
    for (const auto& cell : m.masked())
        cells.push_back({{"row", cell.first},
                         {"col", cell.second},
                         {"expr", expr_to_json(m.at(cell.first, cell.second))},
                         {"masked", true}});
    return {{"shape", {m.row_count(), m.col_count()}},
            {"rows", labels(m.rows(), m.row_dims())},
            {"cols", labels(m.cols(), m.col_dims())},
            {"cells", cells}};
}

inline FuncMatrix func_matrix_from_json(const Json& j)
{
    auto labels = [](const Json& arr, std::vector<NodeId>& ids, std::vector<std::size_t>& dims) {
        for (const auto& l : arr) {
            ids.push_back(NodeId{detail::get_as<std::size_t>(l, "node")});
            dims.push_back(detail::get_as<std::size_t>(l, "dim"));
        }
    };
    std::vector<NodeId> rows, cols;
    std::vector<std::size_t> row_dims, col_dims;
    labels(detail::field(j, "rows"), rows, row_dims);
    labels(detail::field(j, "cols"), cols, col_dims);
    FuncMatrix m(rows, row_dims, cols, col_dims);
    for (const auto& c : detail::field(j, "cells")) {
        const auto r = detail::get_as<std::size_t>(c, "row");
        const auto k = detail::get_as<std::size_t>(c, "col");
        if (c.value("masked", false))
            m.mask(r, k);
        else
            m.set(r, k, expr_from_json(detail::field(c, "expr")));
    }
    return m;
}

inline Json lifting_to_json(const std::vector<LiftingMatrix>& bs, const std::vector<LiftNode>& nodes)
{
    Json table = Json::array();
    for (const auto& n : nodes)
        table.push_back({{"id", n.id.value}, {"level", n.level}, {"dim", n.dim}, {"kind", to_string(n.kind)}});
    Json mats = Json::array();
    for (const auto& b : bs)
        mats.push_back({{"n", b.n}, {"inverted", b.inverted}, {"E", func_matrix_to_json(b.e)}});
    return {{"schema", kSchema}, {"nodes", table}, {"matrices", mats}};
}

struct LiftingDoc {
    std::vector<LiftNode> nodes;
    std::vector<LiftingMatrix> matrices;
};

inline LiftingDoc lifting_from_json(const Json& j)
{
    detail::check_schema(j);
    LiftingDoc doc;
    for (const auto& n : detail::field(j, "nodes"))
        doc.nodes.push_back({NodeId{detail::get_as<std::size_t>(n, "id")}, detail::get_as<std::size_t>(n, "level"),
                             detail::get_as<std::size_t>(n, "dim"),
                             node_kind_from_string(detail::get_as<std::string>(n, "kind"))});
    for (const auto& m : detail::field(j, "matrices"))
        doc.matrices.push_back({doc.nodes, detail::get_as<std::size_t>(m, "n"),
                                func_matrix_from_json(detail::field(m, "E")), m.value("inverted", false)});
    return doc;
}

inline Json data_to_json(const Dataset& d)
{
    Json in = Json::array();
    Json out = Json::array();
    for (const auto& v : d.inputs)
        in.push_back(vec_to_json(v));
    for (const auto& v : d.targets)
        out.push_back(vec_to_json(v));
    return {{"inputs", in}, {"targets", out}};
}

inline Dataset data_from_json(const Json& j)
{
    Dataset d;
    for (const auto& v : detail::field(j, "inputs"))
        d.inputs.push_back(vec_from_json(v));
    for (const auto& v : detail::field(j, "targets"))
        d.targets.push_back(vec_from_json(v));
    return d;
}

inline Json params_to_json(const ParamSet& theta)
{
    Json out = Json::array();
    for (const auto& [id, p] : theta)
        out.push_back({{"arc", id.value}, {"values", p}});
    return out;
}

inline ParamSet params_from_json(const Json& j)
{
    ParamSet theta;
    for (const auto& e : j)
        theta[ArcId{detail::get_as<std::size_t>(e, "arc")}] = detail::get_as<std::vector<double>>(e, "values");
    return theta;
}

inline Json run_to_json(const TrainRun& run)
{
    Json cps = Json::array();
    for (const auto& c : run.checkpoints)
        cps.push_back({{"step", c.step}, {"theta", params_to_json(c.theta)}});
    Json options{{"steps", run.options.steps},
                 {"lr", run.options.step_size},
                 {"lambda", run.options.lambda},
                 {"seed", run.options.seed},
                 {"checkpoint_every", run.options.checkpoint_every},
                 {"max_halvings", run.options.max_halvings}};
    Json j{{"schema", kSchema},
           {"kind", "run"},
           {"graph", graph_to_json(run.graph)},
           {"data", data_to_json(run.data)},
           {"options", options},
           {"loss", run.loss_trace},
           {"fidelity", run.fidelity_trace},
           {"step_sizes", run.step_trace},
           {"checkpoints", cps},
           {"iterations", run.iterations},
           {"converged", run.converged},
           {"best_step", run.best_step},
           {"best_loss", run.best_loss},
           {"best_fidelity", run.best_fidelity},
           {"final_theta", params_to_json(run.final_theta)}};
    if (run.pruned_at) {
        j["pruned_at"] = *run.pruned_at;
        j["pruned_at_final"] = run.pruned_at_final;
    }
    return j;
}

inline TrainRun run_from_json(const Json& j)
{
    detail::check_schema(j);
    TrainRun run;
    run.graph = graph_from_json(detail::field(j, "graph"));
    run.data = data_from_json(detail::field(j, "data"));
    const auto& o = detail::field(j, "options");
    run.options.steps = detail::get_as<std::size_t>(o, "steps");
    run.options.step_size = detail::get_as<double>(o, "lr");
    run.options.lambda = detail::get_as<double>(o, "lambda");
    run.options.seed = detail::get_as<std::uint64_t>(o, "seed");
    run.options.checkpoint_every = detail::get_as<std::size_t>(o, "checkpoint_every");
    run.options.max_halvings = o.value("max_halvings", std::size_t{40});
    run.loss_trace = detail::get_as<std::vector<double>>(j, "loss");
    run.fidelity_trace = detail::get_as<std::vector<double>>(j, "fidelity");
    run.step_trace = j.value("step_sizes", std::vector<double>{});
    for (const auto& c : detail::field(j, "checkpoints"))
        run.checkpoints.push_back({detail::get_as<std::size_t>(c, "step"), params_from_json(detail::field(c, "theta"))});
    run.iterations = detail::get_as<std::size_t>(j, "iterations");
    run.converged = j.value("converged", false);
    run.best_step = detail::get_as<std::size_t>(j, "best_step");
    run.best_loss = detail::get_as<double>(j, "best_loss");
    run.best_fidelity = detail::get_as<double>(j, "best_fidelity");
    run.final_theta = params_from_json(detail::field(j, "final_theta"));
    if (j.contains("pruned_at")) {
        run.pruned_at = j.at("pruned_at").get<std::size_t>();
        run.pruned_at_final = j.value("pruned_at_final", false);
    }
    if (run.loss_trace.empty() || run.checkpoints.empty())
        fail(ErrorCode::ParseError, "a run needs a loss trace and at least one checkpoint");
    return run;
}

inline Json zreport_to_json(const ZReport& z)
{
    Json nodes = Json::array();
    for (auto id : z.nodes)
        nodes.push_back(id.value);
    Json peaks = Json::array();
    for (const auto& [id, v] : z.peaks)
        peaks.push_back({{"node", id.value}, {"peak", v}});
    Json j{{"level", z.level}, {"nodes", nodes}, {"peaks", peaks}, {"tolerance", z.tolerance},
           {"approximate", z.approximate()}};
    if (z.step)
        j["step"] = *z.step;
    return j;
}

/// The ticket's graph carries theta1(t), so the document is also a graph
/// document for `train`.
inline Json ticket_to_json(const Ticket& t)
{
    Json reports = Json::array();
    for (const auto& z : t.reports)
        reports.push_back(zreport_to_json(z));
    Json j = graph_to_json(set_params(t.graph, t.theta));
    j["kind"] = "ticket";
    j["ticket"] = {{"step", t.step},
                   {"step_is_final", t.step_is_final},
                   {"z", reports},
                   {"exact", t.exact},
                   {"params_before", t.params_before},
                   {"params_after", t.params_after},
                   {"loss_before", t.loss_before},
                   {"loss_after", t.loss_after},
                   {"loss_condition", t.loss_condition()}};
    return j;
}

inline Json ticket_report_to_json(const TicketReport& r)
{
    return {{"schema", kSchema},
            {"applicable", r.applicable},
            {"epsilon0", r.epsilon0},
            {"best_loss0", r.best_loss0},
            {"regularizer0", r.regularizer0},
            {"regularizer1", r.regularizer1},
            {"c", r.c},
            {"start_loss1", r.start_loss1},
            {"reference_loss", r.reference_loss},
            {"reference_is_best", r.reference_is_best},
            {"final_fidelity1", r.final_fidelity1},
            {"bound", r.bound},
            {"iterations0", r.iterations0},
            {"iterations1", r.iterations1},
            {"start_condition", r.start_condition},
            {"fidelity_condition", r.fidelity_condition},
            {"iteration_condition", r.iteration_condition},
            {"passed", r.passed()}};
}

inline Json bits_to_json(const BitMatrix& m)
{
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c) != 0);
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace dagdnn
