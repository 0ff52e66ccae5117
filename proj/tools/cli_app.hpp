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

#include "dagdnn/dagdnn.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dagdnn::cli {

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kVerificationFailure = 2 };

enum class LogLevel { Error, Info, Debug };

inline LogLevel log_level()
{
    const char* env = std::getenv("DAGDNN_LOG");
    if (!env)
        return LogLevel::Error;
    const std::string v(env);
    if (v == "debug")
        return LogLevel::Debug;
    if (v == "info")
        return LogLevel::Info;
    return LogLevel::Error;
}

/// One JSON object per line on stderr.
inline void diag(std::ostream& err, LogLevel level, const std::string& code, const std::string& message)
{
    if (level > log_level())
        return;
    static constexpr const char* names[] = {"error", "info", "debug"};
    err << Json{{"level", names[static_cast<int>(level)]}, {"code", code}, {"message", message}}.dump() << '\n';
}

inline Json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::ParseError, "cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ParseError, path + ": " + e.what());
    }
}

/// Writes through a temporary file renamed into place; "-" or "" is stdout.
inline void write_text(const std::string& path, const std::string& text, std::ostream& out)
{
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            fail(ErrorCode::ParseError, "cannot write " + tmp);
        f << text;
        if (!f.flush())
            fail(ErrorCode::ParseError, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void write_json(const std::string& path, const Json& j, std::ostream& out)
{
    write_text(path, j.dump(2) + "\n", out);
}

/// Graphs from graph documents or from ticket documents.
inline Graph load_graph(const std::string& path, bool allow_multi_io = false)
{
    return graph_from_json(read_json(path), {.allow_multi_io = allow_multi_io});
}

inline Graph ensure_normalized(const Graph& g, std::ostream& err)
{
    if (is_normalized(g))
        return g;
    diag(err, LogLevel::Info, "Normalized", "input graph was normalized before use");
    return normalize(g);
}

inline Vec load_vector(const std::string& path)
{
    const Json j = read_json(path);
    if (j.is_object())
        return vec_from_json(detail::field(j, "input"));
    return vec_from_json(j);
}

struct Options {
    std::string input;
    std::string second;
    std::string output;
    std::string pass = "all";
    std::string vector_path;
    std::string trace_path;
    std::vector<std::size_t> pair;
    std::size_t trials = 100;
    std::size_t steps = 500;
    double lr = 0.1;
    double lambda = 1e-4;
    std::optional<std::uint64_t> seed;
    std::size_t checkpoint_every = 1;
    std::string init = "graph";
    std::size_t at = 0;
    double tol = 0.0;
    bool fold_relays = false;
    bool scan_all_levels = false;
    bool rescan = false;
    bool normalize_first = false;
};

inline int cmd_normalize(const Options& o, std::ostream& out, std::ostream&)
{
    const Graph g = load_graph(o.input, true);
    Graph r;
    if (o.pass == "io")
        r = normalize_io(g);
    else if (o.pass == "concat")
        r = concat_to_addition(g);
    else if (o.pass == "jumps")
        r = eliminate_jumps(g);
    else
        r = normalize(g);
    write_json(o.output, graph_to_json(r), out);
    return kOk;
}

inline int cmd_levelize(const Options& o, std::ostream& out, std::ostream&)
{
    write_json(o.output, levels_to_json(assign_levels(load_graph(o.input))), out);
    return kOk;
}

inline int cmd_factorize(const Options& o, std::ostream& out, std::ostream& err)
{
    Graph g = load_graph(o.input);
    if (o.normalize_first)
        g = ensure_normalized(g, err);
    const auto bs = factorize(g);
    write_json(o.output, lifting_to_json(bs, lift_nodes(g, assign_levels(g))), out);
    return kOk;
}

inline int cmd_verify_inverse(const Options& o, std::ostream& out, std::ostream& err)
{
    const auto doc = lifting_from_json(read_json(o.input));
    if (doc.nodes.empty())
        fail(ErrorCode::MalformedSequence, "lifting document has no nodes");
    std::mt19937_64 rng(o.seed.value_or(0));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    double worst = 0.0;
    for (std::size_t t = 0; t < o.trials; ++t) {
        Vec x(static_cast<Eigen::Index>(doc.nodes.front().dim));
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = unif(rng);
        const StateVec x0 = init_state(doc.nodes, x);
        StateVec s = x0;
        for (const auto& b : doc.matrices)
            s = lift_state(s, b);
        const StateVec back = unlift(s, doc.matrices);
        for (std::size_t k = 0; k < x0.blocks.size(); ++k)
            if (x0.blocks[k].size() > 0)
                worst = std::max(worst, max_abs(back.blocks[k] - x0.blocks[k]));
    }
    const bool passed = worst <= 1e-12;
    write_json(o.output, {{"trials", o.trials}, {"max_abs_error", worst}, {"tolerance", 1e-12}, {"passed", passed}},
               out);
    if (!passed) {
        diag(err, LogLevel::Error, "InverseMismatch", "round trip error " + std::to_string(worst) + " exceeds 1e-12");
        return kVerificationFailure;
    }
    return kOk;
}

inline int cmd_reconstruct(const Options& o, std::ostream& out, std::ostream&)
{
    const auto doc = lifting_from_json(read_json(o.input));
    write_json(o.output, graph_to_json(reconstruct_graph(doc.matrices, o.fold_relays)), out);
    return kOk;
}

inline int cmd_eval(const Options& o, std::ostream& out, std::ostream& err)
{
    const Graph g = load_graph(o.input);
    const Vec x = load_vector(o.vector_path);
    if (o.pair.size() == 2) {
        const auto v = subgraph_eval(g, NodeId{o.pair[0]}, NodeId{o.pair[1]}, x);
        if (const auto* u = std::get_if<Unreachable>(&v)) {
            write_json(o.output, {{"unreachable", true}, {"from", u->from.value}, {"to", u->to.value}}, out);
            return kOk;
        }
        write_json(o.output, {{"y", vec_to_json(std::get<Vec>(v))}, {"pair", o.pair}}, out);
        return kOk;
    }
    const Graph net = ensure_normalized(g, err);
    const auto r = forward(net, x, !o.trace_path.empty());
    write_json(o.output, {{"y", vec_to_json(r.y)}}, out);
    if (!o.trace_path.empty()) {
        Json states = Json::array();
        for (const auto& s : r.trace.states) {
            Json blocks = Json::array();
            for (const auto& b : s.blocks)
                blocks.push_back(vec_to_json(b));
            states.push_back({{"level", s.level}, {"blocks", blocks}});
        }
        write_json(o.trace_path,
                   {{"schema", kSchema},
                    {"graph", graph_to_json(net)},
                    {"states", states},
                    {"seconds", r.trace.seconds},
                    {"expr_applications", r.trace.expr_applications}},
                   out);
    }
    return kOk;
}

inline int cmd_complete(const Options& o, std::ostream& out, std::ostream&)
{
    const Graph g = load_graph(o.input);
    write_json(o.output, {{"schema", kSchema}, {"complete", bits_to_json(completeness_matrix(g))}}, out);
    return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err)
{
    if (!o.seed)
        fail(ErrorCode::InvalidGraph, "train needs --seed");
    const Json doc = read_json(o.input);
    const Graph g = ensure_normalized(graph_from_json(doc), err);
    const Dataset data = data_from_json(read_json(o.second));
    TrainOptions opts;
    opts.steps = o.steps;
    opts.step_size = o.lr;
    opts.lambda = o.lambda;
    opts.seed = *o.seed;
    opts.checkpoint_every = o.checkpoint_every;
    const ParamSet init = o.init == "random" ? random_params(g, *o.seed) : get_params(g);
    TrainRun run = train(g, init, data, opts);
    if (doc.value("kind", "") == "ticket") {
        run.pruned_at = doc.at("ticket").at("step").get<std::size_t>();
        run.pruned_at_final = doc.at("ticket").value("step_is_final", false);
    }
    diag(err, LogLevel::Info, "Trained",
         std::to_string(run.iterations) + " steps, final loss " + std::to_string(run.loss_trace.back()));
    write_json(o.output, run_to_json(run), out);
    return kOk;
}

inline int cmd_prune(const Options& o, std::ostream& out, std::ostream& err)
{
    const TrainRun run = run_from_json(read_json(o.input));
    const Ticket ticket = rewind_prune(run, o.at, {o.tol, o.scan_all_levels, o.rescan});
    if (o.tol > 0.0)
        diag(err, LogLevel::Info, "ApproximatePrune", "nonzero tolerance: removal preserves the loss only approximately");
    write_json(o.output, ticket_to_json(ticket), out);
    return kOk;
}

inline int cmd_verify_ticket(const Options& o, std::ostream& out, std::ostream& err)
{
    const TrainRun run0 = run_from_json(read_json(o.input));
    const TrainRun run1 = run_from_json(read_json(o.second));
    const TicketReport r = verify_ticket(run0, run1);
    write_json(o.output, ticket_report_to_json(r), out);
    if (!r.passed()) {
        diag(err, LogLevel::Error, "TicketConditionsFailed", "at least one ticket condition does not hold");
        return kVerificationFailure;
    }
    return kOk;
}

inline int cmd_export_dot(const Options& o, std::ostream& out, std::ostream&)
{
    write_text(o.output, to_dot(load_graph(o.input, true)), out);
    return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"DAG-DNN normalization, lifting factorization, evaluation and structural pruning"};
    app.require_subcommand(1);
    Options o;
    auto with_io = [&](CLI::App* sub) {
        sub->add_option("document", o.input, "input JSON document")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", o.output, "output path (default: stdout)");
    };

    auto* normalize_cmd = app.add_subcommand("normalize", "rewrite into addition-node level form");
    with_io(normalize_cmd);
    normalize_cmd->add_option("--pass", o.pass, "io, concat, jumps or all")
        ->check(CLI::IsMember({"io", "concat", "jumps", "all"}));

    auto* levelize_cmd = app.add_subcommand("levelize", "print node levels");
    with_io(levelize_cmd);

    auto* factorize_cmd = app.add_subcommand("factorize", "lifting matrices of a normalized graph");
    with_io(factorize_cmd);
    factorize_cmd->add_flag("--normalize", o.normalize_first, "normalize the graph first");

    auto* inverse_cmd = app.add_subcommand("verify-inverse", "check inverse lifting round trips");
    with_io(inverse_cmd);
    inverse_cmd->add_option("--trials", o.trials, "random states to try");
    inverse_cmd->add_option("--seed", o.seed, "random seed");

    auto* reconstruct_cmd = app.add_subcommand("reconstruct", "graph from lifting matrices");
    with_io(reconstruct_cmd);
    reconstruct_cmd->add_flag("--fold-relays", o.fold_relays, "merge identity relay chains");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a network or one of its sub-graphs");
    with_io(eval_cmd);
    eval_cmd->add_option("--input", o.vector_path, "input vector JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--trace", o.trace_path, "write the lifted states here");
    eval_cmd->add_option("--pair", o.pair, "end and start node ids i j")->expected(2);

    auto* complete_cmd = app.add_subcommand("complete-subgraphs", "completeness matrix by node id");
    with_io(complete_cmd);

    auto* train_cmd = app.add_subcommand("train", "gradient descent with backtracking");
    with_io(train_cmd);
    train_cmd->add_option("data", o.second, "dataset JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--steps", o.steps, "maximum steps");
    train_cmd->add_option("--lr", o.lr, "initial step size");
    train_cmd->add_option("--lambda", o.lambda, "size penalty per parameter");
    train_cmd->add_option("--seed", o.seed, "random seed")->required();
    train_cmd->add_option("--checkpoint-every", o.checkpoint_every, "checkpoint period in steps");
    train_cmd->add_option("--init", o.init, "graph or random")->check(CLI::IsMember({"graph", "random"}));

    auto* prune_cmd = app.add_subcommand("prune", "rewind to a checkpoint and prune vanishing nodes");
    with_io(prune_cmd);
    prune_cmd->add_option("--at", o.at, "checkpoint step")->required();
    prune_cmd->add_option("--tol", o.tol, "zero tolerance");
    prune_cmd->add_flag("--scan-all-levels", o.scan_all_levels, "prune every level in one pass");
    prune_cmd->add_flag("--rescan", o.rescan, "detect again after pruning");

    auto* ticket_cmd = app.add_subcommand("verify-ticket", "check the winning-ticket conditions");
    with_io(ticket_cmd);
    ticket_cmd->add_option("run1", o.second, "run trained from the ticket")->required()->check(CLI::ExistingFile);

    auto* dot_cmd = app.add_subcommand("export-dot", "Graphviz rendering");
    with_io(dot_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        diag(err, LogLevel::Error, "UsageError", e.what());
        return kValidationFailure;
    }

    try {
        if (normalize_cmd->parsed())
            return cmd_normalize(o, out, err);
        if (levelize_cmd->parsed())
            return cmd_levelize(o, out, err);
        if (factorize_cmd->parsed())
            return cmd_factorize(o, out, err);
        if (inverse_cmd->parsed())
            return cmd_verify_inverse(o, out, err);
        if (reconstruct_cmd->parsed())
            return cmd_reconstruct(o, out, err);
        if (eval_cmd->parsed())
            return cmd_eval(o, out, err);
        if (complete_cmd->parsed())
            return cmd_complete(o, out, err);
        if (train_cmd->parsed())
            return cmd_train(o, out, err);
        if (prune_cmd->parsed())
            return cmd_prune(o, out, err);
        if (ticket_cmd->parsed())
            return cmd_verify_ticket(o, out, err);
        if (dot_cmd->parsed())
            return cmd_export_dot(o, out, err);
    } catch (const Error& e) {
        diag(err, LogLevel::Error, std::string(to_string(e.code())), e.detail());
        return kValidationFailure;
    } catch (const std::exception& e) {
        diag(err, LogLevel::Error, "InternalError", e.what());
        return kValidationFailure;
    }
    return kValidationFailure;
}

} // namespace dagdnn::cli
