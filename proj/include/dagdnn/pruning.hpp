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
#include "dagdnn/evaluation.hpp"
#include "dagdnn/graph.hpp"
#include "dagdnn/graph_ops.hpp"
#include "dagdnn/levels.hpp"
#include "dagdnn/lifting.hpp"
#include "dagdnn/linalg.hpp"
#include "dagdnn/normalize.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace dagdnn {

/// Trainable parameters keyed by arc id: weights row-major, then bias.
using ParamSet = std::map<ArcId, std::vector<double>>;

inline ParamSet get_params(const Graph& g)
{
    ParamSet out;
    for (const auto& a : g.arcs())
        if (a.fn.trainable())
            out[a.id] = a.fn.params();
    return out;
}

/// |theta|: number of scalar parameters.
inline std::size_t param_size(const ParamSet& theta)
{
    std::size_t n = 0;
    for (const auto& [id, p] : theta)
        n += p.size();
    return n;
}

/// Copy of g with theta written into its trainable arcs. Every key of theta
/// must name a trainable arc of g.
inline Graph set_params(const Graph& g, const ParamSet& theta)
{
    Graph r = g;
    std::size_t used = 0;
    for (auto& a : r.mutable_arcs()) {
        auto it = theta.find(a.id);
        if (it == theta.end())
            continue;
        a.fn = a.fn.with_params(std::span<const double>(it->second));
        ++used;
    }
    if (used != theta.size())
        fail(ErrorCode::ShapeMismatch, "parameter set names arcs the graph does not have");
    return r;
}

/// Small random weights, zero biases.
inline ParamSet random_params(const Graph& g, std::uint64_t seed, double scale = 0.5)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamSet out;
    for (const auto& a : g.arcs()) {
        if (!a.fn.trainable())
            continue;
        auto p = a.fn.params();
        const auto fan_in = static_cast<double>(std::max<std::size_t>(1, a.fn.in_dim()));
        const std::size_t weights = a.fn.out_dim() * a.fn.in_dim();
        for (std::size_t k = 0; k < p.size(); ++k)
            p[k] = k < weights ? scale * normal(rng) / std::sqrt(fan_in) : 0.0;
        out[a.id] = std::move(p);
    }
    return out;
}

struct Dataset {
    std::vector<Vec> inputs;
    std::vector<Vec> targets;

    std::size_t size() const { return inputs.size(); }
};

struct LossValue {
    double loss = 0.0;
    /// Mean squared prediction error.
    double fidelity = 0.0;
    double regularizer = 0.0;
};

namespace detail {

inline void check_data(const Dataset& data)
{
    if (data.inputs.empty())
        fail(ErrorCode::EmptyDataset, "the dataset has no samples");
    if (data.inputs.size() != data.targets.size())
        fail(ErrorCode::ShapeMismatch, "the dataset has " + std::to_string(data.inputs.size()) + " inputs and " +
                                           std::to_string(data.targets.size()) + " targets");
}

// Lifted final states for every sample; the state holds every node's value.
inline std::vector<StateVec> lift_all(const std::vector<LiftNode>& nodes, const std::vector<LiftingMatrix>& bs,
                                      const std::vector<Vec>& inputs)
{
    std::vector<StateVec> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) {
        StateVec s = init_state(nodes, x);
        for (const auto& b : bs)
            s = lift_state(s, b);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace detail

/// L = (1/N) sum ||v_i - M(u_i)||^2 + lambda |theta|.
inline LossValue loss(const Graph& g, const ParamSet& theta, const Dataset& data, double lambda)
{
    detail::check_data(data);
    const Graph net = set_params(g, theta);
    const auto nodes = lift_nodes(net, assign_levels(net));
    const auto bs = factorize(net);
    const NodeId out = nodes.back().id;
    double total = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        StateVec s = init_state(nodes, data.inputs[k]);
        for (const auto& b : bs)
            s = lift_state(s, b);
        const Vec& y = s.blocks[out.value];
        if (y.size() != data.targets[k].size())
            fail(ErrorCode::DimensionMismatch, "target " + std::to_string(k) + " has dim " +
                                                   std::to_string(data.targets[k].size()) + ", the output has " +
                                                   std::to_string(y.size()));
        total += (data.targets[k] - y).squaredNorm();
    }
    LossValue v;
    v.fidelity = total / static_cast<double>(data.size());
    v.regularizer = lambda * static_cast<double>(param_size(theta));
    v.loss = v.fidelity + v.regularizer;
    return v;
}

/// Gradient of the fidelity term by reverse sweeps over the lifting
/// matrices. The regularizer counts parameters and has no gradient.
inline ParamSet grad(const Graph& g, const ParamSet& theta, const Dataset& data)
{
    detail::check_data(data);
    const Graph net = set_params(g, theta);
    const auto nodes = lift_nodes(net, assign_levels(net));
    const auto bs = factorize(net);
    const NodeId out = nodes.back().id;

    // E cells hold the arc functions; map each cell back to its arc.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> arc_of;
    for (std::size_t k = 0; k < net.arcs().size(); ++k)
        arc_of[{net.arcs()[k].src.value, net.arcs()[k].dst.value}] = k;

    ParamSet gradient;
    for (const auto& [id, p] : theta)
        gradient[id] = std::vector<double>(p.size(), 0.0);
    const double scale = 2.0 / static_cast<double>(data.size());
    const auto states = detail::lift_all(nodes, bs, data.inputs);
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& x = states[k].blocks;
        std::vector<Vec> adj(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            adj[i] = Vec::Zero(x[i].size());
        adj[out.value] = scale * (x[out.value] - data.targets[k]);
        for (auto b = bs.rbegin(); b != bs.rend(); ++b) {
            for (const auto& [cell, expr] : b->e.cells()) {
                const NodeId dst = b->e.rows()[cell.first];
                const NodeId src = b->e.cols()[cell.second];
                const auto& arc = net.arcs()[arc_of.at({src.value, dst.value})];
                const auto r = arc.fn.vjp(x[src.value], adj[dst.value]);
                adj[src.value] += r.input;
                if (!r.params.empty()) {
                    auto& acc = gradient.at(arc.id);
                    for (std::size_t q = 0; q < acc.size(); ++q)
                        acc[q] += r.params[q];
                }
            }
        }
    }
    return gradient;
}

struct TrainOptions {
    std::size_t steps = 500;
    double step_size = 0.1;
    double lambda = 1e-4;
    std::uint64_t seed = 0;
    /// 0 keeps only the first and last checkpoints.
    std::size_t checkpoint_every = 1;
    std::size_t max_halvings = 40;
};

struct Checkpoint {
    std::size_t step = 0;
    ParamSet theta;
};

/// Descent trajectory. loss_trace[t] and fidelity_trace[t] are taken at
/// theta(t), t = 0..iterations.
struct TrainRun {
    Graph graph;
    Dataset data;
    TrainOptions options;
    std::vector<double> loss_trace;
    std::vector<double> fidelity_trace;
    std::vector<double> step_trace;
    std::vector<Checkpoint> checkpoints;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t best_step = 0;
    double best_loss = 0.0;
    double best_fidelity = 0.0;
    ParamSet final_theta;
    /// Set when this run retrains a ticket pruned at that step of its parent.
    std::optional<std::size_t> pruned_at;
    bool pruned_at_final = false;

    const Checkpoint* checkpoint(std::size_t t) const
    {
        for (const auto& c : checkpoints)
            if (c.step == t)
                return &c;
        return nullptr;
    }
};

/// Gradient descent with backtracking: the step halves until the loss does
/// not increase; a step that cannot be accepted ends the run.
inline TrainRun train(const Graph& g, const ParamSet& theta_init, const Dataset& data, const TrainOptions& opts)
{
    detail::check_data(data);
    require_normalized(g);
    TrainRun run;
    run.graph = g;
    run.data = data;
    run.options = opts;
    ParamSet theta = theta_init.empty() ? get_params(g) : theta_init;
    LossValue current = loss(g, theta, data, opts.lambda);
    if (!std::isfinite(current.loss))
        fail(ErrorCode::DivergedLoss, "initial loss is not finite");
    run.loss_trace.push_back(current.loss);
    run.fidelity_trace.push_back(current.fidelity);
    run.checkpoints.push_back({0, theta});
    std::size_t t = 0;
    while (t < opts.steps) {
        const ParamSet gr = grad(g, theta, data);
        double norm2 = 0.0;
        for (const auto& [id, p] : gr)
            for (double v : p)
                norm2 += v * v;
        if (!std::isfinite(norm2))
            fail(ErrorCode::DivergedLoss, "gradient is not finite at step " + std::to_string(t));
        if (norm2 == 0.0) {
            run.converged = true;
            break;
        }
        double eta = opts.step_size;
        bool accepted = false;
        ParamSet trial;
        LossValue trial_loss;
        for (std::size_t h = 0; h <= opts.max_halvings; ++h, eta *= 0.5) {
            trial = theta;
            for (auto& [id, p] : trial) {
                const auto& d = gr.at(id);
                for (std::size_t q = 0; q < p.size(); ++q)
                    p[q] -= eta * d[q];
            }
            trial_loss = loss(g, trial, data, opts.lambda);
            if (std::isfinite(trial_loss.loss) && trial_loss.loss <= current.loss) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            run.converged = true;
            break;
        }
        theta = std::move(trial);
        current = trial_loss;
        ++t;
        run.loss_trace.push_back(current.loss);
        run.fidelity_trace.push_back(current.fidelity);
        run.step_trace.push_back(eta);
        if (opts.checkpoint_every > 0 && t % opts.checkpoint_every == 0)
            run.checkpoints.push_back({t, theta});
    }
    if (run.checkpoints.back().step != t)
        run.checkpoints.push_back({t, theta});
    run.iterations = t;
    run.final_theta = theta;
    run.best_step = 0;
    for (std::size_t k = 1; k < run.loss_trace.size(); ++k)
        if (run.loss_trace[k] < run.loss_trace[run.best_step])
            run.best_step = k;
    run.best_loss = run.loss_trace[run.best_step];
    run.best_fidelity = run.fidelity_trace[run.best_step];
    return run;
}

/// Level-(n+1) nodes whose value vanishes on every training input.
struct ZReport {
    /// The scan index n; the listed nodes sit one level higher.
    std::size_t level = 0;
    std::vector<NodeId> nodes;
    /// max over inputs of ||x_i||_inf for every level-(n+1) node, in id order.
    std::vector<std::pair<NodeId, double>> peaks;
    double tolerance = 0.0;
    std::optional<std::size_t> step;

    bool empty() const { return nodes.empty(); }
    /// Removal is exact only for exact zeros.
    bool approximate() const { return tolerance > 0.0; }
};

inline ZReport detect_z(const Graph& g, const ParamSet& theta, const Dataset& data, std::size_t n, double tol,
                        std::optional<std::size_t> step = std::nullopt)
{
    detail::check_data(data);
    const Graph net = set_params(g, theta);
    const LevelMap lm = assign_levels(net);
    if (n + 1 > lm.max_level())
        fail(ErrorCode::LevelOutOfRange, "no level above " + std::to_string(n));
    const auto nodes = lift_nodes(net, lm);
    const auto bs = factorize(net);
    std::vector<LiftingMatrix> upto(bs.begin(), bs.begin() + static_cast<std::ptrdiff_t>(n + 1));
    const auto states = detail::lift_all(nodes, upto, data.inputs);
    ZReport report;
    report.level = n;
    report.tolerance = tol;
    report.step = step;
    for (auto id : lm.at_level(n + 1)) {
        double peak = 0.0;
        for (const auto& s : states)
            peak = std::max(peak, max_abs(s.blocks[id.value]));
        report.peaks.emplace_back(id, peak);
        if (peak <= tol)
            report.nodes.push_back(id);
    }
    return report;
}

struct PruneResult {
    Graph graph;
    ParamSet theta;
    /// Removed nodes, as ids of the input graph.
    std::vector<NodeId> removed;
    /// True when every removed node provably carried zero, so the output on
    /// the data is unchanged.
    bool exact = true;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
};

/// Removes the given nodes with their arcs, then every node left without
/// inputs or without a path to the output, and re-inserts relays for jumps
/// the removal created. Arc ids, and thus parameter keys, are preserved.
inline PruneResult prune(const Graph& g, const ParamSet& theta, const std::vector<NodeId>& z, double tol = 0.0)
{
    if (z.empty())
        fail(ErrorCode::ConditionsUnsatisfied, "nothing to prune");
    const Graph net = set_params(g, theta);
    const NodeId in = net.input();
    const NodeId out = net.output();
    std::vector<bool> gone(net.node_count(), false);
    for (auto id : z) {
        if (id == in || id == out)
            fail(ErrorCode::WouldDisconnectOutput, "cannot prune the " + std::string(id == in ? "input" : "output") +
                                                       " node " + std::to_string(id.value));
        gone[id.value] = true;
    }
    // Nodes carrying an exact zero; a removed node outside this set drops a
    // nonzero contribution.
    std::vector<bool> zero(net.node_count(), false);
    for (auto id : z)
        zero[id.value] = true;
    PruneResult result;
    result.exact = tol == 0.0;
    for (auto v : topological_order(net)) {
        if (gone[v.value] || v == in)
            continue;
        bool live_input = false;
        bool all_zero = true;
        for (auto k : net.in_arcs(v)) {
            const auto& a = net.arcs()[k];
            if (!gone[a.src.value])
                live_input = true;
            else if (!zero[a.src.value] || !a.fn.maps_zero_to_zero())
                all_zero = false;
        }
        if (!live_input) {
            gone[v.value] = true;
            zero[v.value] = all_zero;
        }
    }
    if (gone[out.value])
        fail(ErrorCode::WouldDisconnectOutput, "pruning removes every path to the output");

    std::vector<bool> keep(net.node_count());
    for (std::size_t i = 0; i < keep.size(); ++i)
        keep[i] = !gone[i];
    Graph trimmed = compact(net, keep);
    const auto reach_out = backward_reachable(trimmed, {trimmed.output()});
    std::vector<std::size_t> old_of;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i])
            old_of.push_back(i);
    std::vector<bool> keep2(trimmed.node_count());
    for (std::size_t i = 0; i < keep2.size(); ++i) {
        keep2[i] = reach_out[i];
        if (!reach_out[i])
            gone[old_of[i]] = true;
    }
    for (const auto& a : net.arcs())
        if (gone[a.src.value] && !gone[a.dst.value] && !(zero[a.src.value] && a.fn.maps_zero_to_zero()))
            result.exact = false;
    result.graph = eliminate_jumps(compact(trimmed, keep2));
    result.theta = get_params(result.graph);
    for (std::size_t i = 0; i < gone.size(); ++i)
        if (gone[i])
            result.removed.push_back(NodeId{i});
    result.params_before = param_size(theta);
    result.params_after = param_size(result.theta);
    return result;
}

inline PruneResult prune(const Graph& g, const ParamSet& theta, const ZReport& z)
{
    return prune(g, theta, z.nodes, z.tolerance);
}

struct TicketReport {
    bool applicable = true;
    double epsilon0 = 0.0;
    double best_loss0 = 0.0;
    double regularizer0 = 0.0;
    double regularizer1 = 0.0;
    double c = 0.0;
    /// L(theta1(t)) and the loss it is compared against.
    double start_loss1 = 0.0;
    double reference_loss = 0.0;
    bool reference_is_best = false;
    double final_fidelity1 = 0.0;
    double bound = 0.0;
    std::size_t iterations0 = 0;
    std::size_t iterations1 = 0;
    bool start_condition = false;
    bool fidelity_condition = false;
    bool iteration_condition = false;

    bool passed() const { return applicable && start_condition && fidelity_condition && iteration_condition; }
};

/// Checks the winning-ticket conclusions for run1, retrained from a ticket
/// pruned at step t of run0:
///   (a) L(theta1(t)) <= L(theta0*) when t is the last step of run0,
///       L(theta1(t)) <= L(theta0(t)) for a rewound ticket;
///   (b) final fidelity of run1 <= (c + 1) eps0* with
///       c = (R(|theta0|) - R(|theta1|)) / eps0*;
///   (c) run1 takes no more iterations than run0.
inline TicketReport verify_ticket(const TrainRun& run0, const TrainRun& run1, std::size_t t, double lambda)
{
    TicketReport r;
    const std::size_t size0 = param_size(run0.checkpoints.front().theta);
    const std::size_t size1 = param_size(run1.checkpoints.front().theta);
    r.applicable = size1 < size0 && t <= run0.iterations;
    r.epsilon0 = run0.best_fidelity;
    r.best_loss0 = run0.best_loss;
    r.regularizer0 = lambda * static_cast<double>(size0);
    r.regularizer1 = lambda * static_cast<double>(size1);
    const double gap = r.regularizer0 - r.regularizer1;
    if (r.epsilon0 > 0.0)
        r.c = gap / r.epsilon0;
    else
        r.c = gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.start_loss1 = run1.loss_trace.front();
    r.reference_is_best = t >= run0.iterations;
    r.reference_loss = r.reference_is_best ? run0.best_loss : run0.loss_trace.at(std::min(t, run0.iterations));
    r.final_fidelity1 = run1.fidelity_trace.back();
    r.bound = (r.c + 1.0) * r.epsilon0;
    if (r.epsilon0 == 0.0)
        r.bound = gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.iterations0 = run0.iterations;
    r.iterations1 = run1.iterations;
    r.start_condition = r.start_loss1 <= r.reference_loss;
    r.fidelity_condition = r.final_fidelity1 <= r.bound;
    r.iteration_condition = r.iterations1 <= r.iterations0;
    return r;
}

inline TicketReport verify_ticket(const TrainRun& run0, const TrainRun& run1)
{
    if (!run1.pruned_at)
        fail(ErrorCode::ConditionsUnsatisfied, "the second run does not record where it was pruned");
    return verify_ticket(run0, run1, *run1.pruned_at, run0.options.lambda);
}

struct RewindOptions {
    double tol = 0.0;
    /// Prune the union of Z over all levels instead of the first nonempty one.
    bool scan_all_levels = false;
    /// After pruning, detect again on the pruned network until nothing vanishes.
    bool rescan = false;
};

/// Pruned sub-network with parameters theta1(t).
struct Ticket {
    Graph graph;
    ParamSet theta;
    std::size_t step = 0;
    bool step_is_final = false;
    std::vector<ZReport> reports;
    bool exact = true;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    /// L(theta0(t)) and L(theta1(t)).
    double loss_before = 0.0;
    double loss_after = 0.0;

    bool loss_condition() const { return loss_after <= loss_before; }
};

/// Rewinds run0 to checkpoint t, scans levels L-1 down to 0 for vanishing
/// nodes and prunes them.
inline Ticket rewind_prune(const TrainRun& run0, std::size_t t, const RewindOptions& opts = {})
{
    const Checkpoint* cp = run0.checkpoint(t);
    if (!cp)
        fail(ErrorCode::NoCheckpoint, "run has no checkpoint at step " + std::to_string(t));
    Ticket ticket;
    ticket.step = t;
    ticket.step_is_final = t == run0.iterations;
    Graph g = set_params(run0.graph, cp->theta);
    ParamSet theta = cp->theta;
    ticket.params_before = param_size(theta);
    bool pruned_any = false;
    for (bool again = true; again;) {
        again = false;
        const LevelMap lm = assign_levels(g);
        const NodeId out = g.output();
        std::set<NodeId> chosen;
        double tol_used = 0.0;
        for (std::size_t n = lm.max_level(); n-- > 0;) {
            ZReport z = detect_z(g, theta, run0.data, n, opts.tol, t);
            std::erase(z.nodes, out);
            if (z.empty())
                continue;
            tol_used = std::max(tol_used, z.tolerance);
            chosen.insert(z.nodes.begin(), z.nodes.end());
            ticket.reports.push_back(std::move(z));
            if (!opts.scan_all_levels)
                break;
        }
        if (chosen.empty())
            break;
        auto result = prune(g, theta, std::vector<NodeId>(chosen.begin(), chosen.end()), tol_used);
        ticket.exact = ticket.exact && result.exact;
        g = std::move(result.graph);
        theta = std::move(result.theta);
        pruned_any = true;
        again = opts.rescan;
    }
    if (!pruned_any)
        fail(ErrorCode::ConditionsUnsatisfied, "no level has nodes that vanish on the training data at step " +
                                                   std::to_string(t));
    ticket.graph = g;
    ticket.theta = theta;
    ticket.params_after = param_size(theta);
    const double lambda = run0.options.lambda;
    ticket.loss_before = run0.loss_trace.at(t);
    ticket.loss_after = loss(g, theta, run0.data, lambda).loss;
    return ticket;
}

/// Trains the ticket for at most the parent's remaining budget and records
/// where it came from.
inline TrainRun retrain(const Ticket& ticket, const TrainRun& run0, std::optional<std::size_t> steps = std::nullopt)
{
    TrainOptions opts = run0.options;
    opts.steps = steps.value_or(run0.iterations);
    TrainRun run = train(ticket.graph, ticket.theta, run0.data, opts);
    run.pruned_at = ticket.step;
    run.pruned_at_final = ticket.step_is_final;
    return run;
}

} // namespace dagdnn
