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

#include "dagdnn/dagdnn.hpp"
#include "support/expect.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

namespace dagdnn {
namespace {

using testing::error_of;

struct Regression {
    Graph graph;
    Dataset data;
};

// Input -> Output through one affine arc, targets from a noisy affine map.
Regression regression(std::uint64_t seed, std::size_t n = 24)
{
    gen::Rng rng(seed);
    Regression r;
    r.graph = apply_series(single_node_graph(3),
                           ArcFunction::affine(gen::random_mat(rng, 2, 3), gen::random_bias(rng, 2)));
    const Mat w = gen::random_mat(rng, 2, 3);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec u = gen::random_vec(rng, 3);
        r.data.inputs.push_back(u);
        r.data.targets.push_back(w * u + 0.1 * gen::random_vec(rng, 2));
    }
    return r;
}

TEST(Params, RoundTripAndSize)
{
    const auto f = gen::one_dead_unit();
    const ParamSet p = get_params(f.graph);
    EXPECT_EQ(param_size(p), 4u * 3u + 4u * 1u);
    const Graph same = set_params(f.graph, p);
    EXPECT_EQ(get_params(same), p);
    ParamSet bad = p;
    bad[ArcId{999}] = {1.0};
    EXPECT_EQ(error_of([&] { set_params(f.graph, bad); }), ErrorCode::ShapeMismatch);
    const ParamSet r1 = random_params(f.graph, 5), r2 = random_params(f.graph, 5);
    EXPECT_EQ(r1, r2);
    EXPECT_EQ(param_size(r1), param_size(p));
}

TEST(Loss, PerfectFitAndZeroNetwork)
{
    const Graph g = apply_series(single_node_graph(2), ArcFunction::linear(Mat::Identity(2, 2)));
    Dataset d;
    gen::Rng rng(1);
    for (int k = 0; k < 5; ++k) {
        const Vec u = gen::random_vec(rng, 2);
        d.inputs.push_back(u);
        d.targets.push_back(u);
    }
    EXPECT_EQ(loss(g, get_params(g), d, 0.0).loss, 0.0);
    const Graph zero = apply_series(single_node_graph(2), ArcFunction::linear(Mat::Zero(2, 2)));
    double expect = 0.0;
    for (const auto& v : d.targets)
        expect += v.squaredNorm();
    expect /= 5.0;
    const LossValue l = loss(zero, get_params(zero), d, 0.0);
    EXPECT_NEAR(l.loss, expect, 1e-15);
    const LossValue r = loss(zero, get_params(zero), d, 0.5);
    EXPECT_NEAR(r.regularizer, 0.5 * 4.0, 1e-15);
    EXPECT_NEAR(r.loss, r.fidelity + r.regularizer, 1e-15);
    EXPECT_EQ(error_of([&] { loss(g, get_params(g), Dataset{}, 0.0); }), ErrorCode::EmptyDataset);
}

TEST(Loss, MatchesIndependentComputation)
{
    gen::Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Graph g = gen::three_level_net(rng);
        const Dataset d = gen::random_data(rng, 10, g.dim(g.input()), g.dim(g.output()));
        const ParamSet p = random_params(g, rng());
        const LossValue l = loss(g, p, d, 1e-3);
        EXPECT_NEAR(l.fidelity, oracle::mse(set_params(g, p), d), 1e-12);
        EXPECT_NEAR(l.regularizer, 1e-3 * static_cast<double>(param_size(p)), 1e-15);
    }
}

TEST(Grad, LinearRegressionClosedForm)
{
    const Regression r = regression(3);
    const ParamSet p = get_params(r.graph);
    const ParamSet gr = grad(r.graph, p, r.data);
    ASSERT_EQ(gr.size(), 1u);
    const auto& fn = r.graph.arcs()[0].fn.as<fn::Affine>();
    Mat gw = Mat::Zero(2, 3);
    Vec gb = Vec::Zero(2);
    for (std::size_t k = 0; k < r.data.size(); ++k) {
        const Vec e = fn.weight * r.data.inputs[k] + fn.bias - r.data.targets[k];
        gw += 2.0 * e * r.data.inputs[k].transpose() / static_cast<double>(r.data.size());
        gb += 2.0 * e / static_cast<double>(r.data.size());
    }
    const auto& g = gr.begin()->second;
    ASSERT_EQ(g.size(), 8u);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(g[static_cast<std::size_t>(i * 3 + j)], gw(i, j), 1e-12);
    EXPECT_NEAR(g[6], gb(0), 1e-12);
    EXPECT_NEAR(g[7], gb(1), 1e-12);
}

TEST(Grad, MatchesFiniteDifferences)
{
    gen::Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Graph g = gen::three_level_net(rng);
        const Dataset d = gen::random_data(rng, 6, g.dim(g.input()), g.dim(g.output()));
        ParamSet p = random_params(g, rng(), 0.8);
        while (oracle::kink_distance(set_params(g, p), d.inputs) < 1e-3)
            p = random_params(g, rng(), 0.8);
        const ParamSet an = grad(g, p, d);
        const ParamSet fd = oracle::finite_difference([&](const ParamSet& q) { return loss(g, q, d, 0.0).fidelity; }, p);
        for (const auto& [id, v] : fd)
            for (std::size_t k = 0; k < v.size(); ++k)
                EXPECT_LT(oracle::rel_err(an.at(id)[k], v[k]), 1e-4);
    }
}

TEST(Grad, ZeroResidualIsZero)
{
    const Graph g = apply_series(single_node_graph(2), ArcFunction::affine(Mat::Identity(2, 2), Vec::Zero(2)));
    Dataset d;
    d.inputs = {Vec::Ones(2), Vec::Zero(2)};
    d.targets = d.inputs;
    for (const auto& [id, v] : grad(g, get_params(g), d))
        for (double x : v)
            EXPECT_EQ(x, 0.0);
}

TEST(Grad, SigmaArcsAreFixed)
{
    const Graph g = apply_series(single_node_graph(2), ArcFunction::sigma("softmax", 2));
    EXPECT_TRUE(get_params(g).empty());
}

TEST(Train, StationaryPointStaysPut)
{
    const Graph g = apply_series(single_node_graph(2), ArcFunction::affine(Mat::Identity(2, 2), Vec::Zero(2)));
    Dataset d;
    d.inputs = {Vec::Ones(2)};
    d.targets = d.inputs;
    const TrainRun run = train(g, {}, d, {});
    EXPECT_TRUE(run.converged);
    EXPECT_EQ(run.iterations, 0u);
    EXPECT_EQ(run.final_theta, get_params(g));
}

TEST(Train, RegressionReachesLeastSquares)
{
    const Regression r = regression(5, 40);
    TrainOptions o;
    o.steps = 3000;
    o.step_size = 0.5;
    o.lambda = 0.0;
    const TrainRun run = train(r.graph, {}, r.data, o);
    EXPECT_NEAR(run.best_fidelity, oracle::least_squares_mse(r.data.inputs, r.data.targets), 1e-6);
    for (std::size_t k = 1; k < run.loss_trace.size(); ++k)
        ASSERT_LE(run.loss_trace[k], run.loss_trace[k - 1]);
}

TEST(Train, Deterministic)
{
    const auto f = gen::one_dead_unit();
    TrainOptions o;
    o.steps = 50;
    o.checkpoint_every = 10;
    const TrainRun a = train(f.graph, {}, f.data, o);
    const TrainRun b = train(f.graph, {}, f.data, o);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_EQ(a.final_theta, b.final_theta);
    std::vector<std::size_t> steps;
    for (const auto& c : a.checkpoints)
        steps.push_back(c.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 10, 20, 30, 40, 50}));
    EXPECT_NE(a.checkpoint(20), nullptr);
    EXPECT_EQ(a.checkpoint(21), nullptr);
}

TEST(Train, DivergedLoss)
{
    const Graph g = apply_series(single_node_graph(1), ArcFunction::linear(Mat::Ones(1, 1)));
    Dataset d;
    d.inputs = {Vec::Constant(1, std::numeric_limits<double>::infinity())};
    d.targets = {Vec::Zero(1)};
    EXPECT_EQ(error_of([&] { train(g, {}, d, {}); }), ErrorCode::DivergedLoss);
}

TEST(DetectZ, DeadUnit)
{
    const auto f = gen::one_dead_unit();
    const ParamSet p = get_params(f.graph);
    const ZReport z = detect_z(f.graph, p, f.data, 0, 0.0);
    EXPECT_EQ(z.nodes, f.dead);
    EXPECT_EQ(z.level, 0u);
    // Independent check: the unit's pre-activation is negative on every input.
    const auto& arc = f.graph.arcs()[f.graph.in_arcs(f.dead[0])[0]];
    const auto& act = arc.fn.as<fn::ActAffine>();
    for (const auto& u : f.data.inputs)
        EXPECT_LT((act.weight * u + act.bias)(0), 0.0);
}

TEST(DetectZ, ToleranceExtremes)
{
    gen::Rng rng(6);
    const Graph g = gen::three_level_net(rng);
    const Dataset d = gen::random_data(rng, 10, g.dim(g.input()), g.dim(g.output()));
    const ParamSet p = get_params(g);
    const LevelMap lm = assign_levels(g);
    const ZReport all = detect_z(g, p, d, 0, std::numeric_limits<double>::infinity());
    EXPECT_EQ(all.nodes, lm.at_level(1));
    // Cross-check each level against per-input node values.
    for (std::size_t n = 0; n < lm.max_level(); ++n) {
        const ZReport z = detect_z(g, p, d, n, 0.0);
        for (auto id : lm.at_level(n + 1)) {
            bool zero = true;
            for (const auto& u : d.inputs)
                zero = zero && oracle::node_values(g, u)[id.value].isZero(0.0);
            EXPECT_EQ(std::find(z.nodes.begin(), z.nodes.end(), id) != z.nodes.end(), zero);
        }
    }
}

TEST(Prune, DeadUnitKeepsFidelity)
{
    const auto f = gen::one_dead_unit();
    const ParamSet p = get_params(f.graph);
    const PruneResult r = prune(f.graph, p, detect_z(f.graph, p, f.data, 0, 0.0));
    EXPECT_TRUE(r.exact);
    EXPECT_LT(r.params_after, r.params_before);
    EXPECT_EQ(r.graph.node_count(), f.graph.node_count() - 1);
    EXPECT_LE(param_size(r.theta), param_size(p));
    for (const auto& u : f.data.inputs)
        EXPECT_LT((oracle::interpret(r.graph, u) - oracle::interpret(f.graph, u)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(oracle::mse(r.graph, f.data), oracle::mse(f.graph, f.data), 1e-15);
}

TEST(Prune, WouldDisconnectOutput)
{
    const auto f = gen::one_dead_unit();
    const LevelMap lm = assign_levels(f.graph);
    EXPECT_EQ(error_of([&] { prune(f.graph, get_params(f.graph), lm.at_level(1)); }),
              ErrorCode::WouldDisconnectOutput);
}

TEST(Prune, CascadesThroughAdditionNodes)
{
    const auto f = gen::two_dead_units();
    const ParamSet p = get_params(f.graph);
    // Pruning the deep dead unit leaves the first layer intact.
    const PruneResult r = prune(f.graph, p, std::vector<NodeId>{f.dead[0]});
    EXPECT_EQ(r.graph.node_count(), f.graph.node_count() - 1);
    EXPECT_TRUE(is_normalized(r.graph));
}

TEST(Ticket, NotApplicableWithoutPruning)
{
    const auto f = gen::one_dead_unit();
    TrainOptions o;
    o.steps = 20;
    const TrainRun run0 = train(f.graph, {}, f.data, o);
    TrainRun same = train(f.graph, {}, f.data, o);
    same.pruned_at = 0;
    const TicketReport r = verify_ticket(run0, same);
    EXPECT_FALSE(r.applicable);
    EXPECT_FALSE(r.passed());
    EXPECT_EQ(error_of([&] { verify_ticket(run0, run0); }), ErrorCode::ConditionsUnsatisfied);
}

TEST(Ticket, ZeroLambdaReducesToFidelity)
{
    const auto f = gen::one_dead_unit();
    TrainOptions o;
    o.steps = 100;
    o.lambda = 0.0;
    const TrainRun run0 = train(f.graph, {}, f.data, o);
    const Ticket t = rewind_prune(run0, 0);
    const TrainRun run1 = retrain(t, run0);
    const TicketReport r = verify_ticket(run0, run1);
    EXPECT_EQ(r.c, 0.0);
    EXPECT_EQ(r.bound, run0.best_fidelity);
    EXPECT_TRUE(r.passed());
}

TEST(Rewind, AtInitAndAtEnd)
{
    const auto f = gen::one_dead_unit();
    TrainOptions o;
    o.steps = 60;
    o.checkpoint_every = 20;
    const TrainRun run0 = train(f.graph, {}, f.data, o);
    const Ticket early = rewind_prune(run0, 0);
    EXPECT_EQ(early.step, 0u);
    EXPECT_LT(early.params_after, early.params_before);
    EXPECT_LE(early.loss_after, early.loss_before);
    const Ticket late = rewind_prune(run0, run0.iterations);
    EXPECT_TRUE(late.step_is_final);
    const PruneResult post = prune(f.graph, run0.final_theta, detect_z(f.graph, run0.final_theta, f.data, 0, 0.0));
    EXPECT_EQ(late.theta, post.theta);
    EXPECT_EQ(error_of([&] { rewind_prune(run0, 7); }), ErrorCode::NoCheckpoint);
}

TEST(Rewind, NothingToPrune)
{
    gen::Rng rng(9);
    const Graph g = gen::three_level_net(rng);
    Dataset d = gen::random_data(rng, 8, g.dim(g.input()), g.dim(g.output()));
    TrainOptions o;
    o.steps = 3;
    const TrainRun run0 = train(g, {}, d, o);
    bool any = false;
    const LevelMap lm = assign_levels(g);
    for (std::size_t n = 0; n + 1 < lm.max_level(); ++n)
        any = any || !detect_z(g, run0.checkpoints.front().theta, d, n, 0.0).nodes.empty();
    if (!any)
        EXPECT_EQ(error_of([&] { rewind_prune(run0, 0); }), ErrorCode::ConditionsUnsatisfied);
}

TEST(Rewind, TwoLoopsShrink)
{
    const auto f = gen::two_dead_units();
    TrainOptions o;
    o.steps = 200;
    const TrainRun run0 = train(f.graph, {}, f.data, o);
    const Ticket t1 = rewind_prune(run0, 0);
    const TrainRun run1 = retrain(t1, run0);
    const Ticket t2 = rewind_prune(run1, 0);
    const TrainRun run2 = retrain(t2, run1);
    EXPECT_GT(param_size(get_params(f.graph)), param_size(t1.theta));
    EXPECT_GT(param_size(t1.theta), param_size(t2.theta));
    EXPECT_TRUE(verify_ticket(run0, run1).passed());
    EXPECT_TRUE(verify_ticket(run1, run2).passed());
    // The first loop removes the deeper unit, the second the shallower one.
    ASSERT_EQ(t1.reports.size(), 1u);
    EXPECT_EQ(t1.reports[0].level, 2u);
    ASSERT_EQ(t2.reports.size(), 1u);
    EXPECT_EQ(t2.reports[0].level, 0u);
}

TEST(Rewind, ScanAllLevelsTakesBoth)
{
    const auto f = gen::two_dead_units();
    TrainOptions o;
    o.steps = 20;
    const TrainRun run0 = train(f.graph, {}, f.data, o);
    RewindOptions opts;
    opts.scan_all_levels = true;
    const Ticket t = rewind_prune(run0, 0, opts);
    EXPECT_EQ(t.graph.node_count(), f.graph.node_count() - 2);
    EXPECT_TRUE(t.exact);
}

} // namespace
} // namespace dagdnn
