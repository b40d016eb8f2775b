#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace uncmap;

namespace {

ScenarioSpec clean(RoadTemplate road) {
    ScenarioSpec sc;
    sc.road = road;
    return sc;
}

}  // namespace

TEST(Compliance, ExpertIsCompliantOnItsOwnScene) {
    const PipelineOptions opt;
    for (auto road : {RoadTemplate::straight, RoadTemplate::curve, RoadTemplate::fork, RoadTemplate::lane_change}) {
        const auto run = run_scenario(clean(road), opt);
        EXPECT_EQ(dac_like(run.expert.trajectory, run.scene.truth, opt.taxonomy), 1.0) << to_string(road);
        EXPECT_EQ(lk_like(run.expert.trajectory, run.expert, run.centerlines, opt.d_follow), 1.0) << to_string(road);
    }
}

TEST(Compliance, ForcedViolatingChoiceLosesDrivableCompliance) {
    const PipelineOptions opt;
    auto sc = clean(RoadTemplate::straight);
    sc.violating_candidate = true;
    const auto run = run_scenario(sc, opt);
    EXPECT_LT(dac_like(run.candidates.candidates.back(), run.scene.truth, opt.taxonomy), 1.0);
}

TEST(Compliance, LaneKeepingIsVacuousWithoutActivePoints) {
    const PipelineOptions opt;
    auto run = run_scenario(clean(RoadTemplate::straight), opt);
    run.expert.intent.assign(run.expert.intent.size(), 0.0);
    const auto far = run.expert.trajectory.with_points(std::vector<Vec2>(run.expert.trajectory.size(), Vec2{5.0, 3.0}));
    EXPECT_EQ(lk_like(far, run.expert, run.centerlines, opt.d_follow), 1.0);
}

TEST(Pipeline, SingleCleanCandidateSelectsTheExpert) {
    auto sc = clean(RoadTemplate::curve);
    sc.num_candidates = 1;
    const auto run = run_scenario(sc, PipelineOptions{});
    ASSERT_TRUE(run.plan.has_value());
    EXPECT_EQ(run.plan->chosen_index, 0u);
}

TEST(Pipeline, CleanExpertPredictionHasNoTrajectoryOrCenterlineLoss) {
    auto sc = clean(RoadTemplate::straight);
    sc.num_candidates = 1;
    const PipelineOptions opt;
    const auto run = run_scenario(sc, opt);
    const auto& pred = run.candidates.candidates[0];
    const auto plan = planning_loss(run.candidates, run.expert.trajectory, opt.weights.planning(), kDefaultRankMargin, 0);
    const auto lane = lane_loss(pred, geometric_intent(pred, run.centerlines, opt.d_follow), run.expert.trajectory,
                                run.expert.intent, run.centerlines);
    EXPECT_EQ(plan.value_of("traj"), 0.0);
    EXPECT_EQ(lane.value_of("center"), 0.0);
    EXPECT_EQ(lane.value_of("intent"), 0.0);
}

TEST(Pipeline, ZeroWeightsGiveZeroTotal) {
    PipelineOptions opt;
    opt.weights = LossWeights{0, 0, 0, 0, 0, 0, 0, 0, 0};
    auto sc = clean(RoadTemplate::fork);
    sc.noise_level = 0.5;
    const auto run = run_scenario(sc, opt);
    const auto bev = bev_loss({0.4, 0.2, 0.1}, opt.weights);
    const auto lane = lane_loss(run.candidates.candidates[1], std::vector<double>(run.expert.intent.size(), 0.5),
                                run.expert.trajectory, run.expert.intent, run.centerlines, opt.weights.lane());
    const auto plan = planning_loss(run.candidates, run.expert.trajectory, opt.weights.planning());
    EXPECT_EQ(total_loss(bev, lane, plan).total(), 0.0);
}

TEST(Pipeline, LanePenaltiesOnlyWhenEnabled) {
    PipelineOptions opt;
    opt.lane_reg = false;
    const auto off = run_scenario(lane_keeping_scenario(3), opt);
    EXPECT_TRUE(off.lane_penalties.empty());
    opt.lane_reg = true;
    const auto on = run_scenario(lane_keeping_scenario(3), opt);
    ASSERT_EQ(on.lane_penalties.size(), on.candidates.size());
    for (std::size_t i = 0; i < on.candidates.size(); ++i) {
        const auto& c = on.candidates.candidates[i];
        const auto direct = lane_loss(c, geometric_intent(c, on.centerlines, opt.d_follow), on.expert.trajectory,
                                      on.expert.intent, on.centerlines, opt.weights.lane());
        EXPECT_EQ(on.lane_penalties[i], direct.total());
    }
    EXPECT_EQ(*std::min_element(on.lane_penalties.begin(), on.lane_penalties.end()), on.lane_penalties[0]);
}

TEST(Pipeline, BaselineMapHasNoEntropy) {
    PipelineOptions opt;
    opt.uncertainty = false;
    const auto run = run_scenario(avoidance_scenario(1), opt);
    for (double h : run.map.h_group) ASSERT_EQ(h, 0.0);
}

TEST(Statistics, SignTest) {
    EXPECT_EQ(sign_test_p(0, 0), 1.0);
    EXPECT_NEAR(sign_test_p(5, 0), 1.0 / 32.0, 1e-15);
    EXPECT_NEAR(sign_test_p(1, 1), 0.75, 1e-15);
    EXPECT_NEAR(sign_test_p(9, 1), 11.0 / 1024.0, 1e-14);
    EXPECT_LT(sign_test_p(10, 0), 0.01);
}

TEST(Statistics, MeanAndSampleDeviation) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto s = mean_std(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.stdev, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_std(std::vector<double>{7.0}).stdev, 0.0);
}

TEST(Suites, AreDeterministicAndAlternateTemplates) {
    EXPECT_EQ(avoidance_scenario(0).road, RoadTemplate::lane_change);
    EXPECT_EQ(avoidance_scenario(1).road, RoadTemplate::fork);
    EXPECT_EQ(lane_keeping_scenario(2).road, RoadTemplate::straight);
    EXPECT_EQ(lane_keeping_scenario(3).road, RoadTemplate::curve);
    EXPECT_EQ(to_string(suite_scenario("lane-keeping", 5).road), "curve");
    EXPECT_THROW(suite_scenario("nope", 0), ConfigError);
    const auto a = avoidance_scenario(6), b = avoidance_scenario(6);
    EXPECT_EQ(a.agents[0].center.x, b.agents[0].center.x);
    EXPECT_EQ(a.lane_change_start, b.lane_change_start);
}

TEST(SelfCheck, EveryGradientFamilyPasses) {
    const auto checks = run_gradient_checks(5, 123);
    ASSERT_EQ(checks.size(), 8u);
    for (const auto& c : checks) {
        EXPECT_TRUE(c.pass) << c.name << " " << c.max_rel_error;
        EXPECT_EQ(c.instances, 5);
    }
    EXPECT_EQ(checks[0].name, "perc");
    EXPECT_EQ(checks[7].name, "center");
}

TEST(SelfCheck, RelativeErrorDefinition) {
    EXPECT_EQ(relative_error(std::vector<double>{0, 0}, std::vector<double>{0, 0}), 0.0);
    EXPECT_NEAR(relative_error(std::vector<double>{3, 4}, std::vector<double>{3, 4.5}),
                oracle::rel_err({3, 4}, {3, 4.5}), 1e-15);
}

TEST(Threads, ParallelForPropagatesWorkerErrors) {
    EXPECT_THROW(parallel_for(64, [](std::size_t i) {
                     if (i == 37) throw DataError("boom");
                 }),
                 DataError);
    std::vector<int> hit(100, 0);
    parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) EXPECT_EQ(h, 1);
}
