#pragma once

// End-to-end scene runs: generate, build the score map, weight and select a
// candidate, and measure compliance. Shared by the CLI and the acceptance
// experiments.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "uncmap/grid.hpp"
#include "uncmap/lane.hpp"
#include "uncmap/losses.hpp"
#include "uncmap/planner.hpp"
#include "uncmap/scenegen.hpp"
#include "uncmap/uncertainty.hpp"

namespace uncmap {

struct PipelineOptions {
    GridSpec grid{};
    ClassTaxonomy taxonomy = ClassTaxonomy::standard();
    McConfig map_mc{kMapSamples, 0};
    McConfig loss_mc{kLossSamples, 0};
    double tau_drive{kDefaultTauDrive};
    double beta{kDefaultBeta};
    LossWeights weights{};
    double d_follow{kDefaultFollowDistance};
    bool uncertainty{true};
    bool lane_reg{true};
    int ece_bins{10};
};

/// Everything produced for one scenario.
struct ScenarioRun {
    ScenarioSpec spec;
    Scene scene;
    ExpertPlan expert;
    CenterlineField centerlines;
    DrivableScoreMap map;
    CandidateSet candidates;
    std::vector<double> lane_penalties;  // empty when lane regularization is off
    std::optional<ScoredPlan> plan;      // empty on no-safe-plan
};

/// Geometric intent of an arbitrary trajectory: 1 where it lies within
/// d_follow of a centerline pixel.
inline IntentMask geometric_intent(const Trajectory& tr, const CenterlineField& field, double d_follow) {
    return build_gt_intent_mask(tr, field, d_follow);
}

/// Per-candidate lane_loss total against the expert, with each candidate's
/// own geometric intent as its predicted mask.
inline std::vector<double> lane_penalties(const CandidateSet& set, const ExpertPlan& expert,
                                          const CenterlineField& field, double d_follow, LaneWeights w) {
    std::vector<double> pen(set.size());
    parallel_for(set.size(), [&](std::size_t i) {
        const auto& c = set.candidates[i];
        const auto m_pred = geometric_intent(c, field, d_follow);
        pen[i] = lane_loss(c, m_pred, expert.trajectory, expert.intent, field, w).total();
    });
    return pen;
}

inline DrivableScoreMap build_map(const LogitField& field, const PipelineOptions& opt) {
    return opt.uncertainty ? build_score_map(field, opt.taxonomy, opt.map_mc, opt.tau_drive)
                           : build_baseline_score_map(field, opt.taxonomy, opt.tau_drive);
}

inline ScenarioRun run_scenario(const ScenarioSpec& spec, const PipelineOptions& opt) {
    auto scene = generate_scene(spec, opt.grid, opt.taxonomy);
    auto expert = generate_expert(spec, opt.grid, opt.d_follow);
    CenterlineField field(scene.truth, opt.taxonomy);
    auto map = build_map(scene.field, opt);
    auto set = weight_candidates(generate_candidates(spec, expert.trajectory), map, opt.beta);
    ScenarioRun run{spec, std::move(scene), std::move(expert), std::move(field), std::move(map), std::move(set), {}, {}};
    if (opt.lane_reg)
        run.lane_penalties = lane_penalties(run.candidates, run.expert, run.centerlines, opt.d_follow,
                                            opt.weights.lane());
    if (!run.candidates.no_safe_plan) run.plan = select_plan(run.candidates, run.lane_penalties);
    return run;
}

/// Fraction of rasterized samples that fall on truth-drivable pixels;
/// out-of-bounds samples count as not drivable.
inline double dac_like(const Trajectory& tr, const SemanticGrid& truth, const ClassTaxonomy& tax) {
    const auto samples = rasterize_path(tr, truth.spec(), truth.spec().resolution / 2.0);
    std::size_t ok = 0;
    for (const auto& s : samples) {
        if (!s.pixel.in_bounds) continue;
        if (tax.is_drivable(truth.at(static_cast<int>(s.pixel.row), static_cast<int>(s.pixel.col)))) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(samples.size());
}

/// Fraction of intent-active points (matched expert point is lane-following)
/// within d_follow of a truth centerline pixel; 1 when none is active.
inline double lk_like(const Trajectory& tr, const ExpertPlan& expert, const CenterlineField& field,
                      double d_follow) {
    const auto pi = match_nearest(tr, expert.trajectory);
    const auto active = active_points(expert.intent, pi);
    std::size_t n = 0, ok = 0;
    for (std::size_t t = 0; t < tr.size(); ++t) {
        if (!active[t]) continue;
        ++n;
        if (field.distance_m(tr[t]) <= d_follow + 1e-9) ++ok;
    }
    return n == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(n);
}

struct ScenarioMetrics {
    std::uint64_t seed{0};
    std::string road;
    bool no_safe_plan{false};
    std::size_t chosen{0};
    double dac{0.0};
    double lk{0.0};
    double min_safety{0.0};
    double h_at_min{0.0};
    double ece{0.0};
};

/// When nothing survived, metrics are taken on the highest-logit candidate
/// and the record carries the no-safe-plan flag.
inline ScenarioMetrics measure(const ScenarioRun& run, const PipelineOptions& opt) {
    ScenarioMetrics m;
    m.seed = run.spec.seed;
    m.road = to_string(run.spec.road);
    m.no_safe_plan = !run.plan.has_value();
    m.chosen = run.plan ? run.plan->chosen_index : chosen_or_best(run.candidates);
    const auto& tr = run.candidates.candidates[m.chosen];
    m.dac = dac_like(tr, run.scene.truth, opt.taxonomy);
    m.lk = lk_like(tr, run.expert, run.centerlines, opt.d_follow);
    m.min_safety = run.candidates.min_safety[m.chosen];
    m.h_at_min = run.candidates.h_at_min[m.chosen];
    m.ece = expected_calibration_error(run.map, run.scene.truth.drivable_mask(opt.taxonomy), opt.ece_bins).ece;
    return m;
}

struct MeanStd {
    double mean{0.0};
    double stdev{0.0};
};

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline MeanStd mean_std(std::span<const double> v) {
    MeanStd r;
    if (v.empty()) return r;
    r.mean = mean(v);
    if (v.size() < 2) return r;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
    r.stdev = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
    return r;
}

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
/// Ties are dropped.
inline double sign_test_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (std::size_t k = wins; k <= n; ++k)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    return std::min(1.0, p);
}

// ---- scenario suites -----------------------------------------------------------

/// Lane-change (even seeds) and fork (odd seeds) scenes with an occluded
/// parked vehicle, covered by an ambiguity region, on the lane the expert
/// does not take. Candidates are proposed around both lanes, so about half
/// of them drive through the vehicle.
inline ScenarioSpec avoidance_scenario(std::uint64_t seed) {
    using rng::Stream;
    ScenarioSpec sc;
    sc.seed = seed;
    sc.noise_level = 1.0;
    sc.num_candidates = 10;
    sc.lane_candidates = true;
    sc.candidate_amplitude = 0.8;
    sc.candidate_drift = 0.3;
    Vec2 box;
    if (seed % 2 == 0) {
        // The expert moves to the left lane; the vehicle waits in the old one.
        sc.road = RoadTemplate::lane_change;
        sc.lane_change_start = rng::uniform(4.0, 8.0, seed, Stream::scene_layout, 0);
        sc.lane_change_length = rng::uniform(10.0, 14.0, seed, Stream::scene_layout, 1);
        box = {sc.lane_change_start + sc.lane_change_length + rng::uniform(1.0, 4.0, seed, Stream::scene_layout, 2),
               0.0};
    } else {
        // The expert keeps the main lane; the vehicle stands on the branch.
        sc.road = RoadTemplate::fork;
        sc.fork_start = 4.0;
        sc.fork_rate = 0.011;
        const double x = rng::uniform(22.0, 26.0, seed, Stream::scene_layout, 2);
        box = {x, sc.fork_rate * (x - sc.fork_start) * (x - sc.fork_start)};
    }
    sc.agents.push_back({box, {2.5, 1.4}, true});
    sc.ambiguity.push_back({box, 2.8, 4.5});
    return sc;
}

/// Straight (even seeds) and curve (odd seeds) scenes without hazards whose
/// candidates drift laterally away from the lane center.
inline ScenarioSpec lane_keeping_scenario(std::uint64_t seed) {
    using rng::Stream;
    ScenarioSpec sc;
    sc.seed = seed;
    sc.noise_level = 1.0;
    sc.num_candidates = 10;
    sc.candidate_amplitude = 0.5;
    sc.candidate_drift = 1.6;
    if (seed % 2 == 0) {
        sc.road = RoadTemplate::straight;
    } else {
        sc.road = RoadTemplate::curve;
        sc.curvature = rng::uniform(0.008, 0.016, seed, Stream::scene_layout, 0);
    }
    return sc;
}

inline ScenarioSpec suite_scenario(const std::string& suite, std::uint64_t seed) {
    if (suite == "avoidance") return avoidance_scenario(seed);
    if (suite == "lane-keeping" || suite == "lane_keeping") return lane_keeping_scenario(seed);
    throw ConfigError("unknown scenario suite '" + suite + "'");
}

}  // namespace uncmap
