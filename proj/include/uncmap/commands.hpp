#pragma once

// The CLI verbs as library calls. Each writes its artifacts under
// RunConfig::out_dir and returns human-readable warnings; failures throw.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uncmap/json_io.hpp"
#include "uncmap/pipeline.hpp"
#include "uncmap/selfcheck.hpp"

namespace uncmap {

using Warnings = std::vector<std::string>;

/// The single scenario a command works on: the configured file, else the
/// configured suite, else the default straight scene. A seed override
/// replaces the scenario's own seed.
inline ScenarioSpec resolve_scenario(const RunConfig& rc) {
    const std::uint64_t seed = rc.seed.value_or(0);
    ScenarioSpec sc;
    if (!rc.scenario.empty()) sc = load_scenario(rc.scenario);
    else if (rc.sweep && !rc.sweep->suite.empty()) return suite_scenario(rc.sweep->suite, seed);
    if (rc.seed) sc.seed = *rc.seed;
    return sc;
}

namespace detail {

inline std::filesystem::path prepare_out(const RunConfig& rc) {
    std::error_code ec;
    std::filesystem::create_directories(rc.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + rc.out_dir.string() + "': " + ec.message());
    return rc.out_dir;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    return out;
}

}  // namespace detail

/// truth.bevg, logits.lgtf, expert.csv (with intent), candidates/NN.csv and
/// the effective scenario.json.
inline Warnings cmd_gen(const RunConfig& rc) {
    validate(rc);
    const auto sc = resolve_scenario(rc);
    const auto& o = rc.options;
    const auto dir = detail::prepare_out(rc);
    const auto scene = generate_scene(sc, o.grid, o.taxonomy);
    const auto expert = generate_expert(sc, o.grid, o.d_follow);
    const auto cands = generate_candidates(sc, expert.trajectory);
    {
        auto out = detail::open_out(dir / "truth.bevg");
        write_semantic_grid(out, scene.truth);
    }
    {
        auto out = detail::open_out(dir / "logits.lgtf");
        write_logit_field(out, scene.field);
    }
    {
        auto out = detail::open_out(dir / "expert.csv");
        write_trajectory_csv(out, expert.trajectory);
    }
    std::filesystem::create_directories(dir / "candidates");
    for (std::size_t i = 0; i < cands.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%02zu.csv", i);
        auto out = detail::open_out(dir / "candidates" / name);
        write_trajectory_csv(out, cands.candidates[i]);
    }
    write_json(dir / "scenario.json", to_json(sc));
    return {};
}

/// scoremap.dsmp, safety.pgm, scoremap.csv, calibration.json, reliability.csv.
inline Warnings cmd_scoremap(const RunConfig& rc) {
    validate(rc);
    const auto sc = resolve_scenario(rc);
    const auto& o = rc.options;
    const auto dir = detail::prepare_out(rc);
    const auto scene = generate_scene(sc, o.grid, o.taxonomy);
    const auto map = build_map(scene.field, o);
    {
        auto out = detail::open_out(dir / "scoremap.dsmp");
        write_score_map(out, map);
    }
    {
        auto out = detail::open_out(dir / "safety.pgm");
        write_safety_pgm(out, map);
    }
    {
        auto out = detail::open_out(dir / "scoremap.csv");
        out << "row,col,p_pos,h_group,s_safe,nondrivable\n";
        for (int r = 0; r < map.spec.height; ++r)
            for (int c = 0; c < map.spec.width; ++c) {
                const auto i = map.spec.index(r, c);
                out << r << ',' << c << ',' << format_fixed6(map.p_pos[i]) << ',' << format_fixed6(map.h_group[i])
                    << ',' << format_fixed6(map.s_safe[i]) << ',' << static_cast<int>(map.nondrivable[i]) << '\n';
            }
        if (!out) throw IoError("failed writing scoremap.csv");
    }
    const auto truth = scene.truth.drivable_mask(o.taxonomy);
    const auto by_safety = expected_calibration_error(map, truth, o.ece_bins, ConfidenceSource::safety_score);
    const auto by_prob = expected_calibration_error(map, truth, o.ece_bins, ConfidenceSource::drivable_probability);
    Json cal;
    cal["safety_score"] = to_json(by_safety);
    cal["drivable_probability"] = to_json(by_prob);
    write_json(dir / "calibration.json", cal);
    {
        auto out = detail::open_out(dir / "reliability.csv");
        write_reliability_csv(out, by_safety);
    }
    return {};
}

/// candidates.json and chosen.csv; on no-safe-plan only the report is written.
inline Warnings cmd_plan(const RunConfig& rc) {
    validate(rc);
    const auto sc = resolve_scenario(rc);
    const auto dir = detail::prepare_out(rc);
    const auto run = run_scenario(sc, rc.options);
    std::optional<std::size_t> chosen;
    if (run.plan) chosen = run.plan->chosen_index;
    write_json(dir / "candidates.json", to_json(run.candidates, chosen, run.lane_penalties));
    Warnings w;
    const auto chosen_path = dir / "chosen.csv";
    if (chosen) {
        auto out = detail::open_out(chosen_path);
        write_trajectory_csv(out, run.candidates.candidates[*chosen]);
    } else {
        std::filesystem::remove(chosen_path);
        w.push_back("no safe plan: every candidate was discarded");
    }
    return w;
}

/// metrics.json with one row per scenario and mean / stdev aggregates.
inline Warnings cmd_eval(const RunConfig& rc) {
    validate(rc);
    const std::uint64_t first_seed = rc.seed.value_or(0);
    std::vector<ScenarioSpec> specs;
    if (rc.sweep) {
        const int n = rc.sweep->seeds;
        if (!rc.sweep->suite.empty())
            for (int k = 0; k < n; ++k) specs.push_back(suite_scenario(rc.sweep->suite, first_seed + k));
        for (const auto& p : rc.sweep->scenarios) {
            const auto base = load_scenario(p);
            for (int k = 0; k < n; ++k) {
                auto s = base;
                s.seed = base.seed + first_seed + k;
                specs.push_back(s);
            }
        }
    } else {
        specs.push_back(resolve_scenario(rc));
    }
    if (specs.empty()) throw ConfigError("evaluation sweep is empty");
    const auto dir = detail::prepare_out(rc);

    std::vector<ScenarioMetrics> rows(specs.size());
    parallel_for(specs.size(), [&](std::size_t i) { rows[i] = measure(run_scenario(specs[i], rc.options), rc.options); });

    Json j;
    j["uncertainty"] = rc.options.uncertainty;
    j["lane_reg"] = rc.options.lane_reg;
    j["scenarios"] = Json::array();
    std::vector<double> dac, lk, ms, ece;
    std::size_t no_plan = 0;
    for (const auto& m : rows) {
        j["scenarios"].push_back(to_json(m));
        dac.push_back(m.dac);
        lk.push_back(m.lk);
        ms.push_back(m.min_safety);
        ece.push_back(m.ece);
        no_plan += m.no_safe_plan ? 1 : 0;
    }
    auto agg = [](std::span<const double> v) {
        const auto s = mean_std(v);
        return Json{{"mean", s.mean}, {"stdev", s.stdev}};
    };
    j["aggregate"] = Json{{"count", rows.size()},
                          {"no_safe_plan", no_plan},
                          {"dac", agg(dac)},
                          {"lk", agg(lk)},
                          {"min_safety", agg(ms)},
                          {"ece", agg(ece)}};
    write_json(dir / "metrics.json", j);
    Warnings w;
    if (no_plan > 0) w.push_back(std::to_string(no_plan) + " scenario(s) had no safe plan");
    return w;
}

/// losses.json: every objective term with weights, the total and the
/// finite-difference gradient summary. The prediction is the selected
/// candidate (highest logit when nothing survived).
inline Warnings cmd_losses(const RunConfig& rc) {
    validate(rc);
    const auto sc = resolve_scenario(rc);
    const auto& o = rc.options;
    const auto dir = detail::prepare_out(rc);
    const auto run = run_scenario(sc, o);

    const auto perc = perception_loss(run.scene.field, run.scene.truth, o.loss_mc);
    const auto pbar = expected_probabilities(run.scene.field, o.loss_mc);
    const auto bev = bev_loss({perc.value, focal_loss(pbar, run.scene.truth).value, dice_loss(pbar, run.scene.truth).value},
                              o.weights);
    const std::size_t chosen = run.plan ? run.plan->chosen_index : chosen_or_best(run.candidates);
    const auto& pred = run.candidates.candidates[chosen];
    const auto m_pred = geometric_intent(pred, run.centerlines, o.d_follow);
    const auto lane = lane_loss(pred, m_pred, run.expert.trajectory, run.expert.intent, run.centerlines, o.weights.lane());
    const auto plan = planning_loss(run.candidates, run.expert.trajectory, o.weights.planning(), kDefaultRankMargin, chosen);
    const auto total = total_loss(bev, lane, plan);

    const auto checks = run_gradient_checks(rc.gradient_check_instances, sc.seed);
    bool all_pass = true;
    Json gc = Json::array();
    for (const auto& c : checks) {
        gc.push_back(to_json(c));
        all_pass = all_pass && c.pass;
    }
    Json j;
    j["seed"] = sc.seed;
    j["chosen"] = chosen;
    j["no_safe_plan"] = !run.plan.has_value();
    j["bev"] = to_json(bev);
    j["lane"] = to_json(lane);
    j["planning"] = to_json(plan);
    j["total"] = total.total();
    j["gradient_checks"] = gc;
    j["gradient_checks_pass"] = all_pass;
    write_json(dir / "losses.json", j);
    Warnings w;
    if (!all_pass) w.push_back("one or more gradient checks failed");
    if (!run.plan) w.push_back("no safe plan: losses use the highest-logit candidate");
    return w;
}

}  // namespace uncmap
