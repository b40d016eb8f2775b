#pragma once

// JSON documents: scenario specs, run configuration and report emitters.
// All emitted objects use insertion-ordered keys so output is byte-stable.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uncmap/losses.hpp"
#include "uncmap/pipeline.hpp"
#include "uncmap/scenegen.hpp"
#include "uncmap/selfcheck.hpp"

namespace uncmap {

using Json = nlohmann::ordered_json;

namespace detail {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline Vec2 read_vec2(const Json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(std::string(what) + " must be a [x, y] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* key : keys) ok = ok || k == key;
        if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + what);
    }
}

inline Json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("invalid JSON in '" + path.string() + "': " + e.what());
    }
}

}  // namespace detail

inline Json to_json(Vec2 v) { return Json::array({v.x, v.y}); }

// ---- scenario spec ---------------------------------------------------------

inline Json to_json(const ScenarioSpec& sc) {
    Json j;
    j["seed"] = sc.seed;
    j["road"] = to_string(sc.road);
    j["lane_width"] = sc.lane_width;
    j["num_candidates"] = sc.num_candidates;
    j["noise_level"] = sc.noise_level;
    j["logit_margin"] = sc.logit_margin;
    j["base_log_sigma"] = sc.base_log_sigma;
    j["horizon"] = sc.horizon;
    j["dt"] = sc.dt;
    j["speed"] = sc.speed;
    j["curvature"] = sc.curvature;
    j["fork_start"] = sc.fork_start;
    j["fork_rate"] = sc.fork_rate;
    j["expert_lane"] = sc.expert_lane;
    j["lane_change_start"] = sc.lane_change_start;
    j["lane_change_length"] = sc.lane_change_length;
    j["candidate_amplitude"] = sc.candidate_amplitude;
    j["lane_candidates"] = sc.lane_candidates;
    j["candidate_drift"] = sc.candidate_drift;
    j["violating_candidate"] = sc.violating_candidate;
    j["ambiguity"] = Json::array();
    for (const auto& r : sc.ambiguity)
        j["ambiguity"].push_back(Json{{"center", to_json(r.center)}, {"radius", r.radius}, {"sigma_boost", r.sigma_boost}});
    j["agents"] = Json::array();
    for (const auto& a : sc.agents)
        j["agents"].push_back(
            Json{{"center", to_json(a.center)}, {"half_extent", to_json(a.half_extent)}, {"occluded", a.occluded}});
    return j;
}

inline ScenarioSpec scenario_from_json(const Json& j) {
    detail::reject_unknown(j,
                           {"seed", "road", "lane_width", "num_candidates", "noise_level", "logit_margin",
                            "base_log_sigma", "horizon", "dt", "speed", "curvature", "fork_start", "fork_rate",
                            "expert_lane", "lane_change_start", "lane_change_length", "candidate_amplitude",
                            "lane_candidates", "candidate_drift", "violating_candidate", "ambiguity", "agents"},
                           "scenario");
    ScenarioSpec sc;
    detail::read_opt(j, "seed", sc.seed);
    if (j.contains("road")) {
        if (!j["road"].is_string()) throw ConfigError("road must be a string");
        sc.road = road_template_from_string(j["road"].get<std::string>());
    }
    detail::read_opt(j, "lane_width", sc.lane_width);
    detail::read_opt(j, "num_candidates", sc.num_candidates);
    detail::read_opt(j, "noise_level", sc.noise_level);
    detail::read_opt(j, "logit_margin", sc.logit_margin);
    detail::read_opt(j, "base_log_sigma", sc.base_log_sigma);
    detail::read_opt(j, "horizon", sc.horizon);
    detail::read_opt(j, "dt", sc.dt);
    detail::read_opt(j, "speed", sc.speed);
    detail::read_opt(j, "curvature", sc.curvature);
    detail::read_opt(j, "fork_start", sc.fork_start);
    detail::read_opt(j, "fork_rate", sc.fork_rate);
    detail::read_opt(j, "expert_lane", sc.expert_lane);
    detail::read_opt(j, "lane_change_start", sc.lane_change_start);
    detail::read_opt(j, "lane_change_length", sc.lane_change_length);
    detail::read_opt(j, "candidate_amplitude", sc.candidate_amplitude);
    detail::read_opt(j, "lane_candidates", sc.lane_candidates);
    detail::read_opt(j, "candidate_drift", sc.candidate_drift);
    detail::read_opt(j, "violating_candidate", sc.violating_candidate);
    if (j.contains("ambiguity")) {
        for (const auto& r : j["ambiguity"]) {
            detail::reject_unknown(r, {"center", "radius", "sigma_boost"}, "ambiguity region");
            AmbiguityRegion reg;
            reg.center = detail::read_vec2(r.value("center", Json::array({0.0, 0.0})), "ambiguity center");
            detail::read_opt(r, "radius", reg.radius);
            detail::read_opt(r, "sigma_boost", reg.sigma_boost);
            sc.ambiguity.push_back(reg);
        }
    }
    if (j.contains("agents")) {
        for (const auto& a : j["agents"]) {
            detail::reject_unknown(a, {"center", "half_extent", "occluded"}, "agent");
            AgentBox box;
            box.center = detail::read_vec2(a.value("center", Json::array({0.0, 0.0})), "agent center");
            if (a.contains("half_extent")) box.half_extent = detail::read_vec2(a["half_extent"], "agent half_extent");
            detail::read_opt(a, "occluded", box.occluded);
            sc.agents.push_back(box);
        }
    }
    sc.validate();
    return sc;
}

// ---- run configuration -----------------------------------------------------

struct SweepSpec {
    std::string suite;                           // "avoidance" or "lane-keeping"
    std::vector<std::filesystem::path> scenarios;  // explicit scenario files
    int seeds{1};                                // seeds per suite / scenario
};

struct RunConfig {
    std::filesystem::path scenario;  // empty when a suite drives the run
    std::filesystem::path out_dir{"out"};
    PipelineOptions options{};
    std::optional<SweepSpec> sweep;
    int gradient_check_instances{5};
    std::optional<std::uint64_t> seed;  // overrides scenario and Monte-Carlo seeds
};

inline GridSpec grid_from_json(const Json& j) {
    detail::reject_unknown(j, {"height", "width", "resolution", "origin"}, "grid");
    GridSpec g;
    detail::read_opt(j, "height", g.height);
    detail::read_opt(j, "width", g.width);
    detail::read_opt(j, "resolution", g.resolution);
    if (j.contains("origin")) g.origin = detail::read_vec2(j["origin"], "grid origin");
    g.validate();
    return g;
}

inline ClassTaxonomy taxonomy_from_json(const Json& j) {
    detail::reject_unknown(j, {"classes", "drivable", "centerline"}, "taxonomy");
    std::vector<std::string> labels;
    detail::read_opt(j, "classes", labels);
    if (labels.empty()) throw ConfigError("taxonomy needs a nonempty 'classes' list");
    std::set<int> drivable;
    detail::read_opt(j, "drivable", drivable);
    int centerline = -1;
    detail::read_opt(j, "centerline", centerline);
    return ClassTaxonomy(static_cast<int>(labels.size()), drivable, centerline, labels);
}

inline LossWeights weights_from_json(const Json& j) {
    detail::reject_unknown(j, {"perc", "focal", "dice", "det", "cls", "traj", "rank", "intent", "center"},
                           "weights");
    LossWeights w;
    detail::read_opt(j, "perc", w.perc);
    detail::read_opt(j, "focal", w.focal);
    detail::read_opt(j, "dice", w.dice);
    detail::read_opt(j, "det", w.det);
    detail::read_opt(j, "cls", w.cls);
    detail::read_opt(j, "traj", w.traj);
    detail::read_opt(j, "rank", w.rank);
    detail::read_opt(j, "intent", w.intent);
    detail::read_opt(j, "center", w.center);
    w.validate();
    return w;
}

/// Relative paths inside the document resolve against `base_dir`.
inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    detail::reject_unknown(j,
                           {"scenario", "out", "grid", "taxonomy", "mc", "tau_drive", "beta", "weights", "d_follow",
                            "uncertainty", "lane_reg", "ece_bins", "sweep", "gradient_check_instances"},
                           "run config");
    RunConfig rc;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() ? base_dir / path : path;
    };
    if (j.contains("scenario")) rc.scenario = resolve(j["scenario"].get<std::string>());
    if (j.contains("out")) rc.out_dir = j["out"].get<std::string>();
    auto& o = rc.options;
    if (j.contains("grid")) o.grid = grid_from_json(j["grid"]);
    if (j.contains("taxonomy")) o.taxonomy = taxonomy_from_json(j["taxonomy"]);
    if (j.contains("mc")) {
        const auto& mc = j["mc"];
        detail::reject_unknown(mc, {"map_samples", "loss_samples", "seed"}, "mc");
        detail::read_opt(mc, "map_samples", o.map_mc.num_samples);
        detail::read_opt(mc, "loss_samples", o.loss_mc.num_samples);
        std::uint64_t seed = 0;
        detail::read_opt(mc, "seed", seed);
        o.map_mc.seed = o.loss_mc.seed = seed;
    }
    detail::read_opt(j, "tau_drive", o.tau_drive);
    detail::read_opt(j, "beta", o.beta);
    if (j.contains("weights")) o.weights = weights_from_json(j["weights"]);
    detail::read_opt(j, "d_follow", o.d_follow);
    detail::read_opt(j, "uncertainty", o.uncertainty);
    detail::read_opt(j, "lane_reg", o.lane_reg);
    detail::read_opt(j, "ece_bins", o.ece_bins);
    detail::read_opt(j, "gradient_check_instances", rc.gradient_check_instances);
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        detail::reject_unknown(s, {"suite", "scenarios", "seeds"}, "sweep");
        SweepSpec sw;
        detail::read_opt(s, "suite", sw.suite);
        std::vector<std::string> files;
        detail::read_opt(s, "scenarios", files);
        for (const auto& f : files) sw.scenarios.push_back(resolve(f));
        detail::read_opt(s, "seeds", sw.seeds);
        rc.sweep = sw;
    }
    return rc;
}

inline void validate(const RunConfig& rc) {
    const auto& o = rc.options;
    o.grid.validate();
    o.map_mc.validate();
    o.loss_mc.validate();
    o.weights.validate();
    if (!(o.tau_drive >= 0.0 && o.tau_drive <= 1.0)) throw ConfigError("tau_drive must lie in [0, 1]");
    if (!std::isfinite(o.beta) || o.beta < 0.0) throw ConfigError("beta must be finite and >= 0");
    if (!(o.d_follow >= 0.0)) throw ConfigError("d_follow must be >= 0");
    if (o.ece_bins < 1) throw ConfigError("ece_bins must be >= 1");
    if (rc.gradient_check_instances < 1) throw ConfigError("gradient_check_instances must be >= 1");
    if (rc.sweep) {
        if (rc.sweep->seeds < 1) throw ConfigError("sweep seeds must be >= 1");
        if (rc.sweep->suite.empty() && rc.sweep->scenarios.empty())
            throw ConfigError("sweep needs a suite or scenario files");
        if (!rc.sweep->suite.empty()) (void)suite_scenario(rc.sweep->suite, 0);
        for (const auto& p : rc.sweep->scenarios)
            if (!std::filesystem::exists(p)) throw IoError("scenario file '" + p.string() + "' does not exist");
    }
    if (!rc.scenario.empty() && !std::filesystem::exists(rc.scenario))
        throw IoError("scenario file '" + rc.scenario.string() + "' does not exist");
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(detail::parse_file(path), path.parent_path());
}

inline ScenarioSpec load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(detail::parse_file(path));
}

// ---- reports ---------------------------------------------------------------

inline Json to_json(const CandidateSet& set, std::optional<std::size_t> chosen, std::span<const double> penalties) {
    Json j;
    j["no_safe_plan"] = set.no_safe_plan;
    j["chosen"] = chosen ? Json(*chosen) : Json(nullptr);
    j["candidates"] = Json::array();
    for (std::size_t i = 0; i < set.size(); ++i) {
        Json c;
        c["index"] = i;
        c["min_safety"] = set.min_safety[i];
        c["h_at_min"] = set.h_at_min[i];
        c["prior_weight"] = set.prior_weights[i];
        c["posterior_weight"] = set.posterior_weights[i];
        c["discarded"] = static_cast<bool>(set.discarded[i]);
        if (!penalties.empty()) c["lane_penalty"] = penalties[i];
        j["candidates"].push_back(c);
    }
    return j;
}

inline Json to_json(const CalibrationReport& rep) {
    Json j;
    j["ece"] = rep.ece;
    j["total"] = rep.total;
    j["bins"] = Json::array();
    for (const auto& b : rep.bins)
        j["bins"].push_back(Json{{"lo", b.lo},
                                 {"hi", b.hi},
                                 {"mean_confidence", b.mean_confidence},
                                 {"accuracy", b.accuracy},
                                 {"count", b.count}});
    return j;
}

inline Json to_json(const LossReport& rep) {
    Json j;
    j["terms"] = Json::array();
    for (const auto& t : rep.terms)
        j["terms"].push_back(
            Json{{"name", t.name}, {"weight", t.weight}, {"value", t.value}, {"weighted", t.weighted()}});
    j["total"] = rep.total();
    return j;
}

inline Json to_json(const GradientCheck& g) {
    return Json{{"name", g.name}, {"instances", g.instances}, {"max_rel_error", g.max_rel_error}, {"pass", g.pass}};
}

inline Json to_json(const ScenarioMetrics& m) {
    return Json{{"seed", m.seed},         {"road", m.road},
                {"no_safe_plan", m.no_safe_plan}, {"chosen", m.chosen},
                {"dac", m.dac},           {"lk", m.lk},
                {"min_safety", m.min_safety}, {"h_at_min", m.h_at_min},
                {"ece", m.ece}};
}

/// Pretty-printed with a trailing newline.
inline void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace uncmap
