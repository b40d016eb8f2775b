#pragma once

// Deterministic synthetic BEV scenes: painted semantic truth, Gaussian logit
// fields with injected ambiguity, an expert trajectory with its
// lane-following mask, and laterally offset candidate trajectories.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uncmap/common.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/lane.hpp"
#include "uncmap/planner.hpp"
#include "uncmap/rng.hpp"
#include "uncmap/uncertainty.hpp"

namespace uncmap {

enum class RoadTemplate { straight, curve, fork, lane_change };

inline std::string to_string(RoadTemplate t) {
    switch (t) {
        case RoadTemplate::straight: return "straight";
        case RoadTemplate::curve: return "curve";
        case RoadTemplate::fork: return "fork";
        case RoadTemplate::lane_change: return "lane-change";
    }
    return "straight";
}

inline RoadTemplate road_template_from_string(const std::string& s) {
    if (s == "straight") return RoadTemplate::straight;
    if (s == "curve") return RoadTemplate::curve;
    if (s == "fork") return RoadTemplate::fork;
    if (s == "lane-change" || s == "lane_change") return RoadTemplate::lane_change;
    throw ConfigError("unknown road template '" + s + "'");
}

struct AmbiguityRegion {
    Vec2 center;
    double radius{1.0};
    double sigma_boost{1.0};  // added to log sigma inside the disc
};

/// Static rectangle painted non-drivable in the truth. An occluded box is
/// invisible to the logit field: its pixels keep the logits of whatever
/// class lies underneath.
struct AgentBox {
    Vec2 center;
    Vec2 half_extent{2.25, 0.9};
    bool occluded{false};
};

struct ScenarioSpec {
    std::uint64_t seed{0};
    RoadTemplate road{RoadTemplate::straight};
    double lane_width{3.5};
    std::vector<AmbiguityRegion> ambiguity;
    std::vector<AgentBox> agents;
    int num_candidates{8};
    double noise_level{0.0};  // std of additive logit noise

    double logit_margin{6.0};
    double base_log_sigma{-3.0};

    // expert timing
    int horizon{16};
    double dt{0.25};
    double speed{8.0};

    // road shape
    double curvature{0.015};         // curve: 1/m
    double fork_start{6.0};          // fork: x where the branch leaves
    double fork_rate{0.008};         // fork: lateral = rate * (x - start)^2
    int expert_lane{0};              // fork: 0 main, 1 branch
    double lane_change_start{6.0};   // lane-change: x where the move begins
    double lane_change_length{12.0};

    // candidates
    double candidate_amplitude{3.5};  // max end-point lateral offset (m)
    bool lane_candidates{false};      // offsets around one reference path per lane
    double candidate_drift{0.0};      // max linear drift (m at the last point)
    bool violating_candidate{false};  // last candidate is pushed off-road

    void validate() const {
        if (!(lane_width > 0.0)) throw ConfigError("lane width must be positive");
        if (num_candidates < 1) throw ConfigError("candidate count must be >= 1");
        if (horizon < 2) throw ConfigError("horizon must be >= 2 points");
        if (!(dt > 0.0) || !(speed >= 0.0)) throw ConfigError("dt must be positive and speed non-negative");
        if (!(noise_level >= 0.0)) throw ConfigError("noise level must be >= 0");
        if (!(logit_margin >= 0.0)) throw ConfigError("logit margin must be >= 0");
        for (const auto& r : ambiguity)
            if (!(r.radius > 0.0)) throw ConfigError("ambiguity radius must be positive");
        for (const auto& a : agents)
            if (!(a.half_extent.x > 0.0) || !(a.half_extent.y > 0.0))
                throw ConfigError("agent box extents must be positive");
        if (road == RoadTemplate::fork && expert_lane != 0 && expert_lane != 1)
            throw ConfigError("fork expert lane must be 0 or 1");
        if (road == RoadTemplate::lane_change && !(lane_change_length > 0.0))
            throw ConfigError("lane change length must be positive");
    }
};

/// Lane centerlines as lateral offset functions of longitudinal x.
struct RoadGeometry {
    std::vector<std::function<double(double)>> lanes;
    double half_width{1.75};
};

inline double smoothstep(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * (3.0 - 2.0 * s);
}

inline RoadGeometry road_geometry(const ScenarioSpec& sc) {
    RoadGeometry g;
    g.half_width = sc.lane_width / 2.0;
    const double w = sc.lane_width;
    switch (sc.road) {
        case RoadTemplate::straight:
        case RoadTemplate::lane_change:
            g.lanes = {[](double) { return 0.0; }, [w](double) { return w; }};
            break;
        case RoadTemplate::curve: {
            const double k = sc.curvature;
            auto c0 = [k](double x) { return 0.5 * k * std::max(x, 0.0) * std::max(x, 0.0); };
            g.lanes = {c0, [c0, w](double x) { return c0(x) + w; }};
            break;
        }
        case RoadTemplate::fork: {
            const double x0 = sc.fork_start, r = sc.fork_rate;
            g.lanes = {[](double) { return 0.0; },
                       [x0, r](double x) { return x > x0 ? r * (x - x0) * (x - x0) : 0.0; }};
            break;
        }
    }
    return g;
}

/// Expert lateral position as a function of x.
inline double expert_lateral(const ScenarioSpec& sc, const RoadGeometry& g, double x) {
    switch (sc.road) {
        case RoadTemplate::straight:
        case RoadTemplate::curve: return g.lanes[0](x);
        case RoadTemplate::fork: return g.lanes[sc.expert_lane](x);
        case RoadTemplate::lane_change:
            return sc.lane_width * smoothstep((x - sc.lane_change_start) / sc.lane_change_length);
    }
    return 0.0;
}

struct Scene {
    SemanticGrid truth;
    LogitField field;
};

namespace detail {

inline bool in_box(const AgentBox& b, Vec2 p) {
    return std::abs(p.x - b.center.x) <= b.half_extent.x && std::abs(p.y - b.center.y) <= b.half_extent.y;
}

inline void check_fits(const ScenarioSpec& sc, const GridSpec& grid, const RoadGeometry& g) {
    const double x_end = sc.speed * sc.dt * (sc.horizon - 1);
    const double y_lo = grid.origin.y, y_hi = grid.origin.y + grid.width * grid.resolution;
    const double x_lo = grid.origin.x, x_hi = grid.origin.x + grid.height * grid.resolution;
    if (!(0.0 >= x_lo && x_end < x_hi)) throw ConfigError("expert horizon exceeds the grid");
    const int steps = std::max(2, static_cast<int>(std::ceil(x_end / (grid.resolution / 4.0))));
    for (int i = 0; i <= steps; ++i) {
        const double x = x_end * i / steps;
        for (const auto& lane : g.lanes) {
            const double c = lane(x);
            if (c - g.half_width < y_lo || c + g.half_width >= y_hi)
                throw ConfigError("road corridor exceeds the grid");
        }
    }
}

}  // namespace detail

inline Scene generate_scene(const ScenarioSpec& sc, const GridSpec& grid, const ClassTaxonomy& tax) {
    sc.validate();
    grid.validate();
    const auto g = road_geometry(sc);
    detail::check_fits(sc, grid, g);

    const int road = tax.first_plain_drivable();
    const int center = tax.centerline_class();
    const int off = tax.first_nondrivable();
    const int k = tax.num_classes();

    // Underlying road layout, before agents.
    SemanticGrid layout(grid, k, static_cast<std::uint8_t>(off));
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) {
            const Vec2 p = pixel_center(r, c, grid);
            for (const auto& lane : g.lanes)
                if (std::abs(p.y - lane(p.x)) <= g.half_width) {
                    layout.set(r, c, road);
                    break;
                }
        }
    // Centerlines: every pixel containing a densely sampled centerline point.
    const double x_lo = grid.origin.x, x_hi = grid.origin.x + grid.height * grid.resolution;
    const double step = grid.resolution / 4.0;
    const auto samples = static_cast<int>(std::ceil((x_hi - x_lo) / step));
    for (const auto& lane : g.lanes)
        for (int i = 0; i < samples; ++i) {
            const double x = x_lo + i * step;
            const auto px = project_to_grid({x, lane(x)}, grid);
            if (px.in_bounds) layout.set(static_cast<int>(px.row), static_cast<int>(px.col), center);
        }

    SemanticGrid truth = layout;
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) {
            const Vec2 p = pixel_center(r, c, grid);
            for (const auto& a : sc.agents)
                if (detail::in_box(a, p)) truth.set(r, c, off);
        }

    const std::size_t n = grid.cells();
    std::vector<double> mu(n * k), ls(n * k);
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) {
            const std::size_t p = grid.index(r, c);
            const Vec2 w = pixel_center(r, c, grid);
            int seen = truth.at(r, c);
            for (const auto& a : sc.agents)
                if (a.occluded && detail::in_box(a, w)) seen = layout.at(r, c);
            double boost = 0.0;
            for (const auto& reg : sc.ambiguity)
                if (norm(w - reg.center) <= reg.radius) boost += reg.sigma_boost;
            for (int cls = 0; cls < k; ++cls) {
                double m = cls == seen ? sc.logit_margin : 0.0;
                if (sc.noise_level > 0.0)
                    m += sc.noise_level * rng::normal(sc.seed, rng::Stream::scene_mu_noise, p,
                                                      static_cast<std::uint64_t>(cls));
                mu[p * k + cls] = m;
                ls[p * k + cls] = sc.base_log_sigma + boost;
            }
        }
    return Scene{std::move(truth), LogitField(grid, k, std::move(mu), std::move(ls))};
}

struct ExpertPlan {
    Trajectory trajectory;
    IntentMask intent;  // M_gt
};

/// Lane-following flag: within d_follow of some lane centerline at the
/// same x. Straight and curve experts ride the centerline throughout.
inline ExpertPlan generate_expert(const ScenarioSpec& sc, const GridSpec& grid,
                                  double d_follow = kDefaultFollowDistance) {
    sc.validate();
    grid.validate();
    const auto g = road_geometry(sc);
    detail::check_fits(sc, grid, g);
    std::vector<Vec2> pts;
    IntentMask m;
    for (int i = 0; i < sc.horizon; ++i) {
        const double x = sc.speed * sc.dt * i;
        const double y = expert_lateral(sc, g, x);
        pts.push_back({x, y});
        double best = std::numeric_limits<double>::infinity();
        for (const auto& lane : g.lanes) best = std::min(best, std::abs(y - lane(x)));
        const bool follows = sc.road == RoadTemplate::lane_change ? best <= d_follow : true;
        m.push_back(follows ? 1.0 : 0.0);
    }
    auto tr = Trajectory::uniform(std::move(pts), sc.dt).with_intent(m);
    return {std::move(tr), std::move(m)};
}

/// Left-pointing unit normals of a polyline (central differences).
inline std::vector<Vec2> left_normals(const std::vector<Vec2>& pts) {
    std::vector<Vec2> n(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 a = pts[i == 0 ? 0 : i - 1];
        const Vec2 b = pts[i + 1 < pts.size() ? i + 1 : i];
        Vec2 t = b - a;
        const double l = norm(t);
        t = l > 0.0 ? (1.0 / l) * t : Vec2{1.0, 0.0};
        n[i] = {-t.y, t.x};
    }
    return n;
}

/// Reference path ending on lane `lane`: the lane centerline, with the gap
/// between the lane and the expert's start closed by a smoothstep so the
/// path leaves from the ego position.
inline std::vector<Vec2> lane_reference(const RoadGeometry& g, std::size_t lane, const Trajectory& expert) {
    const auto& f = g.lanes.at(lane);
    const double x_end = expert[expert.size() - 1].x;
    const double gap = f(expert[0].x) - expert[0].y;
    std::vector<Vec2> ref(expert.size());
    for (std::size_t j = 0; j < expert.size(); ++j) {
        const double x = expert[j].x;
        const double s = x_end > expert[0].x ? (x - expert[0].x) / (x_end - expert[0].x) : 1.0;
        ref[j] = {x, f(x) - gap * (1.0 - smoothstep(s))};
    }
    return ref;
}

/// Candidate 0 is the expert. Candidate i >= 1 adds the lateral offset
/// a_i (3 s^2 - 2 s^3) + b_i s along the left normal of its reference path,
/// with s = t / t_end, a_i ~ U(-amplitude, amplitude) and
/// b_i ~ U(-drift, drift). The reference is the expert, or with
/// lane_candidates the lane reference of lane i mod (lane count).
/// Priors are uniform.
inline CandidateSet generate_candidates(const ScenarioSpec& sc, const Trajectory& expert) {
    sc.validate();
    const auto g = road_geometry(sc);
    std::vector<Trajectory> cands;
    cands.push_back(expert.with_intent({}));
    const std::size_t n = expert.size();
    for (int i = 1; i < sc.num_candidates; ++i) {
        double a = rng::uniform(-sc.candidate_amplitude, sc.candidate_amplitude, sc.seed, rng::Stream::candidates,
                                static_cast<std::uint64_t>(i), 0);
        const double b = rng::uniform(-sc.candidate_drift, sc.candidate_drift, sc.seed, rng::Stream::candidates,
                                      static_cast<std::uint64_t>(i), 1);
        if (sc.violating_candidate && i == sc.num_candidates - 1) a = -4.0 * sc.lane_width;
        const auto ref = sc.lane_candidates ? lane_reference(g, static_cast<std::size_t>(i) % g.lanes.size(), expert)
                                            : expert.points();
        const auto normals = left_normals(ref);
        std::vector<Vec2> pts(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double s = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
            const double off = a * s * s * (3.0 - 2.0 * s) + b * s;
            pts[j] = ref[j] + off * normals[j];
        }
        cands.push_back(Trajectory(expert.times(), std::move(pts)));
    }
    return CandidateSet::from(std::move(cands));
}

}  // namespace uncmap
