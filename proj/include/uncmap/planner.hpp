#pragma once

// Candidate trajectories against the drivable score map: rasterization,
// minimum-safety scoring, weighting, discard, selection and planning losses.

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "uncmap/common.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/loss_report.hpp"
#include "uncmap/uncertainty.hpp"

namespace uncmap {

inline constexpr double kDefaultBeta = 4.0;
inline constexpr double kDefaultRankMargin = 0.1;

/// Timestamped ego-frame waypoints, optionally with a per-point intent
/// score in [0, 1] (empty when absent).
class Trajectory {
public:
    Trajectory(std::vector<double> times, std::vector<Vec2> points, std::vector<double> intent = {})
        : times_(std::move(times)), points_(std::move(points)), intent_(std::move(intent)) {
        if (points_.empty()) throw InputError("trajectory needs at least one point");
        if (times_.size() != points_.size()) throw InputError("trajectory times / points length mismatch");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1])) throw InputError("trajectory timestamps must strictly increase");
        if (!intent_.empty() && intent_.size() != points_.size())
            throw InputError("intent column length mismatch");
        for (double m : intent_)
            if (!(m >= 0.0 && m <= 1.0)) throw InputError("intent values must lie in [0, 1]");
    }

    static Trajectory uniform(std::vector<Vec2> points, double dt, double t0 = 0.0) {
        std::vector<double> t(points.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = t0 + dt * static_cast<double>(i);
        return Trajectory(std::move(t), std::move(points));
    }

    std::size_t size() const { return points_.size(); }
    const std::vector<Vec2>& points() const { return points_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& intent() const { return intent_; }
    Vec2 operator[](std::size_t i) const { return points_[i]; }

    Trajectory with_points(std::vector<Vec2> pts) const { return Trajectory(times_, std::move(pts), intent_); }
    Trajectory with_intent(std::vector<double> intent) const {
        return Trajectory(times_, points_, std::move(intent));
    }

    /// Linear interpolation in time; clamps outside [t_first, t_last].
    Vec2 at_time(double t) const {
        if (t <= times_.front()) return points_.front();
        if (t >= times_.back()) return points_.back();
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - times_.begin());
        const double a = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
        return points_[i - 1] + a * (points_[i] - points_[i - 1]);
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<double> times_;
    std::vector<Vec2> points_;
    std::vector<double> intent_;
};

/// `other` sampled at the timestamps of `like` (identity if they match).
inline std::vector<Vec2> aligned_points(const Trajectory& like, const Trajectory& other) {
    if (like.times() == other.times()) return other.points();
    std::vector<Vec2> out;
    out.reserve(like.size());
    for (double t : like.times()) out.push_back(other.at_time(t));
    return out;
}

/// Mean pointwise Euclidean distance after time alignment.
inline double mean_l2_distance(const Trajectory& a, const Trajectory& b) {
    const auto bp = aligned_points(a, b);
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = norm(a[i] - bp[i]);
    return mean(d);
}

struct PathSample {
    Vec2 world;
    PixelCoord pixel;
};

/// Straight-segment resampling at spacing <= step. Every waypoint appears
/// once; a segment of length L contributes ceil(L / step) intervals.
inline std::vector<PathSample> rasterize_path(const Trajectory& traj, const GridSpec& spec, double step) {
    if (!(step > 0.0)) throw InputError("rasterization step must be positive");
    if (traj.size() < 2) throw InputError("rasterization needs at least two waypoints");
    std::vector<PathSample> out;
    const auto& pts = traj.points();
    out.push_back({pts[0], project_to_grid(pts[0], spec)});
    for (std::size_t s = 1; s < pts.size(); ++s) {
        const Vec2 a = pts[s - 1];
        const Vec2 d = pts[s] - a;
        const double len = norm(d);
        const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / step - 1e-9)));
        for (std::size_t i = 1; i <= n; ++i) {
            const Vec2 w = (i == n) ? pts[s] : a + (static_cast<double>(i) / n) * d;
            out.push_back({w, project_to_grid(w, spec)});
        }
    }
    return out;
}

/// Bilinear interpolation of a pixel-center-sampled plane at a continuous
/// coordinate; clamps to the outermost centers.
inline double bilinear(std::span<const double> plane, const GridSpec& spec, double row, double col) {
    const double u = std::clamp(row - 0.5, 0.0, static_cast<double>(spec.height - 1));
    const double v = std::clamp(col - 0.5, 0.0, static_cast<double>(spec.width - 1));
    const int i0 = std::min(static_cast<int>(u), std::max(spec.height - 2, 0));
    const int j0 = std::min(static_cast<int>(v), std::max(spec.width - 2, 0));
    const int i1 = std::min(i0 + 1, spec.height - 1);
    const int j1 = std::min(j0 + 1, spec.width - 1);
    const double fu = u - i0;
    const double fv = v - j0;
    const double a = plane[spec.index(i0, j0)], b = plane[spec.index(i0, j1)];
    const double c = plane[spec.index(i1, j0)], d = plane[spec.index(i1, j1)];
    return (1 - fu) * ((1 - fv) * a + fv * b) + fu * ((1 - fv) * c + fv * d);
}

struct SafetyResult {
    double score{0.0};       // min interpolated s_safe over in-bounds samples
    bool discarded{false};   // any sample out of bounds or on a masked pixel
    double h_at_min{0.0};    // interpolated h_group at the minimizing sample
    std::size_t argmin{0};   // index into the rasterized samples
};

inline SafetyResult min_safety(const Trajectory& traj, const DrivableScoreMap& map, double step) {
    const auto samples = rasterize_path(traj, map.spec, step);
    SafetyResult r;
    r.score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& px = samples[i].pixel;
        if (!px.in_bounds) {
            r.discarded = true;
            continue;
        }
        const int row = static_cast<int>(std::floor(px.row));
        const int col = static_cast<int>(std::floor(px.col));
        if (map.masked(row, col)) r.discarded = true;
        const double s = bilinear(map.s_safe, map.spec, px.row, px.col);
        if (s < r.score) {
            r.score = s;
            r.argmin = i;
        }
    }
    if (!std::isfinite(r.score)) {
        r.score = 0.0;
        r.h_at_min = 0.0;
        return r;
    }
    const auto& px = samples[r.argmin].pixel;
    r.h_at_min = bilinear(map.h_group, map.spec, px.row, px.col);
    return r;
}

inline SafetyResult min_safety(const Trajectory& traj, const DrivableScoreMap& map) {
    return min_safety(traj, map, map.spec.resolution / 2.0);
}

struct CandidateSet {
    std::vector<Trajectory> candidates;
    std::vector<double> prior_weights;
    std::vector<double> min_safety;
    std::vector<double> h_at_min;
    std::vector<double> score_logits;  // log prior + beta * min_safety
    std::vector<double> posterior_weights;
    std::vector<bool> discarded;
    bool no_safe_plan{false};

    std::size_t size() const { return candidates.size(); }

    /// Uniform priors when none are given.
    static CandidateSet from(std::vector<Trajectory> cands, std::vector<double> priors = {}) {
        if (cands.empty()) throw InputError("candidate set must not be empty");
        CandidateSet s;
        const std::size_t n = cands.size();
        if (priors.empty()) priors.assign(n, 1.0 / static_cast<double>(n));
        if (priors.size() != n) throw InputError("prior weight count mismatch");
        double sum = 0.0;
        for (double p : priors) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("prior weights must be finite and >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InputError("prior weights must sum to 1");
        s.candidates = std::move(cands);
        s.prior_weights = std::move(priors);
        s.min_safety.assign(n, 0.0);
        s.h_at_min.assign(n, 0.0);
        s.score_logits.assign(n, 0.0);
        s.posterior_weights = s.prior_weights;
        s.discarded.assign(n, false);
        return s;
    }
};

/// Fills min_safety, h_at_min and discard flags; candidates are independent.
inline void score_candidates(CandidateSet& set, const DrivableScoreMap& map, double step) {
    std::vector<SafetyResult> res(set.size());
    parallel_for(set.size(), [&](std::size_t i) { res[i] = min_safety(set.candidates[i], map, step); });
    for (std::size_t i = 0; i < set.size(); ++i) {
        set.min_safety[i] = res[i].score;
        set.h_at_min[i] = res[i].h_at_min;
        set.discarded[i] = res[i].discarded;
    }
}

/// posterior_i ∝ prior_i * exp(beta * min_safety_i) over kept candidates.
inline void finalize_weights(CandidateSet& set, double beta) {
    const std::size_t n = set.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        set.score_logits[i] = std::log(set.prior_weights[i]) + beta * set.min_safety[i];
        if (!set.discarded[i]) mx = std::max(mx, set.score_logits[i]);
    }
    set.no_safe_plan = !std::isfinite(mx);
    if (set.no_safe_plan) {
        set.posterior_weights.assign(n, 0.0);
        return;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        set.posterior_weights[i] = set.discarded[i] ? 0.0 : std::exp(set.score_logits[i] - mx);
        sum += set.posterior_weights[i];
    }
    for (auto& w : set.posterior_weights) w /= sum;
}

inline CandidateSet weight_candidates(CandidateSet set, const DrivableScoreMap& map, double beta = kDefaultBeta) {
    score_candidates(set, map, map.spec.resolution / 2.0);
    finalize_weights(set, beta);
    return set;
}

struct ScoredPlan {
    std::size_t chosen_index{0};
    double score{0.0};
    std::vector<double> per_candidate_scores;
};

/// Argmax over kept candidates of log(posterior) - penalty; ties go to the
/// lowest index. An empty penalty span means plain posterior argmax.
inline ScoredPlan select_plan(const CandidateSet& set, std::span<const double> penalties = {}) {
    if (!penalties.empty() && penalties.size() != set.size()) throw InputError("penalty count mismatch");
    ScoredPlan plan;
    plan.per_candidate_scores.resize(set.size(), -std::numeric_limits<double>::infinity());
    bool found = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.discarded[i] || set.posterior_weights[i] <= 0.0) continue;
        const double s = penalties.empty() ? set.posterior_weights[i]
                                           : std::log(set.posterior_weights[i]) - penalties[i];
        plan.per_candidate_scores[i] = s;
        if (!found || s > plan.score) {
            plan.score = s;
            plan.chosen_index = i;
            found = true;
        }
    }
    if (!found) throw NoSafePlanError("every candidate was discarded");
    return plan;
}

/// Candidates the classification loss normalizes over: the kept ones, or
/// all of them when nothing survived.
inline std::vector<bool> eligible_candidates(const CandidateSet& set) {
    std::vector<bool> e(set.size());
    bool any = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
        e[i] = !set.discarded[i];
        any = any || e[i];
    }
    if (!any) e.assign(set.size(), true);
    return e;
}

/// Eligible candidate with the smallest mean L2 distance to the expert.
inline std::size_t expert_consistent_index(const CandidateSet& set, const Trajectory& expert,
                                           const std::vector<bool>& eligible) {
    std::size_t best = set.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (!eligible[i]) continue;
        const double d = mean_l2_distance(set.candidates[i], expert);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (best == set.size()) throw InputError("no eligible candidate");
    return best;
}

/// -log softmax(logits)[target] over the eligible entries; gradient w.r.t.
/// all logits (zero for ineligible ones).
inline LossValue classification_loss(std::span<const double> logits, const std::vector<bool>& eligible,
                                     std::size_t target) {
    if (logits.empty()) throw InputError("classification loss needs at least one candidate");
    if (!eligible.at(target)) throw InputError("target candidate is not eligible");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (eligible[i]) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    std::vector<double> p(logits.size(), 0.0);
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (eligible[i]) sum += (p[i] = std::exp(logits[i] - mx));
    LossValue out;
    out.grad.assign(logits.size(), 0.0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!eligible[i]) continue;
        p[i] /= sum;
        out.grad[i] = p[i] - (i == target ? 1.0 : 0.0);
    }
    out.value = -(logits[target] - mx - std::log(sum));
    return out;
}

inline LossValue classification_loss(const CandidateSet& set, const Trajectory& expert) {
    const auto eligible = eligible_candidates(set);
    return classification_loss(set.score_logits, eligible, expert_consistent_index(set, expert, eligible));
}

/// Mean over aligned points of |dx| + |dy|; gradient w.r.t. the chosen
/// points, laid out x0, y0, x1, y1, ...
inline LossValue trajectory_loss(const Trajectory& chosen, const Trajectory& expert) {
    const auto ep = aligned_points(chosen, expert);
    const double n = static_cast<double>(chosen.size());
    LossValue out;
    out.grad.resize(2 * chosen.size());
    std::vector<double> per(chosen.size());
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const Vec2 d = chosen[i] - ep[i];
        per[i] = std::abs(d.x) + std::abs(d.y);
        out.grad[2 * i] = sgn(d.x) / n;
        out.grad[2 * i + 1] = sgn(d.y) / n;
    }
    out.value = mean(per);
    return out;
}

/// Mean pairwise hinge max(0, margin - (s_i - s_j)) over pairs where i is
/// strictly closer to the expert than j. Pairs touching a non-finite score
/// are skipped.
inline LossValue ranking_loss(std::span<const double> scores, std::span<const double> distances,
                              double margin = kDefaultRankMargin) {
    if (scores.size() != distances.size()) throw InputError("score / distance count mismatch");
    if (scores.size() < 2) throw InputError("ranking loss needs at least two candidates");
    LossValue out;
    out.grad.assign(scores.size(), 0.0);
    std::vector<double> hinges;
    std::vector<std::pair<std::size_t, std::size_t>> active;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!(distances[i] < distances[j])) continue;
            if (!std::isfinite(scores[i]) || !std::isfinite(scores[j])) continue;
            const double h = margin - (scores[i] - scores[j]);
            hinges.push_back(std::max(0.0, h));
            if (h > 0.0) active.emplace_back(i, j);
        }
    }
    if (hinges.empty()) return out;
    const double inv = 1.0 / static_cast<double>(hinges.size());
    for (auto [i, j] : active) {
        out.grad[i] -= inv;
        out.grad[j] += inv;
    }
    out.value = mean(hinges);
    return out;
}

inline std::vector<double> expert_distances(const CandidateSet& set, const Trajectory& expert) {
    std::vector<double> d(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) d[i] = mean_l2_distance(set.candidates[i], expert);
    return d;
}

inline LossValue ranking_loss(const CandidateSet& set, const Trajectory& expert, double margin = kDefaultRankMargin) {
    return ranking_loss(set.score_logits, expert_distances(set, expert), margin);
}

/// Selected plan, or the highest-logit candidate when nothing survived.
inline std::size_t chosen_or_best(const CandidateSet& set) {
    if (!set.no_safe_plan) {
        try {
            return select_plan(set).chosen_index;
        } catch (const NoSafePlanError&) {
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.size(); ++i)
        if (set.score_logits[i] > set.score_logits[best]) best = i;
    return best;
}

struct PlanningWeights {
    double cls{1.0};
    double traj{1.0};
    double rank{1.0};
};

/// L_traj is taken on `chosen` when given, else on the plain posterior choice.
inline LossReport planning_loss(const CandidateSet& set, const Trajectory& expert, PlanningWeights w = {},
                                double margin = kDefaultRankMargin, std::optional<std::size_t> chosen = {}) {
    LossReport r;
    auto cls = classification_loss(set, expert);
    auto traj = trajectory_loss(set.candidates.at(chosen.value_or(chosen_or_best(set))), expert);
    LossValue rank;
    if (set.size() >= 2) rank = ranking_loss(set, expert, margin);
    r.add("cls", w.cls, cls.value, std::move(cls.grad));
    r.add("traj", w.traj, traj.value, std::move(traj.grad));
    r.add("rank", w.rank, rank.value, std::move(rank.grad));
    return r;
}

// ---- trajectory CSV --------------------------------------------------------

inline std::string format_fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s(buf);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

/// Header "t,x,y" (plus ",intent" when the trajectory carries intent).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
    const bool intent = !tr.intent().empty();
    os << "t,x,y" << (intent ? ",intent" : "") << '\n';
    for (std::size_t i = 0; i < tr.size(); ++i) {
        os << format_fixed6(tr.times()[i]) << ',' << format_fixed6(tr[i].x) << ',' << format_fixed6(tr[i].y);
        if (intent) os << ',' << format_fixed6(tr.intent()[i]);
        os << '\n';
    }
    if (!os) throw IoError("failed writing trajectory csv");
}

inline Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty trajectory csv");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool intent = false;
    if (line == "t,x,y,intent") intent = true;
    else if (line != "t,x,y") throw DataError("trajectory csv header must be 't,x,y' or 't,x,y,intent'");
    std::vector<double> t, m;
    std::vector<Vec2> p;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError("non-numeric trajectory cell: '" + cell + "'");
            }
        }
        if (vals.size() != (intent ? 4u : 3u)) throw DataError("wrong column count in trajectory csv");
        t.push_back(vals[0]);
        p.push_back({vals[1], vals[2]});
        if (intent) m.push_back(vals[3]);
    }
    try {
        return Trajectory(std::move(t), std::move(p), std::move(m));
    } catch (const InputError& e) {
        throw DataError(std::string("invalid trajectory csv: ") + e.what());
    }
}

}  // namespace uncmap
