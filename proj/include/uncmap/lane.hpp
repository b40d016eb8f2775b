#pragma once

// Lane-following regularization: intent masks, nearest-expert matching,
// intent loss and centerline distance loss.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "uncmap/common.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/loss_report.hpp"
#include "uncmap/planner.hpp"

namespace uncmap {

inline constexpr double kDefaultFollowDistance = 0.5;  // meters

/// Per-point intent flags or soft scores in [0, 1].
using IntentMask = std::vector<double>;

/// pi(t): expert index matched to predicted point t.
using Matching = std::vector<std::size_t>;

/// Nearest centerline pixel center to continuous query points.
///
/// Built once per grid: for every row, the sorted columns holding the
/// centerline class (the row pass of a separable Euclidean distance
/// transform). A query scans rows outward from its own row, takes the two
/// bracketing columns in each row, and stops once the row gap alone exceeds
/// the best distance, so results are exact. Ties resolve to the lowest
/// (row, col).
class CenterlineField {
public:
    CenterlineField(const SemanticGrid& grid, const ClassTaxonomy& tax) : spec_(grid.spec()) {
        if (tax.num_classes() != grid.num_classes()) throw ConfigError("taxonomy / grid class count mismatch");
        rows_.resize(spec_.height);
        const int cl = tax.centerline_class();
        for (int r = 0; r < spec_.height; ++r)
            for (int c = 0; c < spec_.width; ++c)
                if (grid.at(r, c) == cl) {
                    rows_[r].push_back(c);
                    ++count_;
                }
    }

    struct Nearest {
        bool found{false};
        double distance{0.0};  // pixels
        int row{-1};
        int col{-1};
    };

    const GridSpec& spec() const { return spec_; }
    std::size_t pixel_count() const { return count_; }

    /// Query in continuous pixel coordinates.
    Nearest nearest_pixel(double row, double col) const {
        Nearest best;
        if (count_ == 0) return best;
        double best_d2 = std::numeric_limits<double>::infinity();
        auto consider = [&](int r, int c) {
            const double dr = row - (r + 0.5);
            const double dc = col - (c + 0.5);
            const double d2 = dr * dr + dc * dc;
            if (d2 < best_d2 || (d2 == best_d2 && (r < best.row || (r == best.row && c < best.col)))) {
                best_d2 = d2;
                best.row = r;
                best.col = c;
                best.found = true;
            }
        };
        auto scan_row = [&](int r) {
            const auto& cols = rows_[r];
            if (cols.empty()) return;
            auto it = std::lower_bound(cols.begin(), cols.end(), col - 0.5);
            if (it != cols.end()) consider(r, *it);
            if (it != cols.begin()) consider(r, *(it - 1));
        };
        auto row_gap2 = [&](int r) {
            const double dr = row - (r + 0.5);
            return dr * dr;
        };
        // The row gap grows monotonically away from `start` in both
        // directions, so the first rejected row ends that direction.
        const int start = std::clamp(static_cast<int>(std::floor(row)), 0, spec_.height - 1);
        scan_row(start);
        bool up_open = true, dn_open = true;
        for (int off = 1; up_open || dn_open; ++off) {
            const int up = start - off;
            const int dn = start + off;
            up_open = up_open && up >= 0 && row_gap2(up) <= best_d2;
            if (up_open) scan_row(up);
            dn_open = dn_open && dn < spec_.height && row_gap2(dn) <= best_d2;
            if (dn_open) scan_row(dn);
        }
        best.distance = std::sqrt(best_d2);
        return best;
    }

    /// Query in ego-frame meters.
    Nearest nearest(Vec2 point) const {
        const auto p = project_to_grid(point, spec_);
        return nearest_pixel(p.row, p.col);
    }

    /// Metric distance to the nearest centerline pixel center (infinity if none).
    double distance_m(Vec2 point) const {
        const auto n = nearest(point);
        return n.found ? n.distance * spec_.resolution : std::numeric_limits<double>::infinity();
    }

private:
    GridSpec spec_;
    std::vector<std::vector<int>> rows_;
    std::size_t count_{0};
};

/// 1 where the point lies within d_follow meters of a centerline pixel center.
inline IntentMask build_gt_intent_mask(const Trajectory& expert, const CenterlineField& field,
                                       double d_follow = kDefaultFollowDistance) {
    IntentMask m(expert.size(), 0.0);
    if (field.pixel_count() == 0) return m;
    for (std::size_t i = 0; i < expert.size(); ++i)
        m[i] = field.distance_m(expert[i]) <= d_follow + 1e-9 ? 1.0 : 0.0;
    return m;
}

inline IntentMask build_gt_intent_mask(const Trajectory& expert, const SemanticGrid& grid, const ClassTaxonomy& tax,
                                       double d_follow = kDefaultFollowDistance) {
    return build_gt_intent_mask(expert, CenterlineField(grid, tax), d_follow);
}

/// Nearest expert point for each predicted point; ties go to the lowest index.
inline Matching match_nearest(const Trajectory& pred, const Trajectory& expert) {
    Matching pi(pred.size());
    for (std::size_t t = 0; t < pred.size(); ++t) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < expert.size(); ++j) {
            const Vec2 d = pred[t] - expert[j];
            const double d2 = d.x * d.x + d.y * d.y;
            if (d2 < best) {
                best = d2;
                pi[t] = j;
            }
        }
    }
    return pi;
}

/// (1/T) sum_t |m_pred(t) - m_gt(pi(t))|; gradient w.r.t. m_pred.
inline LossValue intent_loss(std::span<const double> m_pred, std::span<const double> m_gt, const Matching& pi) {
    if (m_pred.size() != pi.size()) throw InputError("predicted mask length must match the matching");
    LossValue out;
    out.grad.resize(m_pred.size());
    if (m_pred.empty()) return out;
    std::vector<double> per(m_pred.size());
    const double inv = 1.0 / static_cast<double>(m_pred.size());
    for (std::size_t t = 0; t < m_pred.size(); ++t) {
        if (pi[t] >= m_gt.size()) throw InputError("matching index outside the expert mask");
        const double d = m_pred[t] - m_gt[pi[t]];
        per[t] = std::abs(d);
        out.grad[t] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    out.value = mean(per);
    return out;
}

/// Predicted points whose matched expert point is lane-following.
inline std::vector<bool> active_points(std::span<const double> m_gt, const Matching& pi) {
    std::vector<bool> a(pi.size());
    for (std::size_t t = 0; t < pi.size(); ++t) a[t] = m_gt[pi[t]] >= 0.5;
    return a;
}

/// Mean pixel distance from active projected points to the nearest
/// centerline pixel center (0 when no point is active). Gradient w.r.t. the
/// predicted points in meters, laid out x0, y0, x1, y1, ...
inline LossValue centerline_loss(const Trajectory& pred, const std::vector<bool>& active,
                                 const CenterlineField& field) {
    if (active.size() != pred.size()) throw InputError("active mask length mismatch");
    LossValue out;
    out.grad.assign(2 * pred.size(), 0.0);
    std::vector<double> d;
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < pred.size(); ++t)
        if (active[t]) idx.push_back(t);
    if (idx.empty() || field.pixel_count() == 0) return out;
    const auto& spec = field.spec();
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (std::size_t t : idx) {
        const auto px = project_to_grid(pred[t], spec);
        const auto n = field.nearest_pixel(px.row, px.col);
        d.push_back(n.distance);
        if (n.distance > 0.0) {
            out.grad[2 * t] = inv * (px.row - (n.row + 0.5)) / (n.distance * spec.resolution);
            out.grad[2 * t + 1] = inv * (px.col - (n.col + 0.5)) / (n.distance * spec.resolution);
        }
    }
    out.value = mean(d);
    return out;
}

inline LossValue centerline_loss(const Trajectory& pred, const std::vector<bool>& active, const SemanticGrid& grid,
                                 const ClassTaxonomy& tax) {
    return centerline_loss(pred, active, CenterlineField(grid, tax));
}

struct LaneWeights {
    double intent{1.0};
    double center{1.0};
};

/// lambda_intent * L_intent + lambda_center * L_center for a prediction
/// against an expert with its lane-following mask.
inline LossReport lane_loss(const Trajectory& pred, std::span<const double> m_pred, const Trajectory& expert,
                            std::span<const double> m_gt, const CenterlineField& field, LaneWeights w = {}) {
    if (m_gt.size() != expert.size()) throw InputError("expert mask length mismatch");
    const auto pi = match_nearest(pred, expert);
    auto intent = intent_loss(m_pred, m_gt, pi);
    auto center = centerline_loss(pred, active_points(m_gt, pi), field);
    LossReport r;
    r.add("intent", w.intent, intent.value, std::move(intent.grad));
    r.add("center", w.center, center.value, std::move(center.grad));
    return r;
}

}  // namespace uncmap
