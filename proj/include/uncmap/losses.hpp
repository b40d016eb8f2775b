#pragma once

// Segmentation loss terms (focal, dice), BEV / total objective aggregation
// and calibration measurement of the drivable confidence map.

#include <cmath>
#include <ostream>
#include <vector>

#include "uncmap/common.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/lane.hpp"
#include "uncmap/loss_report.hpp"
#include "uncmap/planner.hpp"
#include "uncmap/uncertainty.hpp"

namespace uncmap {

struct LossWeights {
    double perc{1.0};
    double focal{1.0};
    double dice{1.0};
    double det{1.0};
    double cls{1.0};
    double traj{1.0};
    double rank{1.0};
    double intent{1.0};
    double center{1.0};

    void validate() const {
        for (double w : {perc, focal, dice, det, cls, traj, rank, intent, center})
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
    }
    PlanningWeights planning() const { return {cls, traj, rank}; }
    LaneWeights lane() const { return {intent, center}; }
};

namespace detail {
inline void check_target(const ProbabilityField& pbar, const SemanticGrid& target) {
    if (!(pbar.spec == target.spec())) throw DataError("target grid shape differs from probabilities");
    if (pbar.num_classes != target.num_classes()) throw DataError("target class count differs from probabilities");
}
}  // namespace detail

/// Mean over pixels of -alpha (1 - p_y)^gamma ln p_y; gradient w.r.t. every
/// entry of pbar (nonzero only at the target class).
inline LossValue focal_loss(const ProbabilityField& pbar, const SemanticGrid& target, double gamma = 2.0,
                            double alpha = 0.25) {
    detail::check_target(pbar, target);
    const std::size_t n = pbar.spec.cells();
    const int k = pbar.num_classes;
    LossValue out;
    out.grad.assign(n * k, 0.0);
    std::vector<double> per(n);
    const auto labels = target.labels();
    for (std::size_t p = 0; p < n; ++p) {
        const int y = labels[p];
        const double py = std::max(pbar.values[p * k + y], 1e-12);
        const double q = 1.0 - py;
        const double lp = std::log(py);
        per[p] = -alpha * std::pow(q, gamma) * lp;
        const double dq = (gamma == 0.0 || q == 0.0) ? 0.0 : alpha * gamma * std::pow(q, gamma - 1.0) * lp;
        out.grad[p * k + y] = (dq - alpha * std::pow(q, gamma) / py) / static_cast<double>(n);
    }
    out.value = mean(per);
    return out;
}

/// 1 - mean over classes of (2 I_c + eps) / (P_c + G_c + eps), where I_c is
/// the probability mass on pixels labelled c, P_c the total predicted mass
/// of c and G_c the number of pixels labelled c.
inline LossValue dice_loss(const ProbabilityField& pbar, const SemanticGrid& target, double eps = 1.0) {
    detail::check_target(pbar, target);
    const std::size_t n = pbar.spec.cells();
    const int k = pbar.num_classes;
    std::vector<double> inter(k, 0.0), pred(k, 0.0), gt(k, 0.0);
    const auto labels = target.labels();
    for (std::size_t p = 0; p < n; ++p) {
        for (int c = 0; c < k; ++c) pred[c] += pbar.values[p * k + c];
        inter[labels[p]] += pbar.values[p * k + labels[p]];
        gt[labels[p]] += 1.0;
    }
    LossValue out;
    out.grad.assign(n * k, 0.0);
    double acc = 0.0;
    std::vector<double> num(k), den(k);
    for (int c = 0; c < k; ++c) {
        num[c] = 2.0 * inter[c] + eps;
        den[c] = pred[c] + gt[c] + eps;
        acc += num[c] / den[c];
    }
    out.value = 1.0 - acc / k;
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < k; ++c) {
            const double hit = labels[p] == c ? 2.0 : 0.0;
            out.grad[p * k + c] = -(hit * den[c] - num[c]) / (den[c] * den[c] * k);
        }
    return out;
}

struct BevComponents {
    double perc{0.0};
    double focal{0.0};
    double dice{0.0};
};

/// Detection is out of scope: its weight is carried, its value is 0.
inline LossReport bev_loss(const BevComponents& c, const LossWeights& w) {
    w.validate();
    LossReport r;
    r.add("perc", w.perc, c.perc);
    r.add("focal", w.focal, c.focal);
    r.add("dice", w.dice, c.dice);
    r.add("det", w.det, 0.0);
    return r;
}

inline LossReport total_loss(const LossReport& bev, const LossReport& lane, const LossReport& planning) {
    LossReport r;
    for (const auto* part : {&bev, &lane, &planning})
        for (const auto& t : part->terms) r.terms.push_back(t);
    return r;
}

// ---- calibration -------------------------------------------------------------

struct CalibrationBin {
    double lo{0.0};
    double hi{0.0};
    double mean_confidence{0.0};
    double accuracy{0.0};
    std::size_t count{0};
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double ece{0.0};
    std::size_t total{0};
};

/// Binary drivable calibration. The prediction is "drivable" iff
/// prob >= 0.5; confidence is max(prob, 1 - prob); bins are equal-width
/// over [0, 1] with the last bin closed.
inline CalibrationReport expected_calibration_error(std::span<const double> drivable_prob,
                                                    const std::vector<bool>& truth, int num_bins = 10) {
    if (num_bins < 1) throw InputError("bin count must be >= 1");
    if (drivable_prob.size() != truth.size()) throw InputError("confidence / truth size mismatch");
    CalibrationReport rep;
    rep.total = truth.size();
    std::vector<double> conf_sum(num_bins, 0.0), hit_sum(num_bins, 0.0);
    std::vector<std::size_t> cnt(num_bins, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double p = std::clamp(drivable_prob[i], 0.0, 1.0);
        const double conf = std::max(p, 1.0 - p);
        const bool correct = (p >= 0.5) == truth[i];
        const int b = std::min(num_bins - 1, static_cast<int>(conf * num_bins));
        conf_sum[b] += conf;
        hit_sum[b] += correct ? 1.0 : 0.0;
        ++cnt[b];
    }
    for (int b = 0; b < num_bins; ++b) {
        CalibrationBin bin;
        bin.lo = static_cast<double>(b) / num_bins;
        bin.hi = static_cast<double>(b + 1) / num_bins;
        bin.count = cnt[b];
        if (cnt[b] > 0) {
            bin.mean_confidence = conf_sum[b] / cnt[b];
            bin.accuracy = hit_sum[b] / cnt[b];
            rep.ece += (static_cast<double>(cnt[b]) / rep.total) * std::abs(bin.accuracy - bin.mean_confidence);
        }
        rep.bins.push_back(bin);
    }
    return rep;
}

enum class ConfidenceSource { safety_score, drivable_probability };

inline CalibrationReport expected_calibration_error(const DrivableScoreMap& map, const std::vector<bool>& truth,
                                                    int num_bins = 10,
                                                    ConfidenceSource src = ConfidenceSource::safety_score) {
    return expected_calibration_error(src == ConfidenceSource::safety_score ? map.s_safe : map.p_pos, truth,
                                      num_bins);
}

/// Reliability-diagram table: "bin_lo,bin_hi,mean_conf,accuracy,count".
inline void write_reliability_csv(std::ostream& os, const CalibrationReport& rep) {
    os << "bin_lo,bin_hi,mean_conf,accuracy,count\n";
    for (const auto& b : rep.bins)
        os << format_fixed6(b.lo) << ',' << format_fixed6(b.hi) << ',' << format_fixed6(b.mean_confidence) << ','
           << format_fixed6(b.accuracy) << ',' << b.count << '\n';
    if (!os) throw IoError("failed writing reliability csv");
}

}  // namespace uncmap
