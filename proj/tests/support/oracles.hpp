#pragma once

// Reference implementations used only by the tests. They are written
// independently of the library code paths they check: plain loops, long
// double where it helps, no shared helpers beyond the data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "uncmap/uncmap.hpp"

namespace oracle {

using uncmap::Vec2;

// ---- finite differences ----------------------------------------------------

inline std::vector<double> central_fd(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x, double h = 1e-4) {
    std::vector<double> g(x.size());
    std::vector<double> xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
        xp[i] = xm[i] = x[i];
    }
    return g;
}

/// Norm-wise relative error, 0 when both vectors vanish.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    long double num = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (long double)(a[i] - b[i]) * (a[i] - b[i]);
        na += (long double)a[i] * a[i];
        nb += (long double)b[i] * b[i];
    }
    const long double den = std::sqrt(std::max(na, nb));
    return den == 0 ? 0.0 : static_cast<double>(std::sqrt(num) / den);
}

// ---- Gauss-Hermite quadrature ---------------------------------------------

/// Nodes and weights for the weight function exp(-x^2), by Newton iteration
/// on the orthonormal Hermite recurrence.
inline void gauss_hermite(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const double pim4 = 0.7511255444649425;  // pi^(-1/4)
    double z = 0.0;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        if (i == 0) z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
        else if (i == 1) z -= 1.14 * std::pow(n, 0.426) / z;
        else if (i == 2) z = 1.86 * z - 0.86 * x[0];
        else if (i == 3) z = 1.91 * z - 0.91 * x[1];
        else z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
    }
}

/// E[g(m + s * eps)] for eps ~ N(0, 1).
inline double normal_expectation(const std::function<double(double)>& g, double m, double s, int n = 96) {
    std::vector<double> x, w;
    gauss_hermite(n, x, w);
    long double acc = 0;
    for (int i = 0; i < n; ++i) acc += w[i] * g(m + std::sqrt(2.0) * s * x[i]);
    return static_cast<double>(acc / std::sqrt(std::acos(-1.0L)));
}

// ---- entropy / safety ----------------------------------------------------------

inline double entropy_bits(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    const long double q = p;
    return static_cast<double>(-(q * std::log(q) + (1 - q) * std::log(1 - q)) / std::log(2.0L));
}

inline double safety(double p, double h) { return p * (1.0 - h) + 0.5 * h; }

// ---- geometry --------------------------------------------------------------

/// Bilinear interpolation of a plane sampled at pixel centers, clamped to
/// the outermost centers; written out case by case.
inline double bilinear(const std::vector<double>& plane, int H, int W, double row, double col) {
    double u = row - 0.5, v = col - 0.5;
    u = std::min(std::max(u, 0.0), double(H - 1));
    v = std::min(std::max(v, 0.0), double(W - 1));
    int i0 = static_cast<int>(std::floor(u)), j0 = static_cast<int>(std::floor(v));
    if (i0 >= H - 1) i0 = std::max(H - 2, 0);
    if (j0 >= W - 1) j0 = std::max(W - 2, 0);
    const int i1 = std::min(i0 + 1, H - 1), j1 = std::min(j0 + 1, W - 1);
    const double a = u - i0, b = v - j0;
    auto at = [&](int i, int j) { return plane[static_cast<std::size_t>(i) * W + j]; };
    return at(i0, j0) * (1 - a) * (1 - b) + at(i0, j1) * (1 - a) * b + at(i1, j0) * a * (1 - b) + at(i1, j1) * a * b;
}

struct DenseSafety {
    double score;
    bool discarded;
};

/// Walks every segment at `step` (plus the segment end) in metric space.
inline DenseSafety dense_min_safety(const std::vector<Vec2>& pts, const uncmap::DrivableScoreMap& map, double step) {
    const auto& g = map.spec;
    DenseSafety r{std::numeric_limits<double>::infinity(), false};
    auto visit = [&](Vec2 p) {
        const double row = (p.x - g.origin.x) / g.resolution;
        const double col = (p.y - g.origin.y) / g.resolution;
        if (!(row >= 0 && row < g.height && col >= 0 && col < g.width)) {
            r.discarded = true;
            return;
        }
        const int i = static_cast<int>(row), j = static_cast<int>(col);
        if (map.nondrivable[static_cast<std::size_t>(i) * g.width + j]) r.discarded = true;
        r.score = std::min(r.score, bilinear(map.s_safe, g.height, g.width, row, col));
    };
    visit(pts[0]);
    for (std::size_t s = 1; s < pts.size(); ++s) {
        const Vec2 a = pts[s - 1], b = pts[s];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
        for (int k = 1; k <= n; ++k) {
            const double t = static_cast<double>(k) / n;
            visit({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    if (!std::isfinite(r.score)) r.score = 0.0;
    return r;
}

// ---- matching / distances --------------------------------------------------

inline std::vector<std::size_t> brute_match(const std::vector<Vec2>& pred, const std::vector<Vec2>& expert) {
    std::vector<std::size_t> pi(pred.size());
    for (std::size_t t = 0; t < pred.size(); ++t) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < expert.size(); ++j) {
            const double d = std::hypot(pred[t].x - expert[j].x, pred[t].y - expert[j].y);
            if (d < best) {
                best = d;
                pi[t] = j;
            }
        }
    }
    return pi;
}

/// Pixel distance from a continuous pixel coordinate to the nearest pixel
/// center labelled `cls`, by scanning the whole grid.
inline double brute_center_distance(const uncmap::SemanticGrid& g, int cls, double row, double col) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < g.spec().height; ++r)
        for (int c = 0; c < g.spec().width; ++c)
            if (g.at(r, c) == cls) best = std::min(best, std::hypot(row - (r + 0.5), col - (c + 0.5)));
    return best;
}

// ---- calibration -----------------------------------------------------------

inline double ece(const std::vector<double>& p, const std::vector<bool>& truth, int bins) {
    std::vector<double> conf(bins, 0.0), acc(bins, 0.0), cnt(bins, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double c = p[i] >= 0.5 ? p[i] : 1.0 - p[i];
        int b = static_cast<int>(c * bins);
        if (b == bins) b = bins - 1;
        conf[b] += c;
        acc[b] += ((p[i] >= 0.5) == truth[i]) ? 1.0 : 0.0;
        cnt[b] += 1.0;
    }
    double e = 0.0;
    for (int b = 0; b < bins; ++b)
        if (cnt[b] > 0) e += cnt[b] / p.size() * std::abs(acc[b] / cnt[b] - conf[b] / cnt[b]);
    return e;
}

// ---- random instances ------------------------------------------------------

inline uncmap::GridSpec small_grid(int h, int w, double res = 0.5) {
    uncmap::GridSpec g;
    g.height = h;
    g.width = w;
    g.resolution = res;
    g.origin = {0.0, 0.0};
    return g;
}

inline uncmap::LogitField random_field(std::mt19937_64& rng, const uncmap::GridSpec& g, int k, double ls_lo = -2.0,
                                       double ls_hi = 0.5) {
    std::uniform_real_distribution<double> mu(-3.0, 3.0), ls(ls_lo, ls_hi);
    std::vector<double> m(g.cells() * k), s(g.cells() * k);
    for (auto& v : m) v = mu(rng);
    for (auto& v : s) v = ls(rng);
    return uncmap::LogitField(g, k, m, s);
}

inline uncmap::SemanticGrid random_labels(std::mt19937_64& rng, const uncmap::GridSpec& g, int k) {
    std::uniform_int_distribution<int> d(0, k - 1);
    std::vector<std::uint8_t> lab(g.cells());
    for (auto& l : lab) l = static_cast<std::uint8_t>(d(rng));
    return uncmap::SemanticGrid(g, k, lab);
}

/// Score map from an explicit s_safe plane, with p_pos = s_safe and h = 0.
inline uncmap::DrivableScoreMap map_from_safety(const uncmap::GridSpec& g, std::vector<double> s, double tau = 0.3) {
    std::vector<double> h(s.size(), 0.0);
    return uncmap::assemble_score_map(g, std::move(s), std::move(h), tau);
}

}  // namespace oracle
