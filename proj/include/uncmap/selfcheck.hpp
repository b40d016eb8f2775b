#pragma once

// Finite-difference spot checks of every analytic loss gradient on small
// seeded instances. Instances whose perturbation could cross a kink of a
// piecewise loss (abs, hinge, nearest-neighbour switch) are redrawn.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uncmap/lane.hpp"
#include "uncmap/losses.hpp"
#include "uncmap/planner.hpp"
#include "uncmap/rng.hpp"
#include "uncmap/uncertainty.hpp"

namespace uncmap {

struct GradientCheck {
    std::string name;
    double max_rel_error{0.0};
    int instances{0};
    bool pass{true};
};

inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdTolerance = 1e-5;

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(std::max(na, nb));
    return den == 0.0 ? 0.0 : std::sqrt(num) / den;
}

/// Central differences of f around x, one coordinate at a time.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = kFdStep) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double dn = f(x);
        x[i] = x0;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

namespace detail {

/// Deterministic uniform draws for instance construction.
class Draw {
public:
    Draw(std::uint64_t seed, std::uint64_t tag) : seed_(seed), tag_(tag) {}
    double operator()(double lo, double hi) { return rng::uniform(lo, hi, seed_, rng::Stream::selfcheck, tag_, n_++); }
    int index(int n) { return std::min(n - 1, static_cast<int>((*this)(0.0, 1.0) * n)); }

private:
    std::uint64_t seed_;
    std::uint64_t tag_;
    std::uint64_t n_{0};
};

inline GridSpec tiny_grid(int h, int w) {
    GridSpec g;
    g.height = h;
    g.width = w;
    g.resolution = 0.5;
    g.origin = {0.0, 0.0};
    return g;
}

inline SemanticGrid random_labels(const GridSpec& g, int k, Draw& d) {
    std::vector<std::uint8_t> lab(g.cells());
    for (auto& l : lab) l = static_cast<std::uint8_t>(d.index(k));
    return SemanticGrid(g, k, std::move(lab));
}

inline ProbabilityField random_simplex(const GridSpec& g, int k, Draw& d) {
    ProbabilityField p{g, k, std::vector<double>(g.cells() * k)};
    for (std::size_t i = 0; i < g.cells(); ++i) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) s += (p.values[i * k + c] = d(0.1, 1.0));
        for (int c = 0; c < k; ++c) p.values[i * k + c] /= s;
    }
    return p;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

inline bool far_from(std::span<const double> v, double gap) {
    for (double x : v)
        if (std::abs(x) < gap) return false;
    return true;
}

}  // namespace detail

/// One instance per loss family; returns false from `make` to request a redraw.
inline GradientCheck check_gradient(const std::string& name, int instances, std::uint64_t seed,
                                    const std::function<bool(detail::Draw&, std::vector<double>&, std::vector<double>&)>& run) {
    GradientCheck out{name, 0.0, 0, true};
    std::uint64_t tag = 0;
    for (int done = 0; done < instances; ++tag) {
        detail::Draw d(seed, detail::fnv1a(name) ^ (tag * 0x9E3779B97F4A7C15ULL));
        std::vector<double> analytic, numeric;
        if (!run(d, analytic, numeric)) continue;
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic, numeric));
        ++done;
    }
    out.instances = instances;
    out.pass = out.max_rel_error <= kFdTolerance;
    return out;
}

inline GradientCheck check_perception(int instances, std::uint64_t seed) {
    return check_gradient("perc", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const auto g = detail::tiny_grid(2, 3);
        const int k = 3;
        std::vector<double> mu(g.cells() * k), ls(g.cells() * k);
        for (auto& m : mu) m = d(-2.0, 2.0);
        for (auto& s : ls) s = d(-1.5, 0.5);
        const auto target = detail::random_labels(g, k, d);
        const McConfig cfg{8, static_cast<std::uint64_t>(d(0.0, 1e6))};
        const auto loss = perception_loss(LogitField(g, k, mu, ls), target, cfg);
        a = loss.grad_mu;
        a.insert(a.end(), loss.grad_log_sigma.begin(), loss.grad_log_sigma.end());
        std::vector<double> x = mu;
        x.insert(x.end(), ls.begin(), ls.end());
        const std::size_t n = mu.size();
        fd = central_difference(
            [&](const std::vector<double>& v) {
                std::vector<double> m(v.begin(), v.begin() + n), s(v.begin() + n, v.end());
                return perception_loss(LogitField(g, k, m, s), target, cfg).value;
            },
            x);
        return true;
    });
}

inline GradientCheck check_focal(int instances, std::uint64_t seed) {
    return check_gradient("focal", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const auto g = detail::tiny_grid(2, 3);
        auto p = detail::random_simplex(g, 3, d);
        const auto target = detail::random_labels(g, 3, d);
        a = focal_loss(p, target).grad;
        fd = central_difference(
            [&](const std::vector<double>& v) {
                return focal_loss(ProbabilityField{g, 3, v}, target).value;
            },
            p.values);
        return true;
    });
}

inline GradientCheck check_dice(int instances, std::uint64_t seed) {
    return check_gradient("dice", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const auto g = detail::tiny_grid(2, 3);
        auto p = detail::random_simplex(g, 3, d);
        const auto target = detail::random_labels(g, 3, d);
        a = dice_loss(p, target).grad;
        fd = central_difference(
            [&](const std::vector<double>& v) {
                return dice_loss(ProbabilityField{g, 3, v}, target).value;
            },
            p.values);
        return true;
    });
}

inline GradientCheck check_classification(int instances, std::uint64_t seed) {
    return check_gradient("cls", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const int n = 2 + d.index(6);
        std::vector<double> logits(n);
        for (auto& l : logits) l = d(-3.0, 3.0);
        std::vector<bool> eligible(n);
        for (int i = 0; i < n; ++i) eligible[i] = d(0.0, 1.0) < 0.75;
        const auto target = static_cast<std::size_t>(d.index(n));
        eligible[target] = true;
        a = classification_loss(logits, eligible, target).grad;
        fd = central_difference(
            [&](const std::vector<double>& v) { return classification_loss(v, eligible, target).value; }, logits);
        return true;
    });
}

inline GradientCheck check_trajectory(int instances, std::uint64_t seed) {
    return check_gradient("traj", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const int n = 2 + d.index(8);
        std::vector<Vec2> p(n), e(n);
        for (int i = 0; i < n; ++i) {
            p[i] = {d(-5.0, 5.0), d(-5.0, 5.0)};
            e[i] = {d(-5.0, 5.0), d(-5.0, 5.0)};
        }
        const auto expert = Trajectory::uniform(e, 0.5);
        std::vector<double> x;
        for (auto v : p) {
            x.push_back(v.x);
            x.push_back(v.y);
        }
        std::vector<double> diff;
        for (int i = 0; i < n; ++i) {
            diff.push_back(p[i].x - e[i].x);
            diff.push_back(p[i].y - e[i].y);
        }
        if (!detail::far_from(diff, 1e-3)) return false;
        auto unpack = [&](const std::vector<double>& v) {
            std::vector<Vec2> q(n);
            for (int i = 0; i < n; ++i) q[i] = {v[2 * i], v[2 * i + 1]};
            return Trajectory::uniform(q, 0.5);
        };
        a = trajectory_loss(unpack(x), expert).grad;
        fd = central_difference([&](const std::vector<double>& v) { return trajectory_loss(unpack(v), expert).value; },
                                x);
        return true;
    });
}

inline GradientCheck check_ranking(int instances, std::uint64_t seed) {
    return check_gradient("rank", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const int n = 2 + d.index(7);
        std::vector<double> s(n), dist(n);
        for (int i = 0; i < n; ++i) {
            s[i] = d(-1.0, 1.0);
            dist[i] = d(0.0, 5.0);
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (dist[i] < dist[j] && std::abs(kDefaultRankMargin - (s[i] - s[j])) < 1e-3) return false;
        a = ranking_loss(s, dist).grad;
        fd = central_difference([&](const std::vector<double>& v) { return ranking_loss(v, dist).value; }, s);
        return true;
    });
}

inline GradientCheck check_intent(int instances, std::uint64_t seed) {
    return check_gradient("intent", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const int n = 1 + d.index(10);
        const int ne = 1 + d.index(10);
        std::vector<double> m(n), gt(ne);
        for (auto& v : m) v = d(0.0, 1.0);
        for (auto& v : gt) v = d(0.0, 1.0) < 0.5 ? 0.0 : 1.0;
        Matching pi(n);
        for (auto& j : pi) j = static_cast<std::size_t>(d.index(ne));
        std::vector<double> diff(n);
        for (int t = 0; t < n; ++t) diff[t] = m[t] - gt[pi[t]];
        if (!detail::far_from(diff, 1e-3)) return false;
        a = intent_loss(m, gt, pi).grad;
        fd = central_difference([&](const std::vector<double>& v) { return intent_loss(v, gt, pi).value; }, m);
        return true;
    });
}

inline GradientCheck check_centerline(int instances, std::uint64_t seed) {
    return check_gradient("center", instances, seed, [](detail::Draw& d, auto& a, auto& fd) {
        const auto g = detail::tiny_grid(8, 8);
        std::vector<std::uint8_t> lab(g.cells(), 0);
        const int count = 1 + d.index(6);
        for (int i = 0; i < count; ++i) lab[d.index(static_cast<int>(g.cells()))] = 1;
        const auto tax = ClassTaxonomy::standard();
        const SemanticGrid grid(g, 3, lab);
        const CenterlineField field(grid, tax);
        const int n = 1 + d.index(8);
        std::vector<Vec2> p(n);
        for (auto& v : p) v = {d(0.2, 3.8), d(0.2, 3.8)};
        const auto expert = Trajectory::uniform(p, 0.5);
        std::vector<bool> active(n);
        for (int t = 0; t < n; ++t) active[t] = d(0.0, 1.0) < 0.7;
        // Reject near-ties and near-zero distances: the nearest pixel must
        // be unique by a clear margin.
        for (auto v : p) {
            const auto px = project_to_grid(v, g);
            std::vector<double> ds;
            for (int r = 0; r < g.height; ++r)
                for (int c = 0; c < g.width; ++c)
                    if (lab[g.index(r, c)] == 1) ds.push_back(std::hypot(px.row - (r + 0.5), px.col - (c + 0.5)));
            std::sort(ds.begin(), ds.end());
            if (ds.front() < 1e-2) return false;
            if (ds.size() > 1 && ds[1] - ds[0] < 1e-2) return false;
        }
        std::vector<double> x;
        for (auto v : p) {
            x.push_back(v.x);
            x.push_back(v.y);
        }
        auto unpack = [&](const std::vector<double>& v) {
            std::vector<Vec2> q(n);
            for (int i = 0; i < n; ++i) q[i] = {v[2 * i], v[2 * i + 1]};
            return Trajectory::uniform(q, 0.5);
        };
        a = centerline_loss(expert, active, field).grad;
        fd = central_difference(
            [&](const std::vector<double>& v) { return centerline_loss(unpack(v), active, field).value; }, x);
        return true;
    });
}

/// All eight families, in the order perc, focal, dice, cls, traj, rank,
/// intent, center.
inline std::vector<GradientCheck> run_gradient_checks(int instances, std::uint64_t seed) {
    return {check_perception(instances, seed), check_focal(instances, seed),      check_dice(instances, seed),
            check_classification(instances, seed), check_trajectory(instances, seed), check_ranking(instances, seed),
            check_intent(instances, seed),        check_centerline(instances, seed)};
}

}  // namespace uncmap
