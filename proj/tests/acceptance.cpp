// Acceptance run: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "support/oracles.hpp"

using namespace uncmap;
namespace fs = std::filesystem;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Collects failed checks and free-form measurements for one criterion.
class Outcome {
public:
    void check(bool ok, const std::string& what) {
        if (!ok) failures_.push_back(what);
    }
    void note(const std::string& s) { notes_.push_back(s); }
    bool ok() const { return failures_.empty(); }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// ---- A1 ------------------------------------------------------------------------

void formula_suite(Outcome& out) {
    out.check(binary_entropy(0.5) == 1.0, "H(0.5) = 1");
    out.check(binary_entropy(0.0) == 0.0 && binary_entropy(1.0) == 0.0, "H endpoints");
    out.check(std::abs(binary_entropy(0.25) - oracle::entropy_bits(0.25)) < 1e-15, "H(0.25)");
    for (double p : {0.0, 0.2, 0.7, 1.0}) {
        out.check(safety(p, 1.0) == 0.5, "fully uncertain safety is neutral");
        out.check(safety(p, 0.0) == p, "certain safety equals p_pos");
    }
    out.check(std::abs(safety(0.9, binary_entropy(0.9)) - oracle::safety(0.9, oracle::entropy_bits(0.9))) < 1e-15,
              "safety of a confident pixel");

    const auto g1 = oracle::small_grid(1, 1);
    const ClassTaxonomy t3(3, {0, 2}, 1);
    out.check(std::abs(group_probability(ProbabilityField{g1, 3, {0.1, 0.3, 0.6}}, t3)[0] - 0.7) < 1e-15,
              "drivable mass");
    const auto equal = LogitField::uniform(g1, std::vector<double>{0.3, 0.3}, std::vector<double>{kNegInf, kNegInf});
    out.check(expected_probabilities(equal, {64, 3}).values[0] == 0.5, "equal deterministic two-class logits give 0.5");

    std::mt19937_64 rng(2024);
    const auto g = oracle::small_grid(6, 6);
    for (int k : {2, 3, 5}) {
        const auto r = oracle::random_field(rng, g, k);
        const LogitField f(g, k, std::vector<double>(r.mu().begin(), r.mu().end()),
                           std::vector<double>(r.mu().size(), kNegInf));
        const auto det = deterministic_probabilities(f);
        for (int T : {1, 7, 64})
            out.check(expected_probabilities(f, {T, static_cast<std::uint64_t>(T)}).values == det.values,
                      "sigma = 0 expectation is the softmax");
        const auto y = oracle::random_labels(rng, g, k);
        const auto l = perception_loss(f, y, {16, 5});
        double worst = 0.0;
        for (std::size_t p = 0; p < g.cells(); ++p) {
            out.check(l.per_pixel[p] == -std::log(det.values[p * k + y.labels()[p]]),
                      "sigma = 0 loss is the cross-entropy");
            long double mx = -1e300L, s = 0;
            for (int c = 0; c < k; ++c) mx = std::max<long double>(mx, f.mu(p)[c]);
            for (int c = 0; c < k; ++c) s += std::exp(static_cast<long double>(f.mu(p)[c]) - mx);
            const double ce = static_cast<double>(std::log(s) + mx - f.mu(p)[y.labels()[p]]);
            worst = std::max(worst, std::abs(l.per_pixel[p] - ce));
        }
        out.check(worst < 1e-13, "sigma = 0 loss matches an independent log-sum-exp");
    }

    constexpr int T = 200000;
    const auto f = LogitField::uniform(g1, std::vector<double>{1.0, 0.0}, std::vector<double>{std::log(2.0), kNegInf});
    const double pbar = expected_probabilities(f, {T, 11}).values[0];
    auto logistic = [](double d) { return 1.0 / (1.0 + std::exp(-d)); };
    const double m1 = oracle::normal_expectation(logistic, 1.0, 2.0, 128);
    const double m2 = oracle::normal_expectation([&](double d) { return logistic(d) * logistic(d); }, 1.0, 2.0, 128);
    const double se = std::sqrt((m2 - m1 * m1) / T);
    out.check(std::abs(pbar - m1) < 3.0 * se, "Monte-Carlo mean within 3 standard errors of quadrature");
    out.note(fmt("pbar %.6f", pbar) + fmt(" quadrature %.6f", m1) + fmt(" |diff|/se %.2f", std::abs(pbar - m1) / se));

    auto set = CandidateSet::from({Trajectory::uniform({{0, 0}, {1, 0}}, 0.5), Trajectory::uniform({{0, 0}, {1, 1}}, 0.5)},
                                  {0.5, 0.5});
    set.min_safety = {0.9, 0.4};
    set.h_at_min = {0.0, 0.0};
    set.discarded = {false, false};
    finalize_weights(set, 4.0);
    out.check(std::abs(set.posterior_weights[0] - logistic(2.0)) < 1e-15, "posterior weighting example");
}

// ---- A2 ------------------------------------------------------------------------

void gradient_suite(Outcome& out) {
    const auto checks = run_gradient_checks(100, 20240917);
    std::string line;
    for (const auto& c : checks) {
        out.check(c.pass && c.instances == 100, c.name + " gradient");
        line += c.name + fmt(" %.1e ", c.max_rel_error);
    }
    out.note("max rel err: " + line);
}

// ---- A3 ------------------------------------------------------------------------

void avoidance_trend(Outcome& out) {
    constexpr std::size_t n = 50;
    PipelineOptions on, off;
    on.lane_reg = off.lane_reg = false;
    off.uncertainty = false;
    std::vector<double> dac_on(n), dac_off(n), h_on(n), h_off(n);
    parallel_for(n, [&](std::size_t i) {
        const auto spec = avoidance_scenario(i);
        const auto run_on = run_scenario(spec, on);
        const auto run_off = run_scenario(spec, off);
        const auto m_on = measure(run_on, on);
        const auto m_off = measure(run_off, off);
        dac_on[i] = m_on.dac;
        dac_off[i] = m_off.dac;
        h_on[i] = min_safety(run_on.candidates.candidates[m_on.chosen], run_on.map).h_at_min;
        h_off[i] = min_safety(run_off.candidates.candidates[m_off.chosen], run_on.map).h_at_min;
    });
    std::size_t wins = 0, losses = 0;
    for (std::size_t i = 0; i < n; ++i) {
        wins += dac_on[i] > dac_off[i] ? 1 : 0;
        losses += dac_on[i] < dac_off[i] ? 1 : 0;
    }
    const double p = sign_test_p(wins, losses);
    const auto a = mean_std(dac_on), b = mean_std(dac_off), ha = mean_std(h_on), hb = mean_std(h_off);
    out.check(a.mean > b.mean, "mean DAC-like ON > OFF");
    out.check(p < 0.01, "sign test p < 0.01");
    out.check(ha.mean < hb.mean, "mean h at the minimum ON < OFF");
    out.note(fmt("DAC on %.4f off %.4f", a.mean, b.mean) + " wins " + std::to_string(wins) + " losses " +
             std::to_string(losses) + fmt(" p %.2e", p) + fmt(" h on %.4f off %.4f", ha.mean, hb.mean));
}

// ---- A4 ------------------------------------------------------------------------

void lane_trend(Outcome& out) {
    constexpr std::size_t n = 50;
    PipelineOptions on, off;
    on.lane_reg = true;
    off.lane_reg = false;
    std::vector<double> lk_on(n), lk_off(n);
    parallel_for(n, [&](std::size_t i) {
        const auto spec = lane_keeping_scenario(i);
        lk_on[i] = measure(run_scenario(spec, on), on).lk;
        lk_off[i] = measure(run_scenario(spec, off), off).lk;
    });
    std::size_t wins = 0, losses = 0;
    for (std::size_t i = 0; i < n; ++i) {
        wins += lk_on[i] > lk_off[i] ? 1 : 0;
        losses += lk_on[i] < lk_off[i] ? 1 : 0;
    }
    const double p = sign_test_p(wins, losses);
    const auto a = mean_std(lk_on), b = mean_std(lk_off);
    out.check(a.mean > b.mean, "mean LK-like ON > OFF");
    out.check(p < 0.01, "sign test p < 0.01");

    // Legitimate deviation: moving intent-0 points never changes the centerline term.
    std::size_t inactive_seen = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ScenarioSpec sc;
        sc.road = RoadTemplate::lane_change;
        sc.seed = seed;
        sc.noise_level = 0.5;
        sc.lane_change_start = 3.0 + seed * 0.5;
        const auto run = run_scenario(sc, on);
        for (const auto& pred : run.candidates.candidates) {
            const auto pi = match_nearest(pred, run.expert.trajectory);
            const auto active = active_points(run.expert.intent, pi);
            const auto base = centerline_loss(pred, active, run.centerlines);
            auto moved = pred.points();
            for (std::size_t t = 0; t < moved.size(); ++t) {
                if (active[t]) continue;
                ++inactive_seen;
                out.check(base.grad[2 * t] == 0.0 && base.grad[2 * t + 1] == 0.0, "intent-0 gradient is zero");
                moved[t].y += 0.75;
            }
            const auto shifted = centerline_loss(pred.with_points(moved), active, run.centerlines);
            out.check(shifted.value == base.value, "intent-0 points carry no centerline penalty");
        }
        const auto self = centerline_loss(run.expert.trajectory,
                                          active_points(run.expert.intent, match_nearest(run.expert.trajectory,
                                                                                         run.expert.trajectory)),
                                          run.centerlines);
        out.check(std::isfinite(self.value), "expert centerline term is finite");
    }
    out.check(inactive_seen > 0, "lane-change templates exercise intent-0 points");
    out.note(fmt("LK on %.4f off %.4f", a.mean, b.mean) + " wins " + std::to_string(wins) + " losses " +
             std::to_string(losses) + fmt(" p %.2e", p) + " intent-0 points " + std::to_string(inactive_seen));
}

// ---- A5 ------------------------------------------------------------------------

void oracle_equivalence(Outcome& out) {
    std::mt19937_64 rng(555);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> cell(0, 7);
    double worst_safety = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const auto g = oracle::small_grid(8, 8, 0.5);
        std::vector<double> s(g.cells());
        for (auto& v : s) v = rep % 2 ? u(rng) : 0.3 + 0.7 * u(rng);
        const auto map = oracle::map_from_safety(g, s);
        std::vector<Vec2> pts;
        int r = cell(rng), c = cell(rng);
        pts.push_back({(r + 0.5) * 0.5, (c + 0.5) * 0.5});
        for (int seg = 0; seg < 4; ++seg) {
            int nr = r, nc = c;
            while (nr == r && nc == c) (seg % 2 ? nr : nc) = cell(rng);
            r = nr;
            c = nc;
            pts.push_back({(r + 0.5) * 0.5, (c + 0.5) * 0.5});
        }
        const auto tr = Trajectory::uniform(pts, 0.5);
        const auto mine = min_safety(tr, map);
        const auto ref = oracle::dense_min_safety(pts, map, 0.0125);
        out.check(mine.discarded == ref.discarded, "min_safety discard flag");
        worst_safety = std::max(worst_safety, std::abs(mine.score - ref.score));
    }
    out.check(worst_safety < 1e-6, "min_safety within 1e-6 of the dense oracle");

    std::uniform_real_distribution<double> pos(-20.0, 20.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Vec2> p(1 + rep % 64), e(1 + (rep * 7) % 64);
        for (auto& v : p) v = {pos(rng), pos(rng)};
        for (auto& v : e) v = {pos(rng), pos(rng)};
        out.check(match_nearest(Trajectory::uniform(p, 0.1), Trajectory::uniform(e, 0.1)) == oracle::brute_match(p, e),
                  "match_nearest equals exhaustive search");
    }

    double worst_center = 0.0;
    const auto tax = ClassTaxonomy::standard();
    std::uniform_real_distribution<double> q(-3.0, 35.0);
    for (int rep = 0; rep < 20; ++rep) {
        auto labels = oracle::random_labels(rng, oracle::small_grid(32, 32, 0.5), 3);
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                if (labels.at(r, c) == 1 && u(rng) < 0.9) labels.set(r, c, 0);
        const CenterlineField field(labels, tax);
        for (int k = 0; k < 500; ++k) {
            const double r = q(rng), c = q(rng);
            worst_center = std::max(worst_center, std::abs(field.nearest_pixel(r, c).distance -
                                                           oracle::brute_center_distance(labels, 1, r, c)));
        }
    }
    out.check(worst_center < 1e-9, "centerline distances within 1e-9 pixels");

    std::size_t mismatches = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const auto g = oracle::small_grid(5, 6);
        const auto f = oracle::random_field(rng, g, 3);
        const McConfig cfg{16, static_cast<std::uint64_t>(rep)};
        const auto map = build_score_map(f, tax, cfg, 0.3);
        const auto z = sample_logits(f, cfg);
        for (std::size_t p = 0; p < g.cells(); ++p) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int t = 0; t < cfg.num_samples; ++t) {
                const double* zp = &z[(t * g.cells() + p) * 3];
                const double mx = std::max({zp[0], zp[1], zp[2]});
                double e[3], s = 0.0;
                for (int c = 0; c < 3; ++c) s += (e[c] = std::exp(zp[c] - mx));
                for (int c = 0; c < 3; ++c) acc[c] += e[c] / s;
            }
            for (double& a : acc) a /= cfg.num_samples;
            const double pp = std::clamp(acc[0] + acc[1], 0.0, 1.0);
            const double h = binary_entropy(pp);
            mismatches += map.p_pos[p] != pp || map.h_group[p] != h || map.s_safe[p] != safety(pp, h) ||
                                  map.nondrivable[p] != (pp < 0.3 ? 1 : 0)
                              ? 1
                              : 0;
        }
    }
    out.check(mismatches == 0, "score map equals the chained pixelwise oracle");
    out.note(fmt("min_safety max err %.1e", worst_safety) + fmt(" centerline max err %.1e", worst_center));
}

// ---- A6 ------------------------------------------------------------------------

void calibration(Outcome& out) {
    const std::vector<double> exact{1, 0, 0, 1, 1};
    out.check(expected_calibration_error(exact, {true, false, false, true, true}).ece == 0.0, "oracle map ECE 0");
    std::vector<bool> coin(50);
    for (std::size_t i = 0; i < coin.size(); ++i) coin[i] = i % 2 == 0;
    out.check(expected_calibration_error(std::vector<double>(50, 0.5), coin).ece == 0.0, "constant 0.5 ECE 0");
    const std::vector<double> p{0.9, 0.8, 0.3, 0.6};
    const std::vector<bool> t{true, false, false, true};
    out.check(std::abs(expected_calibration_error(p, t, 2).ece - 0.0) < 1e-12, "two-bin fixture");
    out.check(std::abs(expected_calibration_error(p, t, 10).ece - 0.4) < 1e-12, "ten-bin fixture");

    const PipelineOptions opt;
    ScenarioSpec clean;
    auto boosted = clean;
    boosted.ambiguity.push_back({{16.0, 0.0}, 1000.0, 2.0});
    auto ece_of = [&](const ScenarioSpec& sc, ConfidenceSource src) {
        const auto scene = generate_scene(sc, opt.grid, opt.taxonomy);
        const auto map = build_score_map(scene.field, opt.taxonomy, opt.map_mc, opt.tau_drive);
        return expected_calibration_error(map, scene.truth.drivable_mask(opt.taxonomy), opt.ece_bins, src).ece;
    };
    const double pc = ece_of(clean, ConfidenceSource::drivable_probability);
    const double pb = ece_of(boosted, ConfidenceSource::drivable_probability);
    const double sc = ece_of(clean, ConfidenceSource::safety_score);
    const double sb = ece_of(boosted, ConfidenceSource::safety_score);
    out.check(pc < pb, "p_pos ECE clean < boosted");
    out.note(fmt("ECE(p_pos) clean %.5f boosted %.5f", pc, pb) + fmt(" ECE(s_safe) clean %.5f boosted %.5f", sc, sb));
}

// ---- A7 ------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return files;
}

void determinism(Outcome& out) {
    const fs::path root = fs::temp_directory_path() / "uncmap_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    {
        std::ofstream cfg(root / "run.json");
        cfg << R"({"scenario": "scene.json", "mc": {"map_samples": 64, "loss_samples": 16, "seed": 9},)"
            << R"( "lane_reg": true, "gradient_check_instances": 3})";
        std::ofstream scene(root / "scene.json");
        scene << R"({"seed": 5, "road": "fork", "noise_level": 0.6,)"
              << R"( "ambiguity": [{"center": [20.0, 1.0], "radius": 3.0, "sigma_boost": 2.0}],)"
              << R"( "agents": [{"center": [22.0, 3.0], "half_extent": [2.0, 1.0], "occluded": true}]})";
    }
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"gen", ""}, {"scoremap", ""}, {"plan", ""}, {"eval", " --suite avoidance --seeds 4"}, {"losses", ""}};
    std::size_t files = 0;
    for (const auto& [verb, extra] : runs) {
        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            const auto dir = root / (verb + "_" + std::to_string(pass));
            const std::string cmd = std::string(UNCMAP_CLI_PATH) + " " + verb + " --config " + (root / "run.json").string() +
                                    " --out " + dir.string() + extra + " 2>/dev/null";
            const int rc = std::system(cmd.c_str());
            out.check(rc == 0, verb + " exits 0");
            const auto snap = snapshot(dir);
            out.check(!snap.empty(), verb + " writes artifacts");
            if (pass == 0) first = snap;
            else out.check(snap == first, verb + " artifacts are byte-identical");
            files += pass == 0 ? snap.size() : 0;
        }
    }
    fs::remove_all(root);
    out.note(std::to_string(runs.size()) + " commands, " + std::to_string(files) + " artifacts compared");
}

struct Criterion {
    const char* id;
    const char* title;
    double budget_s;
    std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"A1", "formula suite", 30.0, formula_suite},
        {"A2", "gradient suite", 120.0, gradient_suite},
        {"A3", "uncertainty-avoidance trend", 300.0, avoidance_trend},
        {"A4", "lane-regularization trend", 300.0, lane_trend},
        {"A5", "oracle equivalence", 60.0, oracle_equivalence},
        {"A6", "calibration machinery", 30.0, calibration},
        {"A7", "determinism", 60.0, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome out;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(out);
        } catch (const std::exception& e) {
            out.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.check(secs < c.budget_s, fmt("runtime under %.0f s", c.budget_s));
        std::string detail;
        for (const auto& n : out.notes()) detail += (detail.empty() ? "" : "; ") + n;
        for (const auto& f : out.failures()) detail += (detail.empty() ? "FAILED: " : "; FAILED: ") + f;
        std::printf("%s %s  %-30s %7.2f s  %s\n", c.id, out.ok() ? "PASS" : "FAIL", c.title, secs, detail.c_str());
        std::fflush(stdout);
        failed += out.ok() ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
