#pragma once

// Per-pixel Gaussian logits -> Monte-Carlo expected class probabilities ->
// drivable-group probability, group entropy and safety score.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

#include "uncmap/common.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/rng.hpp"

namespace uncmap {

inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 3.0;
inline constexpr int kLossSamples = 32;
inline constexpr int kMapSamples = 128;
inline constexpr double kDefaultTauDrive = 0.3;

struct McConfig {
    int num_samples{kMapSamples};
    std::uint64_t seed{0};

    void validate() const {
        if (num_samples < 1) throw ConfigError("Monte-Carlo sample count must be >= 1");
    }
};

/// Gaussian logits per pixel and class, stored pixel-major: [pixel][class].
///
/// log_sigma entries are clamped to [kLogSigmaMin, kLogSigmaMax]. The value
/// -infinity is kept as-is and means sigma = 0 exactly (a degenerate
/// Gaussian); NaN and +infinity are rejected.
class LogitField {
public:
    LogitField(GridSpec spec, int num_classes, std::vector<double> mu, std::vector<double> log_sigma)
        : spec_(spec), k_(num_classes), mu_(std::move(mu)), log_sigma_(std::move(log_sigma)) {
        spec_.validate();
        if (k_ < 2) throw ConfigError("logit field needs at least two classes");
        const std::size_t n = spec_.cells() * static_cast<std::size_t>(k_);
        if (mu_.size() != n || log_sigma_.size() != n) throw DataError("logit field size mismatch");
        for (double m : mu_)
            if (!std::isfinite(m)) throw DataError("non-finite logit mean");
        for (double& ls : log_sigma_) {
            if (std::isnan(ls) || ls == std::numeric_limits<double>::infinity())
                throw DataError("invalid log sigma");
            if (ls != -std::numeric_limits<double>::infinity())
                ls = std::clamp(ls, kLogSigmaMin, kLogSigmaMax);
        }
    }

    /// Constant field: every pixel gets the same mean and log sigma vectors.
    static LogitField uniform(GridSpec spec, std::span<const double> mu, std::span<const double> log_sigma) {
        if (mu.size() != log_sigma.size()) throw DataError("mu / log sigma length mismatch");
        std::vector<double> m, s;
        m.reserve(spec.cells() * mu.size());
        s.reserve(spec.cells() * mu.size());
        for (std::size_t p = 0; p < spec.cells(); ++p) {
            m.insert(m.end(), mu.begin(), mu.end());
            s.insert(s.end(), log_sigma.begin(), log_sigma.end());
        }
        return LogitField(spec, static_cast<int>(mu.size()), std::move(m), std::move(s));
    }

    const GridSpec& spec() const { return spec_; }
    int num_classes() const { return k_; }
    std::size_t pixels() const { return spec_.cells(); }
    std::span<const double> mu() const { return mu_; }
    std::span<const double> log_sigma() const { return log_sigma_; }
    std::span<const double> mu(std::size_t pixel) const { return std::span(mu_).subspan(pixel * k_, k_); }
    std::span<const double> log_sigma(std::size_t pixel) const {
        return std::span(log_sigma_).subspan(pixel * k_, k_);
    }

    /// True when every class of the pixel has sigma = 0.
    bool degenerate(std::size_t pixel) const {
        for (double ls : log_sigma(pixel))
            if (ls != -std::numeric_limits<double>::infinity()) return false;
        return true;
    }

    static double sigma_of(double log_sigma) {
        return log_sigma == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(log_sigma);
    }

    friend bool operator==(const LogitField&, const LogitField&) = default;

private:
    GridSpec spec_;
    int k_;
    std::vector<double> mu_;
    std::vector<double> log_sigma_;
};

/// Standard-normal noise for (pixel, sample, class). Classes 2j and 2j+1
/// share one Box-Muller draw.
inline double epsilon(std::uint64_t seed, std::size_t pixel, int sample, int cls) {
    const auto pair = rng::normal_pair(seed, rng::Stream::logit_noise, pixel,
                                       static_cast<std::uint64_t>(sample), static_cast<std::uint64_t>(cls / 2));
    return (cls % 2 == 0) ? pair.first : pair.second;
}

/// Stable softmax: max-subtraction, exp, sum in class order, divide.
inline void softmax(std::span<const double> z, std::span<double> out) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        out[k] = std::exp(z[k] - mx);
        sum += out[k];
    }
    for (std::size_t k = 0; k < z.size(); ++k) out[k] /= sum;
}

/// One reparameterized draw for a pixel: z = mu + sigma * eps.
inline void sample_pixel(const LogitField& f, std::size_t pixel, int sample, std::uint64_t seed,
                         std::span<double> out) {
    const auto mu = f.mu(pixel);
    const auto ls = f.log_sigma(pixel);
    for (int k = 0; k < f.num_classes(); ++k) {
        const double s = LogitField::sigma_of(ls[k]);
        out[k] = (s == 0.0) ? mu[k] : mu[k] + s * epsilon(seed, pixel, sample, k);
    }
}

/// All T samples, laid out [sample][pixel][class].
inline std::vector<double> sample_logits(const LogitField& f, const McConfig& cfg) {
    cfg.validate();
    const std::size_t k = f.num_classes();
    const std::size_t plane = f.pixels() * k;
    std::vector<double> out(plane * cfg.num_samples);
    parallel_for(f.pixels(), [&](std::size_t p) {
        for (int t = 0; t < cfg.num_samples; ++t)
            sample_pixel(f, p, t, cfg.seed, std::span(out).subspan(t * plane + p * k, k));
    });
    return out;
}

/// Class probabilities per pixel, [pixel][class].
struct ProbabilityField {
    GridSpec spec;
    int num_classes{0};
    std::vector<double> values;

    std::span<const double> at(std::size_t pixel) const {
        return std::span(values).subspan(pixel * num_classes, num_classes);
    }
};

/// p_bar for one pixel: accumulate softmax of each sample in sample order,
/// then divide by T. A pixel with sigma = 0 on every class is softmax(mu).
inline void expected_pixel(const LogitField& f, std::size_t pixel, const McConfig& cfg, std::span<double> out) {
    if (f.degenerate(pixel)) {
        softmax(f.mu(pixel), out);
        return;
    }
    const int k = f.num_classes();
    std::vector<double> z(k), s(k);
    std::fill(out.begin(), out.end(), 0.0);
    for (int t = 0; t < cfg.num_samples; ++t) {
        sample_pixel(f, pixel, t, cfg.seed, z);
        softmax(z, s);
        for (int c = 0; c < k; ++c) out[c] += s[c];
    }
    for (int c = 0; c < k; ++c) out[c] /= cfg.num_samples;
}

inline ProbabilityField expected_probabilities(const LogitField& f, const McConfig& cfg) {
    cfg.validate();
    ProbabilityField pf{f.spec(), f.num_classes(), std::vector<double>(f.mu().size())};
    parallel_for(f.pixels(), [&](std::size_t p) {
        expected_pixel(f, p, cfg, std::span(pf.values).subspan(p * f.num_classes(), f.num_classes()));
    });
    return pf;
}

/// softmax(mu) per pixel, ignoring sigma.
inline ProbabilityField deterministic_probabilities(const LogitField& f) {
    ProbabilityField pf{f.spec(), f.num_classes(), std::vector<double>(f.mu().size())};
    parallel_for(f.pixels(), [&](std::size_t p) {
        softmax(f.mu(p), std::span(pf.values).subspan(p * f.num_classes(), f.num_classes()));
    });
    return pf;
}

/// Drivable-group mass of one probability vector, summed in class order.
inline double group_mass(std::span<const double> probs, const ClassTaxonomy& tax) {
    double s = 0.0;
    for (int c : tax.drivable_set()) s += probs[c];
    return std::clamp(s, 0.0, 1.0);
}

inline std::vector<double> group_probability(const ProbabilityField& pbar, const ClassTaxonomy& tax) {
    if (pbar.num_classes != tax.num_classes())
        throw ConfigError("taxonomy has " + std::to_string(tax.num_classes()) + " classes, probabilities have " +
                          std::to_string(pbar.num_classes));
    std::vector<double> out(pbar.spec.cells());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = group_mass(pbar.at(p), tax);
    return out;
}

/// Binary entropy in bits; exactly 0 at p in {0, 1}.
inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    const double h = -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
    return std::clamp(h, 0.0, 1.0);
}

inline std::vector<double> group_entropy(std::span<const double> p_pos) {
    std::vector<double> out(p_pos.size());
    for (std::size_t i = 0; i < p_pos.size(); ++i) out[i] = binary_entropy(p_pos[i]);
    return out;
}

inline double safety(double p_pos, double h_group) { return p_pos * (1.0 - h_group) + 0.5 * h_group; }

inline std::vector<double> safety_score(std::span<const double> p_pos, std::span<const double> h_group) {
    if (p_pos.size() != h_group.size()) throw DataError("p_pos / h_group size mismatch");
    std::vector<double> out(p_pos.size());
    for (std::size_t i = 0; i < p_pos.size(); ++i) out[i] = safety(p_pos[i], h_group[i]);
    return out;
}

struct DrivableScoreMap {
    GridSpec spec;
    std::vector<double> p_pos;
    std::vector<double> h_group;
    std::vector<double> s_safe;
    std::vector<std::uint8_t> nondrivable;  // 1 where p_pos < tau_drive

    bool masked(int row, int col) const { return nondrivable[spec.index(row, col)] != 0; }
};

inline DrivableScoreMap assemble_score_map(const GridSpec& spec, std::vector<double> p_pos,
                                           std::vector<double> h_group, double tau_drive) {
    DrivableScoreMap m;
    m.spec = spec;
    m.s_safe = safety_score(p_pos, h_group);
    m.nondrivable.resize(p_pos.size());
    for (std::size_t i = 0; i < p_pos.size(); ++i) m.nondrivable[i] = p_pos[i] < tau_drive ? 1 : 0;
    m.p_pos = std::move(p_pos);
    m.h_group = std::move(h_group);
    return m;
}

inline DrivableScoreMap build_score_map(const LogitField& f, const ClassTaxonomy& tax, const McConfig& cfg,
                                        double tau_drive = kDefaultTauDrive) {
    if (f.num_classes() != tax.num_classes()) throw ConfigError("taxonomy / logit field class count mismatch");
    auto p_pos = group_probability(expected_probabilities(f, cfg), tax);
    auto h = group_entropy(p_pos);
    return assemble_score_map(f.spec(), std::move(p_pos), std::move(h), tau_drive);
}

/// Uncertainty-unaware baseline: p_pos from softmax(mu) with sigma ignored and
/// h_group forced to 0, so s_safe equals p_pos.
inline DrivableScoreMap build_baseline_score_map(const LogitField& f, const ClassTaxonomy& tax,
                                                 double tau_drive = kDefaultTauDrive) {
    if (f.num_classes() != tax.num_classes()) throw ConfigError("taxonomy / logit field class count mismatch");
    auto p_pos = group_probability(deterministic_probabilities(f), tax);
    std::vector<double> h(p_pos.size(), 0.0);
    return assemble_score_map(f.spec(), std::move(p_pos), std::move(h), tau_drive);
}

struct PerceptionLoss {
    double value{0.0};
    std::vector<double> per_pixel;
    std::vector<double> grad_mu;         // d value / d mu, [pixel][class]
    std::vector<double> grad_log_sigma;  // d value / d log sigma
};

/// Mean over pixels of -ln((1/T) sum_t softmax(mu + sigma * eps_t)_y), with
/// reparameterized gradients on the same epsilon stream.
inline PerceptionLoss perception_loss(const LogitField& f, const SemanticGrid& target, const McConfig& cfg) {
    cfg.validate();
    if (!(target.spec() == f.spec())) throw DataError("target grid shape differs from logit field");
    if (target.num_classes() != f.num_classes()) throw DataError("target class count differs from logit field");
    const int k = f.num_classes();
    const std::size_t n = f.pixels();
    PerceptionLoss out;
    out.per_pixel.resize(n);
    out.grad_mu.assign(n * k, 0.0);
    out.grad_log_sigma.assign(n * k, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    const auto labels = target.labels();

    parallel_for(n, [&](std::size_t p) {
        const int y = labels[p];
        if (y >= k) throw DataError("target label outside the class range");
        const auto ls = f.log_sigma(p);
        if (f.degenerate(p)) {
            std::vector<double> s(k);
            softmax(f.mu(p), s);
            out.per_pixel[p] = -std::log(s[y]);
            for (int c = 0; c < k; ++c) out.grad_mu[p * k + c] = inv_n * (s[c] - (c == y ? 1.0 : 0.0));
            return;
        }
        std::vector<double> z(k), s(k), eps(k), acc_mu(k, 0.0), acc_ls(k, 0.0);
        double py = 0.0;
        for (int t = 0; t < cfg.num_samples; ++t) {
            const auto mu = f.mu(p);
            for (int c = 0; c < k; ++c) {
                const double sg = LogitField::sigma_of(ls[c]);
                eps[c] = sg == 0.0 ? 0.0 : epsilon(cfg.seed, p, t, c);
                z[c] = sg == 0.0 ? mu[c] : mu[c] + sg * eps[c];
            }
            softmax(z, s);
            py += s[y];
            // d s_y / d z_c = s_y (delta_yc - s_c)
            for (int c = 0; c < k; ++c) {
                const double dz = s[y] * ((c == y ? 1.0 : 0.0) - s[c]);
                acc_mu[c] += dz;
                acc_ls[c] += dz * eps[c] * LogitField::sigma_of(ls[c]);
            }
        }
        py /= cfg.num_samples;
        out.per_pixel[p] = -std::log(py);
        const double scale = -inv_n / (cfg.num_samples * py);
        for (int c = 0; c < k; ++c) {
            out.grad_mu[p * k + c] = scale * acc_mu[c];
            out.grad_log_sigma[p * k + c] = scale * acc_ls[c];
        }
    });
    out.value = mean(out.per_pixel);
    return out;
}

// ---- serialization -------------------------------------------------------

/// "DSMP" + u32 H + u32 W, then float32 LE planes p_pos, h_group, s_safe.
inline void write_score_map(std::ostream& os, const DrivableScoreMap& m) {
    os.write("DSMP", 4);
    detail::write_u32_le(os, static_cast<std::uint32_t>(m.spec.height));
    detail::write_u32_le(os, static_cast<std::uint32_t>(m.spec.width));
    for (const auto* plane : {&m.p_pos, &m.h_group, &m.s_safe})
        for (double v : *plane) detail::write_f32_le(os, v);
    if (!os) throw IoError("failed writing score map");
}

/// The mask is not stored; it is recomputed from p_pos and tau_drive.
inline DrivableScoreMap read_score_map(std::istream& is, GridSpec geometry = {},
                                       double tau_drive = kDefaultTauDrive) {
    detail::expect_magic(is, "DSMP");
    geometry.height = static_cast<int>(detail::read_u32_le(is));
    geometry.width = static_cast<int>(detail::read_u32_le(is));
    geometry.validate();
    const std::size_t n = geometry.cells();
    std::vector<double> planes[3];
    for (auto& pl : planes) {
        pl.resize(n);
        for (auto& v : pl) v = detail::read_f32_le(is);
    }
    DrivableScoreMap m = assemble_score_map(geometry, std::move(planes[0]), std::move(planes[1]), tau_drive);
    m.s_safe = std::move(planes[2]);
    return m;
}

/// Binary PGM (P5) of s_safe, value * 255 rounded, row 0 first.
inline void write_safety_pgm(std::ostream& os, const DrivableScoreMap& m) {
    os << "P5\n" << m.spec.width << ' ' << m.spec.height << "\n255\n";
    for (double v : m.s_safe) {
        const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        os.put(static_cast<char>(byte));
    }
    if (!os) throw IoError("failed writing pgm");
}

/// "LGTF" + u32 H + u32 W + u32 K, then per class a float32 mu plane
/// followed by a float32 log-sigma plane.
inline void write_logit_field(std::ostream& os, const LogitField& f) {
    os.write("LGTF", 4);
    detail::write_u32_le(os, static_cast<std::uint32_t>(f.spec().height));
    detail::write_u32_le(os, static_cast<std::uint32_t>(f.spec().width));
    detail::write_u32_le(os, static_cast<std::uint32_t>(f.num_classes()));
    const int k = f.num_classes();
    for (int c = 0; c < k; ++c) {
        for (std::size_t p = 0; p < f.pixels(); ++p) detail::write_f32_le(os, f.mu()[p * k + c]);
        for (std::size_t p = 0; p < f.pixels(); ++p) detail::write_f32_le(os, f.log_sigma()[p * k + c]);
    }
    if (!os) throw IoError("failed writing logit field");
}

inline LogitField read_logit_field(std::istream& is, GridSpec geometry = {}) {
    detail::expect_magic(is, "LGTF");
    geometry.height = static_cast<int>(detail::read_u32_le(is));
    geometry.width = static_cast<int>(detail::read_u32_le(is));
    const int k = static_cast<int>(detail::read_u32_le(is));
    geometry.validate();
    if (k < 2 || k > 256) throw DataError("bad class count in logit field");
    const std::size_t n = geometry.cells();
    std::vector<double> mu(n * k), ls(n * k);
    for (int c = 0; c < k; ++c) {
        for (std::size_t p = 0; p < n; ++p) mu[p * k + c] = detail::read_f32_le(is);
        for (std::size_t p = 0; p < n; ++p) ls[p * k + c] = detail::read_f32_le(is);
    }
    return LogitField(geometry, k, std::move(mu), std::move(ls));
}

}  // namespace uncmap
