#pragma once

// BEV grid geometry, class taxonomy and semantic label rasters.
//
// Axis convention: the row index grows with longitudinal (forward, +x)
// distance and the column index with lateral (left-positive, +y) distance.
// Continuous pixel coordinates put the corner of pixel (i, j) at (i, j) and
// its center at (i + 0.5, j + 0.5). Bounds are half-open: [0, H) x [0, W).

#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uncmap/common.hpp"

namespace uncmap {

enum class AxisConvention { row_longitudinal_col_lateral };

struct GridSpec {
    int height{128};
    int width{128};
    double resolution{0.5};  // meters per pixel
    // Ego-frame position of the corner of pixel (0, 0). The default places
    // the ego origin on the center of pixel (32, 63).
    Vec2 origin{-16.25, -31.75};
    AxisConvention orientation{AxisConvention::row_longitudinal_col_lateral};

    void validate() const {
        if (height < 1 || width < 1) throw ConfigError("grid height and width must be >= 1");
        if (!(resolution > 0.0) || !std::isfinite(resolution))
            throw ConfigError("grid resolution must be positive");
        if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
            throw ConfigError("grid origin must be finite");
    }

    std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * width + col;
    }
    bool contains(int row, int col) const {
        return row >= 0 && row < height && col >= 0 && col < width;
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Continuous pixel coordinate with an out-of-bounds flag.
struct PixelCoord {
    double row{0.0};
    double col{0.0};
    bool in_bounds{false};
};

inline PixelCoord project_to_grid(Vec2 point, const GridSpec& spec) {
    PixelCoord p;
    p.row = (point.x - spec.origin.x) / spec.resolution;
    p.col = (point.y - spec.origin.y) / spec.resolution;
    p.in_bounds = p.row >= 0.0 && p.row < spec.height && p.col >= 0.0 && p.col < spec.width;
    return p;
}

inline Vec2 pixel_to_world(double row, double col, const GridSpec& spec) {
    return {spec.origin.x + row * spec.resolution, spec.origin.y + col * spec.resolution};
}

inline Vec2 pixel_center(int row, int col, const GridSpec& spec) {
    return pixel_to_world(row + 0.5, col + 0.5, spec);
}

class ClassTaxonomy {
public:
    ClassTaxonomy(int num_classes, std::set<int> drivable, int centerline_class,
                  std::vector<std::string> labels = {})
        : num_classes_(num_classes),
          drivable_(std::move(drivable)),
          centerline_(centerline_class),
          labels_(std::move(labels)) {
        if (num_classes_ < 2) throw ConfigError("taxonomy needs at least two classes");
        if (drivable_.empty()) throw ConfigError("drivable set must be nonempty");
        if (static_cast<int>(drivable_.size()) >= num_classes_)
            throw ConfigError("drivable set must be a strict subset of the classes");
        for (int c : drivable_)
            if (c < 0 || c >= num_classes_) throw ConfigError("drivable class index out of range");
        if (centerline_ < 0 || centerline_ >= num_classes_)
            throw ConfigError("centerline class index out of range");
        if (labels_.empty())
            for (int c = 0; c < num_classes_; ++c) labels_.push_back("class" + std::to_string(c));
        if (static_cast<int>(labels_.size()) != num_classes_)
            throw ConfigError("label count must equal number of classes");
        mask_.assign(num_classes_, false);
        for (int c : drivable_) mask_[c] = true;
    }

    /// road, centerline, non_drivable; the centerline class is drivable.
    static ClassTaxonomy standard() {
        return ClassTaxonomy(3, {0, 1}, 1, {"road", "centerline", "non_drivable"});
    }

    int num_classes() const { return num_classes_; }
    const std::set<int>& drivable_set() const { return drivable_; }
    bool is_drivable(int c) const { return mask_.at(c); }
    int centerline_class() const { return centerline_; }
    bool centerline_is_drivable() const { return mask_[centerline_]; }
    const std::vector<std::string>& labels() const { return labels_; }

    /// First class outside the drivable set.
    int first_nondrivable() const {
        for (int c = 0; c < num_classes_; ++c)
            if (!mask_[c]) return c;
        return -1;
    }
    /// First drivable class that is not the centerline class, or the
    /// centerline class when it is the only drivable one.
    int first_plain_drivable() const {
        for (int c : drivable_)
            if (c != centerline_) return c;
        return *drivable_.begin();
    }

private:
    int num_classes_;
    std::set<int> drivable_;
    int centerline_;
    std::vector<std::string> labels_;
    std::vector<bool> mask_;
};

class SemanticGrid {
public:
    SemanticGrid(GridSpec spec, int num_classes, std::vector<std::uint8_t> labels)
        : spec_(spec), num_classes_(num_classes), labels_(std::move(labels)) {
        spec_.validate();
        if (num_classes_ < 1 || num_classes_ > 256) throw ConfigError("class count must be in [1, 256]");
        if (labels_.size() != spec_.cells()) throw DataError("label count does not match grid size");
        for (auto l : labels_)
            if (l >= num_classes_) throw DataError("label index out of range");
    }

    SemanticGrid(GridSpec spec, int num_classes, std::uint8_t fill = 0)
        : SemanticGrid(spec, num_classes, std::vector<std::uint8_t>(spec.cells(), fill)) {}

    const GridSpec& spec() const { return spec_; }
    int num_classes() const { return num_classes_; }
    std::span<const std::uint8_t> labels() const { return labels_; }

    int at(int row, int col) const { return labels_[spec_.index(row, col)]; }
    void set(int row, int col, int cls) {
        if (cls < 0 || cls >= num_classes_) throw DataError("label index out of range");
        labels_[spec_.index(row, col)] = static_cast<std::uint8_t>(cls);
    }

    /// Per-pixel truth of "drivable" under a taxonomy.
    std::vector<bool> drivable_mask(const ClassTaxonomy& tax) const {
        if (tax.num_classes() != num_classes_) throw ConfigError("taxonomy class count mismatch");
        std::vector<bool> out(labels_.size());
        for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = tax.is_drivable(labels_[i]);
        return out;
    }

    friend bool operator==(const SemanticGrid&, const SemanticGrid&) = default;

private:
    GridSpec spec_;
    int num_classes_;
    std::vector<std::uint8_t> labels_;
};

/// "BEVG" + u32 H + u32 W + u32 K, then H*W row-major u8 labels.
inline void write_semantic_grid(std::ostream& os, const SemanticGrid& g) {
    os.write("BEVG", 4);
    detail::write_u32_le(os, static_cast<std::uint32_t>(g.spec().height));
    detail::write_u32_le(os, static_cast<std::uint32_t>(g.spec().width));
    detail::write_u32_le(os, static_cast<std::uint32_t>(g.num_classes()));
    os.write(reinterpret_cast<const char*>(g.labels().data()),
             static_cast<std::streamsize>(g.labels().size()));
    if (!os) throw IoError("failed writing semantic grid");
}

/// Resolution and origin are not stored in the file; pass them in `geometry`
/// (its height and width are replaced by the header values).
inline SemanticGrid read_semantic_grid(std::istream& is, GridSpec geometry = {}) {
    detail::expect_magic(is, "BEVG");
    geometry.height = static_cast<int>(detail::read_u32_le(is));
    geometry.width = static_cast<int>(detail::read_u32_le(is));
    const int k = static_cast<int>(detail::read_u32_le(is));
    std::vector<std::uint8_t> labels(geometry.cells());
    if (!is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size())))
        throw DataError("truncated semantic grid payload");
    return SemanticGrid(geometry, k, std::move(labels));
}

/// Plain-text fixture: one grid row per line, comma separated class indices.
/// Blank lines and lines starting with '#' are ignored.
inline SemanticGrid read_semantic_grid_csv(std::istream& is, int num_classes,
                                           double resolution = 0.5, Vec2 origin = {0.0, 0.0}) {
    std::vector<std::uint8_t> labels;
    int width = -1;
    int height = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        int n = 0;
        while (std::getline(ss, cell, ',')) {
            int v = 0;
            try {
                std::size_t used = 0;
                v = std::stoi(cell, &used);
            } catch (const std::exception&) {
                throw DataError("non-integer cell in grid csv: '" + cell + "'");
            }
            if (v < 0 || v >= num_classes) throw DataError("label index out of range in grid csv");
            labels.push_back(static_cast<std::uint8_t>(v));
            ++n;
        }
        if (width < 0) width = n;
        if (n != width) throw DataError("ragged rows in grid csv");
        ++height;
    }
    if (height == 0) throw DataError("empty grid csv");
    GridSpec spec{height, width, resolution, origin};
    return SemanticGrid(spec, num_classes, std::move(labels));
}

}  // namespace uncmap
