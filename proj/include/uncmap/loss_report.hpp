#pragma once

#include <string>
#include <vector>

#include "uncmap/common.hpp"

namespace uncmap {

/// Value and analytic gradient of one loss term.
struct LossValue {
    double value{0.0};
    std::vector<double> grad;
};

struct LossTerm {
    std::string name;
    double weight{1.0};
    double value{0.0};
    std::vector<double> grad;  // w.r.t. the term's own inputs (unweighted)

    double weighted() const { return weight * value; }
};

/// Named loss components with their weights. The total is the weighted sum
/// in insertion order.
struct LossReport {
    std::vector<LossTerm> terms;

    LossReport& add(std::string name, double weight, double value, std::vector<double> grad = {}) {
        if (!(weight >= 0.0) || !std::isfinite(weight))
            throw ConfigError("loss weight for '" + name + "' must be finite and >= 0");
        terms.push_back({std::move(name), weight, value, std::move(grad)});
        return *this;
    }

    double total() const {
        double s = 0.0;
        for (const auto& t : terms) s += t.weighted();
        return s;
    }

    const LossTerm* find(const std::string& name) const {
        for (const auto& t : terms)
            if (t.name == name) return &t;
        return nullptr;
    }

    double value_of(const std::string& name) const {
        const auto* t = find(name);
        if (!t) throw InputError("no loss term named '" + name + "'");
        return t->value;
    }
};

}  // namespace uncmap
