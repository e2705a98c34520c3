#include "mcce/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "mcce/errors.hpp"

namespace mcce {

Genotype::Genotype(std::string t) : text(std::move(t)) {
    if (text.find_first_of("\r\n") != std::string::npos) {
        throw Error("genotype text must be a single line");
    }
}

std::string_view to_string(Direction d) {
    return d == Direction::Maximize ? "maximize" : "minimize";
}

Direction direction_from_string(std::string_view s) {
    if (s == "maximize" || s == "max") return Direction::Maximize;
    if (s == "minimize" || s == "min") return Direction::Minimize;
    throw ConfigError("unknown objective direction '" + std::string(s) + "'");
}

ObjectiveRegistry::ObjectiveRegistry(std::vector<ObjectiveSpec> specs) : specs_(std::move(specs)) {
    std::unordered_set<std::string> seen;
    for (const auto& s : specs_) {
        if (s.name.empty()) throw ConfigError("objective name must not be empty");
        if (!seen.insert(s.name).second) throw ConfigError("duplicate objective name '" + s.name + "'");
        if (s.raw_range && !(s.raw_range->lo < s.raw_range->hi)) {
            throw ConfigError("objective '" + s.name + "' has raw_range with lo >= hi");
        }
    }
}

std::optional<std::size_t> ObjectiveRegistry::index_of(std::string_view name) const {
    for (std::size_t k = 0; k < specs_.size(); ++k) {
        if (specs_[k].name == name) return k;
    }
    return std::nullopt;
}

ScoreVector ScoreVector::sentinel(std::size_t k) {
    ScoreVector v;
    v.raw.assign(k, 0.0);
    v.oriented.assign(k, 0.0);
    v.scalar_fitness = 0.0;
    return v;
}

double orient_score(const ObjectiveSpec& spec, double raw) {
    if (!std::isfinite(raw)) {
        throw InvalidScore("non-finite raw score for objective '" + spec.name + "'");
    }
    if (spec.raw_range) {
        const auto [lo, hi] = *spec.raw_range;
        const double x = std::clamp(raw, lo, hi);
        const double v = spec.direction == Direction::Maximize ? (x - lo) / (hi - lo) : (hi - x) / (hi - lo);
        return std::clamp(v, 0.0, 1.0);
    }
    if (raw < 0.0 || raw > 1.0) {
        throw InvalidScore("objective '" + spec.name + "' has no raw_range and raw score " + std::to_string(raw) +
                           " is outside [0,1]");
    }
    return spec.direction == Direction::Maximize ? raw : 1.0 - raw;
}

std::vector<double> znormalize(std::span<const ScoreVector> scores, std::size_t k) {
    std::vector<double> out(scores.size(), 0.0);
    if (scores.empty()) return out;
    const double n = static_cast<double>(scores.size());
    double mean = 0.0;
    for (const auto& s : scores) mean += s.raw.at(k);
    mean /= n;
    double var = 0.0;
    for (const auto& s : scores) {
        const double d = s.raw[k] - mean;
        var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (sd == 0.0) return out;
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i].raw[k] - mean) / sd;
    return out;
}

double scalarize(const ScoreVector& scores) {
    return std::accumulate(scores.oriented.begin(), scores.oriented.end(), 0.0);
}

ScoreVector make_score_vector(const ObjectiveRegistry& registry, std::vector<double> raw) {
    if (raw.size() != registry.size()) {
        throw DimensionMismatch("expected " + std::to_string(registry.size()) + " raw scores, got " +
                                std::to_string(raw.size()));
    }
    ScoreVector v;
    v.oriented.reserve(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) v.oriented.push_back(orient_score(registry[k], raw[k]));
    v.raw = std::move(raw);
    v.scalar_fitness = scalarize(v);
    return v;
}

}  // namespace mcce
