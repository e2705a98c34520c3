#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcce {

using CandidateId = std::uint64_t;

/// One-line string encoding of a candidate (SMILES or a synthetic token string).
/// Tokens are single characters.
struct Genotype {
    std::string text;

    Genotype() = default;
    explicit Genotype(std::string t);

    std::size_t token_count() const noexcept { return text.size(); }
    bool empty() const noexcept { return text.empty(); }

    friend bool operator==(const Genotype&, const Genotype&) = default;
};

enum class Direction { Maximize, Minimize };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

struct RawRange {
    double lo = 0.0;
    double hi = 1.0;
};

struct ObjectiveSpec {
    std::string name;
    Direction direction = Direction::Maximize;
    std::optional<RawRange> raw_range;
    // Prompt metadata: label used in the numbered directive and the explanatory brief.
    std::string label;
    std::string brief;
};

/// Ordered, name-unique set of objectives. Registry order is the score-vector order.
class ObjectiveRegistry {
public:
    ObjectiveRegistry() = default;
    explicit ObjectiveRegistry(std::vector<ObjectiveSpec> specs);

    std::size_t size() const noexcept { return specs_.size(); }
    const ObjectiveSpec& operator[](std::size_t k) const { return specs_.at(k); }
    std::span<const ObjectiveSpec> specs() const noexcept { return specs_; }
    std::optional<std::size_t> index_of(std::string_view name) const;

private:
    std::vector<ObjectiveSpec> specs_;
};

struct ScoreVector {
    std::vector<double> raw;
    std::vector<double> oriented;  // every entry in [0,1], larger is better
    double scalar_fitness = 0.0;

    std::size_t size() const noexcept { return oriented.size(); }

    /// All-zero vector carried by invalid candidates.
    static ScoreVector sentinel(std::size_t k);

    friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

struct Candidate {
    CandidateId id = 0;
    Genotype genotype;
    ScoreVector scores;
    bool valid = false;
    std::string proposer_id;
    std::vector<CandidateId> parent_ids;  // empty for generation-0 members, else two
    int generation = 0;
};

struct Population {
    std::vector<Candidate> members;
    std::size_t capacity = 0;
    int generation = 0;
};

/// Maps a raw objective value to [0,1] where larger is better.
/// Without a raw range the value must already lie in [0,1]. Throws InvalidScore
/// for non-finite input.
double orient_score(const ObjectiveSpec& spec, double raw);

/// Per-objective z-score over a population: (s - mean) / sd with the
/// population standard deviation. A zero-variance column maps to zeros.
std::vector<double> znormalize(std::span<const ScoreVector> scores, std::size_t k);

double scalarize(const ScoreVector& scores);

/// Orients every raw entry through the registry and fills scalar_fitness.
ScoreVector make_score_vector(const ObjectiveRegistry& registry, std::vector<double> raw);

}  // namespace mcce
