#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "mcce/core.hpp"

namespace mcce::objectives {

/// Characters accepted by the builtin validity check.
inline constexpr std::string_view kBuiltinAlphabet = "BCNOPSFIHlrcnosp()[]=#@+-/\\.%0123456789";

/// Builtin validity: non-empty, every character in kBuiltinAlphabet, and
/// balanced, properly nested () and [] pairs. Never throws.
bool validate_builtin(std::string_view text);

struct ScoreOutcome {
    enum class Status { Ok, Invalid, Unavailable };
    Status status = Status::Invalid;
    ScoreVector scores;  // sentinel unless Ok
    std::string error;

    bool ok() const noexcept { return status == Status::Ok; }
};

/// A bound multi-objective scorer. Implementations for external transports
/// serialize access so at most one batch is in flight.
class Scorer {
public:
    virtual ~Scorer() = default;

    const ObjectiveRegistry& registry() const noexcept { return registry_; }
    virtual bool validate(const Genotype& g) const = 0;
    /// Order-preserving; one transport round-trip per call for external scorers.
    virtual std::vector<ScoreOutcome> score_batch(std::span<const Genotype> gs) const = 0;
    /// "builtin:<suite>" or "external".
    virtual std::string description() const = 0;

    /// Throws ScorerUnavailable unless the genotype scores successfully.
    ScoreVector score(const Genotype& g) const;

protected:
    explicit Scorer(ObjectiveRegistry registry);
    ObjectiveRegistry registry_;
};

/// Deterministic surrogate suite for desk-scale runs.
///
///   lengthband    |len - 24|, minimize over [0, 24]
///   charbalance   Shannon entropy of the character histogram in bits, maximize over [0, 3]
///   motifcount    overlapping occurrences of "CN", maximize over [0, 4]
///   motifavoid    overlapping occurrences of "OO", minimize over [0, 4]
///   bracketdepth  maximum ()/[] nesting depth, minimize over [0, 4]
class SurrogateScorer final : public Scorer {
public:
    static constexpr std::size_t kTargetLength = 24;
    static constexpr std::string_view kTargetMotif = "CN";
    static constexpr std::string_view kBannedMotif = "OO";

    SurrogateScorer();

    bool validate(const Genotype& g) const override;
    std::vector<ScoreOutcome> score_batch(std::span<const Genotype> gs) const override;
    std::string description() const override { return "builtin:surrogate"; }

    /// Raw objective values in registry order.
    static std::vector<double> raw_scores(std::string_view text);
};

ObjectiveRegistry surrogate_registry();

/// Reference preset for real molecular oracles: SA, DRD2, QED, GSK3β, JNK3 with
/// the directions used by the reference prompt.
ObjectiveRegistry molecular_registry();

/// Resolves a preset name ("surrogate" or "molecular").
ObjectiveRegistry registry_preset(std::string_view name);

struct ExternalTransport {
    enum class Kind { Subprocess, Http };
    Kind kind = Kind::Subprocess;
    std::vector<std::string> argv;  // Subprocess
    std::string url;                // Http
};

/// Line protocol, both transports:
///   request  `SCORE <id> <genotype-text>` per candidate, then `END`
///   reply    `RESULT <id> <0|1> <s1> ... <sK>` per candidate, then `END`
class ExternalScorer final : public Scorer {
public:
    ExternalScorer(ObjectiveRegistry registry, ExternalTransport transport, std::chrono::milliseconds timeout);

    bool validate(const Genotype& g) const override;
    std::vector<ScoreOutcome> score_batch(std::span<const Genotype> gs) const override;
    std::string description() const override { return "external"; }

private:
    ExternalTransport transport_;
    std::chrono::milliseconds timeout_;
    mutable std::mutex in_flight_;
};

std::string encode_score_request(std::span<const Genotype> gs);

/// Applies a reply body to a batch of `n` requests. Entries with a missing or
/// malformed RESULT line come back Unavailable.
std::vector<ScoreOutcome> decode_score_reply(std::string_view reply, std::size_t n, const ObjectiveRegistry& registry);

}  // namespace mcce::objectives
