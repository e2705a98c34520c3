#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcce/core.hpp"
#include "mcce/memory.hpp"

namespace mcce::similarity {

/// Feature-hash set, kept sorted and unique.
struct Fingerprint {
    std::vector<std::uint64_t> features;

    static Fingerprint from_unsorted(std::vector<std::uint64_t> f);
    std::size_t size() const noexcept { return features.size(); }
    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

class Fingerprinter {
public:
    virtual ~Fingerprinter() = default;
    virtual Fingerprint fingerprint(const Genotype& g) const = 0;
    virtual std::vector<Fingerprint> fingerprint_batch(std::span<const Genotype> gs) const;
    virtual std::string name() const = 0;
};

/// Character 2- and 3-grams hashed with FNV-1a 64. Texts shorter than two
/// characters contribute the whole text as their single feature. Results are
/// memoized behind a mutex.
class NgramFingerprinter final : public Fingerprinter {
public:
    Fingerprint fingerprint(const Genotype& g) const override;
    std::string name() const override { return "ngram23"; }

private:
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, Fingerprint> memo_;
};

/// Delegates to an external tool: genotype texts on stdin, one per line; the tool
/// replies with one line of whitespace-separated decimal 64-bit integers per genotype.
class ExternalFingerprinter final : public Fingerprinter {
public:
    ExternalFingerprinter(std::vector<std::string> argv, std::chrono::milliseconds timeout);

    Fingerprint fingerprint(const Genotype& g) const override;
    std::vector<Fingerprint> fingerprint_batch(std::span<const Genotype> gs) const override;
    std::string name() const override { return "external"; }

private:
    std::vector<std::string> argv_;
    std::chrono::milliseconds timeout_;
};

/// Process-wide default n-gram fingerprinter.
const Fingerprinter& default_fingerprinter();

/// Default n-gram fingerprint; throws on empty text.
Fingerprint fingerprint(const Genotype& g);

/// |a ∩ b| / |a ∪ b|; two empty sets compare as identical.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

/// Max over the prompt's parent genotypes of tanimoto(candidate, parent).
double prompt_similarity(const Genotype& candidate, std::span<const std::string> parent_genotypes,
                         const Fingerprinter& fp = default_fingerprinter());
double prompt_similarity(const Candidate& c, const TrajectoryRecord& q,
                         const Fingerprinter& fp = default_fingerprinter());

/// Closed interval with a small absolute tolerance on membership.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const noexcept;
};

inline constexpr double kBoundTolerance = 1e-12;

/// Global similarity statistics: mean, population standard deviation, the
/// mu±sigma filter band and the nested upper windows I1 ⊆ I2 ⊆ I3.
struct SimilarityStats {
    double mu = 0.0;
    double sigma = 0.0;
    std::size_t sample_count = 0;
    Interval band;
    Interval i1, i2, i3;

    bool in_band(double sim) const noexcept { return band.contains(sim); }
};

SimilarityStats compute_stats(std::span<const double> samples);

/// Pools every stored sim-to-prompt value of prompt records (both proposers).
/// Throws InsufficientHistory with fewer than two samples.
SimilarityStats compute_stats(std::span<const TrajectoryRecord> history);

std::vector<double> similarity_samples(std::span<const TrajectoryRecord> history);

}  // namespace mcce::similarity
