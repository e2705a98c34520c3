#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcce/memory.hpp"
#include "mcce/similarity.hpp"

namespace mcce::synthesis {

inline constexpr int kDatasetSchemaVersion = 1;

/// Similarity window or score-half fallback a triplet side was drawn from,
/// strictest first.
enum class Stage { I1 = 0, I2 = 1, I3 = 2, Half = 3 };
inline constexpr std::size_t kStageCount = 4;

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// A scored, similarity-annotated response to one prompt.
struct PoolCandidate {
    CandidateId id = 0;
    std::uint64_t prompt_id = 0;
    std::string genotype;
    double score = 0.0;  // scalar fitness
    double sim = 0.0;    // similarity to the prompt
};

/// Valid, scored candidates of a record that carry a stored similarity.
std::vector<PoolCandidate> pool_of(const TrajectoryRecord& rec);

struct StratifiedPools {
    std::set<CandidateId> high, low, top_half, bottom_half;
    double alpha = 0.3;
    std::size_t n = 0;
};

/// Keeps candidates with mu - sigma <= sim <= mu + sigma (closed bounds).
std::vector<PoolCandidate> global_filter(std::span<const PoolCandidate> candidates,
                                         const similarity::SimilarityStats& stats);

/// Sorts by score descending (ties by id ascending). high/low take ceil(alpha·n)
/// from each end, the halves ceil(n/2). Throws InsufficientCandidates for n < 2
/// and Error for alpha outside (0, 0.5].
StratifiedPools stratify(std::span<const PoolCandidate> candidates, double alpha);

struct PreferenceSide {
    CandidateId id = 0;
    std::string genotype;
    double score = 0.0;
    double sim = 0.0;
    Stage stage = Stage::I1;
};

struct PreferenceTriplet {
    std::uint64_t prompt_id = 0;
    std::string prompt_text;
    PreferenceSide chosen;
    PreferenceSide rejected;
    std::uint64_t created_at = 0;

    /// The more relaxed of the two side stages.
    Stage stage() const noexcept { return std::max(chosen.stage, rejected.stage); }
};

struct SynthesisReport {
    std::size_t sample_count = 0;
    double mu = 0.0;
    double sigma = 0.0;
    std::size_t window_prompts = 0;
    std::size_t pool_size = 0;  // |C_all| over the window
    std::size_t emitted = 0;
    std::size_t skipped_prompts = 0;
    std::array<std::size_t, kStageCount> triplet_stages{};
    std::array<std::size_t, kStageCount> chosen_stages{};
    std::array<std::size_t, kStageCount> rejected_stages{};
    std::string note;

    std::string to_json() const;
};

/// Per-prompt pair construction. The chosen side walks I1 → I2 → I3 over
/// C_q ∩ F ∩ high and then falls back to C_q ∩ F ∩ top-half; the rejected side
/// mirrors it over low / bottom-half, restricted to candidates scoring strictly
/// below the chosen one with a different genotype. The best (resp. worst)
/// scoring qualifier is taken at each stage, ties by id. A prompt whose side
/// stays empty is skipped. At most r triplets per prompt; a candidate is used
/// at most once per side and prompt.
std::vector<PreferenceTriplet> construct_pairs(std::span<const TrajectoryRecord> window,
                                               const similarity::SimilarityStats& stats,
                                               const StratifiedPools& pools, std::size_t r,
                                               SynthesisReport* report = nullptr, std::uint64_t created_at = 0);

struct SynthesisResult {
    std::vector<PreferenceTriplet> dataset;
    SynthesisReport report;
};

/// Stats over the full history, pools over the last L prompts' candidates,
/// then pair construction over those prompts. Never throws for thin history:
/// too few samples or candidates yield an empty dataset and a report note.
SynthesisResult synthesize(std::span<const TrajectoryRecord> history, std::size_t L, double alpha, std::size_t r,
                           std::uint64_t created_at = 0);

std::string encode_triplet(const PreferenceTriplet& t);
PreferenceTriplet decode_triplet(std::string_view line);

/// Reads a preference dataset file; throws LogParseError naming the bad line.
std::vector<PreferenceTriplet> read_dataset(const std::filesystem::path& path);

}  // namespace mcce::synthesis
