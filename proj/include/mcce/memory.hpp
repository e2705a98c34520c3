#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcce/core.hpp"

namespace mcce {

inline constexpr int kTrajectorySchemaVersion = 1;

enum class EntryStatus {
    Scored,       // evaluated and admitted to the offspring pool
    Duplicate,    // genotype already known; scores copied, not re-evaluated
    Invalid,      // failed validation (builtin check or scorer flag)
    ScorerError,  // the scorer could not produce a reply for it
};

std::string_view to_string(EntryStatus s);
EntryStatus entry_status_from_string(std::string_view s);

struct CandidateEntry {
    CandidateId id = 0;
    std::string genotype;
    EntryStatus status = EntryStatus::Scored;
    bool valid = false;
    bool evaluated = false;
    std::vector<double> raw;
    std::vector<double> oriented;
    double fitness = 0.0;
    std::optional<double> sim;  // similarity to the prompt, stored once computed

    bool has_scores() const noexcept { return valid && !oriented.empty(); }
};

/// Run-level metadata carried by the initial-population record so a log can be
/// replayed without its config.
struct RunHeader {
    std::size_t capacity = 0;
    int generations = 0;
    std::uint64_t seed = 0;
    std::vector<ObjectiveSpec> objectives;
    std::string scorer;        // "builtin:<suite>" or "external"
    std::string fingerprinter;  // "ngram23" or "external"
};

enum class RecordKind { Init, Prompt };

/// One prompt event: parents, prompt, emitted candidates and their scores.
struct TrajectoryRecord {
    RecordKind kind = RecordKind::Prompt;
    std::uint64_t prompt_id = 0;
    std::uint64_t timestamp = 0;
    int generation = 0;
    std::string proposer_id;
    std::string model_ref;
    std::vector<CandidateId> parent_ids;
    std::vector<std::string> parent_genotypes;
    std::string prompt_text;
    std::vector<CandidateEntry> candidates;
    std::optional<std::string> error;
    std::optional<RunHeader> run;
};

/// One line of the trajectory log, without the trailing newline.
std::string encode_record(const TrajectoryRecord& rec);
TrajectoryRecord decode_record(std::string_view line);

/// Append-only trajectory memory with write-through persistence.
class TrajectoryStore {
public:
    /// In-memory only.
    TrajectoryStore() = default;
    /// Persists to `path`, truncating any existing file.
    explicit TrajectoryStore(const std::filesystem::path& path);

    /// Throws StoreError on a reused prompt id or non-increasing timestamp;
    /// the store is left unchanged in that case.
    void append(TrajectoryRecord rec);

    /// Newest-last window of the most recent min(L, size) records.
    std::vector<TrajectoryRecord> recent_window(std::size_t L) const;
    /// Same, restricted to prompt records.
    std::vector<TrajectoryRecord> recent_prompts(std::size_t L) const;

    std::span<const TrajectoryRecord> records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

private:
    std::vector<TrajectoryRecord> records_;
    std::set<std::uint64_t> ids_;
    std::optional<std::filesystem::path> path_;
    std::ofstream out_;
};

/// Streaming reader over a trajectory log. Each record is checked against the
/// record invariants; failures raise LogParseError with the line number.
class LogReader {
public:
    explicit LogReader(const std::filesystem::path& path);

    std::optional<TrajectoryRecord> next();
    std::size_t line() const noexcept { return line_; }

private:
    std::ifstream in_;
    std::size_t line_ = 0;
    std::optional<std::uint64_t> last_id_;
    std::optional<std::uint64_t> last_ts_;
    std::size_t objective_count_ = 0;
};

std::vector<TrajectoryRecord> replay(const std::filesystem::path& path);

}  // namespace mcce
