#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mcce/core.hpp"
#include "mcce/memory.hpp"
#include "mcce/metrics.hpp"
#include "mcce/objectives.hpp"
#include "mcce/pareto.hpp"
#include "mcce/proposers.hpp"
#include "mcce/random.hpp"
#include "mcce/similarity.hpp"
#include "mcce/synthesis.hpp"
#include "mcce/trainer.hpp"

namespace mcce::engine {

struct InitConfig {
    enum class Kind { FromFile, FromProposer };
    Kind kind = Kind::FromProposer;
    std::string path;             // FromFile
    std::size_t sample_n = 0;     // FromFile; 0 means M
    std::string binding = "frozen";  // FromProposer: "frozen" or "trainable"
    std::size_t max_prompts = 0;  // FromProposer; 0 means 4·M
};

struct SelectionConfig {
    enum class Kind { Tournament, FitnessProportional };
    Kind kind = Kind::Tournament;
    std::size_t tournament_size = 3;
};

struct ScorerConfig {
    enum class Kind { Builtin, Subprocess, Http };
    Kind kind = Kind::Builtin;
    std::string preset = "surrogate";
    std::vector<ObjectiveSpec> objectives;  // overrides the preset when non-empty
    std::string command;
    std::string url;
    std::chrono::milliseconds timeout{30000};
};

struct FingerprinterConfig {
    bool external = false;
    std::string command;
    std::chrono::milliseconds timeout{30000};
};

struct TrainerConfig {
    enum class Kind { Mock, Subprocess, Http };
    Kind kind = Kind::Mock;
    double learning_rate = 1.0;
    std::string command;
    std::string url;
    std::chrono::milliseconds timeout{600000};
};

struct RunConfig {
    std::size_t M = 100;
    int G = 50;
    std::uint64_t seed = 0;
    InitConfig init;
    double rho = 0.5;  // fraction of prompt slots served by the frozen binding
    SelectionConfig selection;
    std::size_t update_every_f = 200;
    std::size_t window_L = 100;
    double alpha = 0.3;
    std::size_t pairs_r = 1;
    double beta = 0.1;
    std::size_t concurrency = 4;
    std::string encoding = "SMILES";
    ScorerConfig scorer;
    FingerprinterConfig fingerprinter;
    proposers::ProposerBinding frozen;
    proposers::ProposerBinding trainable;
    TrainerConfig trainer;
    nlohmann::ordered_json source;  // resolved JSON, as pinned in the manifest

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

/// The full documented key set with default values.
nlohmann::ordered_json default_config_json();

/// Merges `user` over the defaults (unknown keys rejected), applies
/// `dotted.key=value` overrides (values parsed as JSON, else taken as strings)
/// and validates. Throws ConfigError.
RunConfig load_config(const nlohmann::ordered_json& user, std::span<const std::string> overrides = {});
RunConfig load_config_file(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Deterministic interleave: slot i goes to the frozen binding iff
/// floor((i+1)·rho) - floor(i·rho) == 1.
bool slot_uses_frozen(std::size_t slot, double rho);

/// Parent pair under the configured strategy. Throws Error for |pop| < 2.
std::pair<Candidate, Candidate> select_parents(const Population& pop, const SelectionConfig& selection, Rng& rng);
std::pair<Candidate, Candidate> select_parents(const Population& pop, const pareto::ParetoFront& front,
                                               const SelectionConfig& selection, Rng& rng);

struct UpdateEvent {
    int generation = 0;
    std::uint64_t evaluations = 0;
    std::string outcome;  // "updated", "empty", "failed"
    std::size_t dataset_size = 0;
    std::string dataset_path;
    std::string model_ref;
    std::string detail;
    synthesis::SynthesisReport report;
};

struct RunState {
    Population population;
    std::vector<Candidate> archive;
    Rng rng{0};
    std::uint64_t evaluations_used = 0;
    std::uint64_t last_update_at = 0;
    std::string model_ref;
    std::vector<metrics::MetricsSnapshot> timeline;
    int generation = 0;
};

struct RunReport {
    Population population;
    std::vector<Candidate> archive;
    std::vector<metrics::MetricsSnapshot> timeline;
    std::vector<UpdateEvent> updates;
    std::vector<std::string> events;
    nlohmann::ordered_json manifest;
};

class Engine {
public:
    /// With an output directory, trajectory.jsonl, pairs.jsonl, metrics.csv,
    /// summary.json, manifest.json and datasets/ are written there; otherwise the run stays in memory (update
    /// datasets then go to a private temporary directory).
    explicit Engine(RunConfig config, std::optional<std::filesystem::path> output_dir = std::nullopt);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const Population& init_population();
    void step_generation();
    void maybe_update();
    RunReport run();

    const RunConfig& config() const noexcept { return config_; }
    const RunState& state() const noexcept { return state_; }
    const TrajectoryStore& store() const noexcept { return *store_; }
    const objectives::Scorer& scorer() const noexcept { return *scorer_; }
    proposers::Proposer& frozen() noexcept { return *frozen_; }
    proposers::Proposer& trainable() noexcept { return *trainable_; }
    trainer::Trainer& trainer() noexcept { return *trainer_; }
    const std::shared_ptr<proposers::MockPolicyStore>& policy_store() const noexcept { return policies_; }
    const std::vector<UpdateEvent>& updates() const noexcept { return updates_; }
    /// Prompts issued per generation, in order (for auditing the M/2 rule).
    const std::vector<std::size_t>& prompts_per_generation() const noexcept { return prompts_per_gen_; }
    nlohmann::ordered_json manifest() const;

private:
    void log(std::string msg);
    std::uint64_t next_prompt_id();
    const proposers::Proposer& init_binding() const;
    void init_from_file();
    void init_from_proposer();
    void commit_init(std::vector<CandidateEntry> entries, const std::string& proposer_id, const std::string& model_ref,
                     const std::string& prompt_text);
    std::filesystem::path dataset_dir();

    RunConfig config_;
    std::optional<std::filesystem::path> out_dir_;
    std::optional<std::filesystem::path> temp_dir_;
    std::unique_ptr<objectives::Scorer> scorer_;
    std::unique_ptr<similarity::Fingerprinter> external_fp_;
    std::shared_ptr<proposers::MockPolicyStore> policies_;
    std::unique_ptr<proposers::Proposer> frozen_;
    std::unique_ptr<proposers::Proposer> trainable_;
    std::unique_ptr<trainer::Trainer> trainer_;
    std::unique_ptr<TrajectoryStore> store_;
    std::unique_ptr<metrics::MetricsTracker> tracker_;
    RunState state_;
    std::string reference_model_ref_;
    std::uint64_t prompt_counter_ = 0;
    CandidateId candidate_counter_ = 0;
    std::vector<UpdateEvent> updates_;
    std::vector<std::string> events_;
    std::vector<std::size_t> prompts_per_gen_;
    bool initialized_ = false;

    const similarity::Fingerprinter& fingerprinter() const;
};

}  // namespace mcce::engine
