#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcce/core.hpp"

namespace mcce::proposers {

inline constexpr std::string_view kCrossoverTemplate = "mcce-crossover-v1";
inline constexpr std::string_view kSeedTemplate = "mcce-seed-v1";

struct PromptSpec {
    std::string template_id;
    std::vector<CandidateId> parent_ids;  // empty for seed prompts
    std::vector<std::string> parent_genotypes;
    std::string rendered_text;
    std::vector<std::string> objective_briefs;
    std::uint64_t sample_nonce = 0;  // distinguishes repeated prompts; part of the prompt identity
};

/// Throws ConfigError if any objective lacks a label or brief.
void check_prompt_registry(const ObjectiveRegistry& registry);

/// Crossover prompt over two valid parents. Deterministic in its inputs.
PromptSpec build_prompt(const Candidate& p1, const Candidate& p2, const ObjectiveRegistry& registry,
                        std::string_view encoding = "SMILES");

/// Parent-free prompt used to seed an initial population from a proposer.
PromptSpec build_seed_prompt(const ObjectiveRegistry& registry, std::string_view encoding = "SMILES");

/// Parent genotypes embedded in a rendered prompt, in slot order.
std::vector<std::string> prompt_parents(std::string_view rendered_text);

struct ParseResult {
    std::vector<Genotype> genotypes;
    std::vector<std::string> warnings;
};

/// Extracts non-overlapping <mol>...</mol> spans in order. An opening tag
/// followed by another opening tag before its close is discarded (innermost
/// span wins). Spans are trimmed; empty or multi-line spans are dropped; at most
/// the first two genotypes are kept.
ParseResult parse_response(std::string_view raw);

/// Parameters of the scripted generative program. The insertion vocabulary is
/// the part a mock trainer re-weights.
///
/// For each of the two children, with parents (P, Q) = (A, B) for the first
/// child and (B, A) for the second:
///   1. cut points i ~ U{0..|P|}, j ~ U{0..|Q|}; x = P[0,i) + Q[j,|Q|)
///   2. with probability p_keep emit x; with p_insert insert a vocabulary token
///      t (probability ∝ weight) at position U{0..|x|}; otherwise delete the
///      character at U{0..|x|-1} (an empty x is emitted unchanged).
/// Seed prompts draw a length U{seed_min_len..seed_max_len} and characters
/// uniformly from seed_alphabet.
struct MockPolicy {
    std::vector<std::pair<std::string, double>> vocabulary;
    double p_keep = 0.2;
    double p_insert = 0.6;
    double p_delete = 0.2;
    std::size_t seed_min_len = 8;
    std::size_t seed_max_len = 20;
    std::string seed_alphabet = "CNOScno";

    static MockPolicy defaults();
    /// Reads a JSON script file; absent keys keep their defaults.
    static MockPolicy from_script(const std::string& path);

    double total_weight() const noexcept;
    double token_weight(std::string_view t) const noexcept;
};

/// Thread-safe map from model reference to mock policy.
class MockPolicyStore {
public:
    void put(const std::string& model_ref, MockPolicy policy);
    std::shared_ptr<const MockPolicy> get(const std::string& model_ref) const;
    bool contains(const std::string& model_ref) const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const MockPolicy>> policies_;
};

struct ProposerBinding {
    enum class Kind { RemoteApi, LocalEndpoint, ScriptedMock };
    std::string id;
    Kind kind = Kind::ScriptedMock;
    std::string endpoint;       // chat-completion URL (RemoteApi, LocalEndpoint)
    std::string model_name;     // RemoteApi
    std::string auth_env_var;   // bearer token source; the token itself is never stored
    std::string model_ref;      // LocalEndpoint / ScriptedMock current model
    std::string script_path;    // ScriptedMock; empty means defaults
    std::uint64_t seed = 0;     // ScriptedMock
    std::string logprob_endpoint;
    bool supports_logprob = false;
    int max_retries = 2;
    double temperature = 1.0;
    std::chrono::milliseconds timeout{60000};
};

std::string_view to_string(ProposerBinding::Kind k);

struct ProposalResult {
    std::string raw_text;
    std::vector<Genotype> parsed;
    std::vector<std::string> parse_errors;
    std::optional<double> logprob;
    int attempts = 0;
};

/// A model backend that maps prompts to completions.
class Proposer {
public:
    explicit Proposer(ProposerBinding binding) : binding_(std::move(binding)) {}
    virtual ~Proposer() = default;

    const ProposerBinding& binding() const noexcept { return binding_; }
    std::string model_ref() const;
    void set_model_ref(std::string ref);

    /// One raw backend call. `attempt` is 0 for the first try.
    virtual std::string complete(const PromptSpec& prompt, int attempt) const = 0;

    /// Total log-probability of `completion` given the prompt text. Throws
    /// CapabilityError when the backend cannot score sequences.
    virtual double sequence_logprob(std::string_view prompt_text, std::string_view completion) const;

protected:
    ProposerBinding binding_;
    mutable std::mutex ref_mu_;
};

/// Scripted, seeded, network-free proposer. Output is a pure function of the
/// seed, the prompt (text and nonce), the attempt number and the policy bound
/// to the current model reference.
class ScriptedMockProposer final : public Proposer {
public:
    ScriptedMockProposer(ProposerBinding binding, std::shared_ptr<MockPolicyStore> store);

    std::string complete(const PromptSpec& prompt, int attempt) const override;
    double sequence_logprob(std::string_view prompt_text, std::string_view completion) const override;

    std::shared_ptr<const MockPolicy> policy() const;
    const std::shared_ptr<MockPolicyStore>& store() const noexcept { return store_; }

private:
    std::shared_ptr<MockPolicyStore> store_;
};

/// Chat-completion POST: {"model", "messages":[{"role":"user","content"}], "temperature"};
/// the reply text is choices[0].message.content. LocalEndpoint sends the current
/// model reference as "model". Log-probabilities, when enabled, come from
/// logprob_endpoint: POST {"model","prompt","completion"} -> {"logprob": x}.
class HttpProposer final : public Proposer {
public:
    explicit HttpProposer(ProposerBinding binding);

    std::string complete(const PromptSpec& prompt, int attempt) const override;
    double sequence_logprob(std::string_view prompt_text, std::string_view completion) const override;
};

std::unique_ptr<Proposer> make_proposer(const ProposerBinding& binding, std::shared_ptr<MockPolicyStore> store);

/// Calls the backend, retrying up to max_retries times on transport failure or
/// when nothing parses. Throws ProposerUnavailable once retries are exhausted.
/// With `with_logprob` the completion is also scored by the backend when it can.
ProposalResult propose(const PromptSpec& prompt, const Proposer& proposer, bool with_logprob = false);

/// Log-probability of one genotype (or a two-genotype completion) under the mock
/// program, given parents. Returns -infinity outside the support.
double mock_logprob(const MockPolicy& policy, std::span<const std::string> parents,
                    std::span<const std::string> completion);

}  // namespace mcce::proposers
