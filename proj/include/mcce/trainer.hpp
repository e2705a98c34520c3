#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mcce/proposers.hpp"
#include "mcce/synthesis.hpp"

namespace mcce::trainer {

/// -log sigmoid(beta * [(pc - rc) - (pr - rr)]) for policy (p) and reference (r)
/// log-probabilities of the chosen (c) and rejected (r) sequences.
/// A -infinity rejected policy log-probability gives 0; both rejected terms at
/// -infinity count as a zero rejected margin. -infinity on the chosen side, NaN
/// anywhere or beta <= 0 throws.
double dpo_loss(double logp_policy_chosen, double logp_policy_rejected, double logp_ref_chosen,
                double logp_ref_rejected, double beta);

struct DpoBatch {
    std::vector<synthesis::PreferenceTriplet> triplets;
    double beta = 0.1;
    std::string reference_id;
};

/// Writes the dataset through a temporary file and an atomic rename. Throws
/// Error for an empty dataset and IoError on write failure (no file appears).
std::size_t export_dataset(std::span<const synthesis::PreferenceTriplet> triplets, const std::filesystem::path& path);

/// External training backend. A successful update returns the new model reference.
class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::string kind() const = 0;

    const std::string& current_model_ref() const noexcept { return current_ref_; }
    void set_current_model_ref(std::string ref) { current_ref_ = std::move(ref); }
    int update_count() const noexcept { return update_count_; }

protected:
    virtual std::string run_update(const std::filesystem::path& dataset, double beta,
                                   const std::string& current_ref) = 0;

private:
    friend std::string invoke_update(Trainer&, const std::filesystem::path&, double);
    std::string current_ref_;
    int update_count_ = 0;
};

/// Runs `<command> --dataset <path> --beta <beta> --ref <current model ref>`; a
/// successful run exits 0 and prints a `MODEL_REF <string>` line.
class SubprocessTrainer final : public Trainer {
public:
    SubprocessTrainer(std::vector<std::string> argv, std::chrono::milliseconds timeout);
    std::string kind() const override { return "subprocess"; }

protected:
    std::string run_update(const std::filesystem::path& dataset, double beta, const std::string& current_ref) override;

private:
    std::vector<std::string> argv_;
    std::chrono::milliseconds timeout_;
};

/// POSTs the dataset file body (JSON lines) with X-Beta and X-Model-Ref headers.
/// A 2xx reply carries the new reference either as {"model_ref": "..."}, as a
/// `MODEL_REF <string>` line, or as the bare trimmed body.
class HttpTrainer final : public Trainer {
public:
    HttpTrainer(std::string url, std::chrono::milliseconds timeout);
    std::string kind() const override { return "http"; }

protected:
    std::string run_update(const std::filesystem::path& dataset, double beta, const std::string& current_ref) override;

private:
    std::string url_;
    std::chrono::milliseconds timeout_;
};

/// Closed-loop stand-in for DPO training. Records each dataset and, when the
/// current reference names a scripted-mock policy, registers a new policy whose
/// insertion vocabulary is shifted toward 2- and 3-grams that occur more often in
/// chosen than in rejected genotypes: weight[g] += learning_rate * (count_chosen(g)
/// - count_rejected(g)) / |dataset| for every positive difference.
class MockTrainer final : public Trainer {
public:
    explicit MockTrainer(std::shared_ptr<proposers::MockPolicyStore> store, double learning_rate = 1.0);
    std::string kind() const override { return "mock"; }

    const std::vector<std::size_t>& recorded_sizes() const noexcept { return recorded_; }

protected:
    std::string run_update(const std::filesystem::path& dataset, double beta, const std::string& current_ref) override;

private:
    std::shared_ptr<proposers::MockPolicyStore> store_;
    double learning_rate_;
    std::vector<std::size_t> recorded_;
};

/// Re-weighted copy of `policy` (see MockTrainer).
proposers::MockPolicy reweight_policy(const proposers::MockPolicy& policy,
                                      std::span<const synthesis::PreferenceTriplet> triplets, double learning_rate);

/// Runs one update. On success bumps update_count and the current reference and
/// returns it; otherwise throws UpdateFailed and leaves the trainer untouched.
std::string invoke_update(Trainer& trainer, const std::filesystem::path& dataset, double beta);

struct ValidationReport {
    std::vector<double> losses;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Per-triplet DPO loss using sequence log-probabilities from the two bindings.
ValidationReport validate_dataset(std::span<const synthesis::PreferenceTriplet> dataset,
                                  const proposers::Proposer& policy, const proposers::Proposer& reference,
                                  double beta);

}  // namespace mcce::trainer
