#include "mcce/trainer.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mcce/errors.hpp"
#include "mcce/process.hpp"
#include "mcce/random.hpp"

namespace mcce::trainer {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 + exp(x)) without overflow.
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

double dpo_loss(double logp_policy_chosen, double logp_policy_rejected, double logp_ref_chosen,
                double logp_ref_rejected, double beta) {
    if (!(beta > 0.0)) throw Error("beta must be positive");
    for (double v : {logp_policy_chosen, logp_policy_rejected, logp_ref_chosen, logp_ref_rejected}) {
        if (std::isnan(v)) throw Error("NaN log-probability");
    }
    if (!std::isfinite(logp_policy_chosen) || !std::isfinite(logp_ref_chosen)) {
        throw Error("chosen sequence has zero probability");
    }
    const double chosen_margin = logp_policy_chosen - logp_ref_chosen;
    double rejected_margin = 0.0;
    if (logp_policy_rejected == kNegInf && logp_ref_rejected == kNegInf) {
        rejected_margin = 0.0;
    } else if (logp_policy_rejected == kNegInf) {
        return 0.0;
    } else {
        rejected_margin = logp_policy_rejected - logp_ref_rejected;  // +inf when only the reference excludes it
    }
    const double z = beta * (chosen_margin - rejected_margin);
    if (z == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
    return softplus(-z);
}

std::size_t export_dataset(std::span<const synthesis::PreferenceTriplet> triplets, const std::filesystem::path& path) {
    if (triplets.empty()) throw Error("refusing to export an empty preference dataset");
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        for (const auto& t : triplets) out << synthesis::encode_triplet(t) << '\n';
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move dataset into place: " + ec.message());
    }
    return triplets.size();
}

std::string invoke_update(Trainer& trainer, const std::filesystem::path& dataset, double beta) {
    if (!std::filesystem::exists(dataset)) throw UpdateFailed("dataset '" + dataset.string() + "' does not exist");
    std::string next;
    try {
        (void)synthesis::read_dataset(dataset);
        next = trainer.run_update(dataset, beta, trainer.current_ref_);
    } catch (const UpdateFailed&) {
        throw;
    } catch (const std::exception& e) {
        throw UpdateFailed(std::string(trainer.kind()) + " trainer: " + e.what());
    }
    if (next.empty()) throw UpdateFailed(trainer.kind() + " trainer returned an empty model reference");
    trainer.current_ref_ = next;
    ++trainer.update_count_;
    return next;
}

SubprocessTrainer::SubprocessTrainer(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
    if (argv_.empty()) throw ConfigError("trainer command is empty");
}

namespace {

std::string beta_text(double beta) {
    std::ostringstream os;
    os.precision(17);
    os << beta;
    return os.str();
}

std::optional<std::string> model_ref_line(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("MODEL_REF ", 0) == 0) {
            std::string ref = line.substr(10);
            while (!ref.empty() && std::isspace(static_cast<unsigned char>(ref.back()))) ref.pop_back();
            return ref;
        }
    }
    return std::nullopt;
}

}  // namespace

std::string SubprocessTrainer::run_update(const std::filesystem::path& dataset, double beta,
                                          const std::string& current_ref) {
    auto argv = argv_;
    argv.insert(argv.end(), {"--dataset", dataset.string(), "--beta", beta_text(beta), "--ref", current_ref});
    const auto res = run_process(argv, {}, timeout_);
    if (res.timed_out) throw UpdateFailed("trainer timed out");
    if (res.exit_code != 0) throw UpdateFailed("trainer exited with status " + std::to_string(res.exit_code));
    auto ref = model_ref_line(res.out);
    if (!ref) throw UpdateFailed("trainer printed no MODEL_REF line");
    return *ref;
}

HttpTrainer::HttpTrainer(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {
    if (url_.empty()) throw ConfigError("trainer endpoint is empty");
}

std::string HttpTrainer::run_update(const std::filesystem::path& dataset, double beta, const std::string& current_ref) {
    std::ifstream in(dataset, std::ios::binary);
    std::stringstream body;
    body << in.rdbuf();
    const auto reply =
        http_post(url_, body.str(), "application/x-ndjson", {{"X-Beta", beta_text(beta)}, {"X-Model-Ref", current_ref}},
                  timeout_);
    if (reply.status < 200 || reply.status >= 300) {
        throw UpdateFailed("trainer endpoint replied HTTP " + std::to_string(reply.status));
    }
    const auto j = nlohmann::json::parse(reply.body, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("model_ref")) return j.at("model_ref").get<std::string>();
    if (auto ref = model_ref_line(reply.body)) return *ref;
    std::string trimmed = reply.body;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
    trimmed.erase(trimmed.find_last_not_of(" \t\r\n") + 1);
    return trimmed;
}

MockTrainer::MockTrainer(std::shared_ptr<proposers::MockPolicyStore> store, double learning_rate)
    : store_(std::move(store)), learning_rate_(learning_rate) {}

namespace {

void count_ngrams(std::string_view s, long sign, std::map<std::string, long>& counts) {
    for (std::size_t n = 2; n <= 3; ++n) {
        for (std::size_t i = 0; i + n <= s.size(); ++i) counts[std::string(s.substr(i, n))] += sign;
    }
}

}  // namespace

proposers::MockPolicy reweight_policy(const proposers::MockPolicy& policy,
                                      std::span<const synthesis::PreferenceTriplet> triplets, double learning_rate) {
    proposers::MockPolicy next = policy;
    if (triplets.empty()) return next;
    std::map<std::string, long> diff;
    for (const auto& t : triplets) {
        count_ngrams(t.chosen.genotype, +1, diff);
        count_ngrams(t.rejected.genotype, -1, diff);
    }
    const double scale = learning_rate / static_cast<double>(triplets.size());
    for (const auto& [gram, d] : diff) {
        if (d <= 0) continue;
        const double bump = scale * static_cast<double>(d);
        auto it = std::find_if(next.vocabulary.begin(), next.vocabulary.end(),
                               [&](const auto& entry) { return entry.first == gram; });
        if (it != next.vocabulary.end()) it->second += bump;
        else next.vocabulary.emplace_back(gram, bump);
    }
    return next;
}

std::string MockTrainer::run_update(const std::filesystem::path& dataset, double, const std::string& current_ref) {
    const auto triplets = synthesis::read_dataset(dataset);
    recorded_.push_back(triplets.size());

    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : triplets) h = fnv1a64(synthesis::encode_triplet(t), h);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    std::string base = current_ref.substr(0, current_ref.rfind('@'));
    if (base.empty()) base = "mock";
    const std::string next = base + "@u" + std::to_string(recorded_.size()) + "-" + std::string(hex, 8);

    if (store_ && store_->contains(current_ref)) {
        store_->put(next, reweight_policy(*store_->get(current_ref), triplets, learning_rate_));
    }
    return next;
}

ValidationReport validate_dataset(std::span<const synthesis::PreferenceTriplet> dataset,
                                  const proposers::Proposer& policy, const proposers::Proposer& reference,
                                  double beta) {
    if (dataset.empty()) throw Error("cannot validate an empty dataset");
    for (const auto* p : {&policy, &reference}) {
        if (!p->binding().supports_logprob) {
            throw CapabilityError("proposer '" + p->binding().id + "' cannot score sequences");
        }
    }
    ValidationReport rep;
    for (const auto& t : dataset) {
        const std::string chosen = "<mol>" + t.chosen.genotype + "</mol>";
        const std::string rejected = "<mol>" + t.rejected.genotype + "</mol>";
        const double loss = dpo_loss(policy.sequence_logprob(t.prompt_text, chosen),
                                     policy.sequence_logprob(t.prompt_text, rejected),
                                     reference.sequence_logprob(t.prompt_text, chosen),
                                     reference.sequence_logprob(t.prompt_text, rejected), beta);
        rep.losses.push_back(loss);
    }
    rep.min = *std::min_element(rep.losses.begin(), rep.losses.end());
    rep.max = *std::max_element(rep.losses.begin(), rep.losses.end());
    double sum = 0.0;
    for (double l : rep.losses) sum += l;
    rep.mean = sum / static_cast<double>(rep.losses.size());
    return rep;
}

}  // namespace mcce::trainer
