#include "mcce/similarity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "mcce/errors.hpp"
#include "mcce/process.hpp"
#include "mcce/random.hpp"

namespace mcce::similarity {

Fingerprint Fingerprint::from_unsorted(std::vector<std::uint64_t> f) {
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    return Fingerprint{std::move(f)};
}

std::vector<Fingerprint> Fingerprinter::fingerprint_batch(std::span<const Genotype> gs) const {
    std::vector<Fingerprint> out;
    out.reserve(gs.size());
    for (const auto& g : gs) out.push_back(fingerprint(g));
    return out;
}

namespace {

Fingerprint ngram_features(std::string_view text) {
    std::vector<std::uint64_t> f;
    if (text.size() < 2) {
        f.push_back(fnv1a64(text));
        return Fingerprint::from_unsorted(std::move(f));
    }
    for (std::size_t n = 2; n <= 3; ++n) {
        for (std::size_t i = 0; i + n <= text.size(); ++i) f.push_back(fnv1a64(text.substr(i, n)));
    }
    return Fingerprint::from_unsorted(std::move(f));
}

}  // namespace

Fingerprint NgramFingerprinter::fingerprint(const Genotype& g) const {
    if (g.empty()) throw Error("cannot fingerprint an empty genotype");
    {
        std::lock_guard lock(mu_);
        if (auto it = memo_.find(g.text); it != memo_.end()) return it->second;
    }
    Fingerprint fp = ngram_features(g.text);
    std::lock_guard lock(mu_);
    memo_.emplace(g.text, fp);
    return fp;
}

ExternalFingerprinter::ExternalFingerprinter(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
    if (argv_.empty()) throw ConfigError("external fingerprinter command is empty");
}

Fingerprint ExternalFingerprinter::fingerprint(const Genotype& g) const {
    return fingerprint_batch(std::span<const Genotype>(&g, 1)).front();
}

std::vector<Fingerprint> ExternalFingerprinter::fingerprint_batch(std::span<const Genotype> gs) const {
    std::string input;
    for (const auto& g : gs) {
        if (g.empty()) throw Error("cannot fingerprint an empty genotype");
        input += g.text;
        input += '\n';
    }
    const auto res = run_process(argv_, input, timeout_);
    if (res.timed_out || res.exit_code != 0) {
        throw Error("external fingerprinter failed (exit " + std::to_string(res.exit_code) + ")");
    }
    std::vector<Fingerprint> out;
    std::istringstream lines(res.out);
    std::string line;
    while (out.size() < gs.size() && std::getline(lines, line)) {
        std::vector<std::uint64_t> f;
        std::istringstream toks(line);
        std::string tok;
        while (toks >> tok) {
            std::uint64_t v = 0;
            const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || p != tok.data() + tok.size()) {
                throw Error("external fingerprinter emitted non-integer feature '" + tok + "'");
            }
            f.push_back(v);
        }
        out.push_back(Fingerprint::from_unsorted(std::move(f)));
    }
    if (out.size() != gs.size()) {
        throw Error("external fingerprinter returned " + std::to_string(out.size()) + " lines for " +
                    std::to_string(gs.size()) + " genotypes");
    }
    return out;
}

const Fingerprinter& default_fingerprinter() {
    static const NgramFingerprinter instance;
    return instance;
}

Fingerprint fingerprint(const Genotype& g) { return default_fingerprinter().fingerprint(g); }

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
    if (a.features.empty() && b.features.empty()) return 1.0;
    std::size_t common = 0;
    auto ia = a.features.begin();
    auto ib = b.features.begin();
    while (ia != a.features.end() && ib != b.features.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    const std::size_t uni = a.features.size() + b.features.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

double prompt_similarity(const Genotype& candidate, std::span<const std::string> parent_genotypes,
                         const Fingerprinter& fp) {
    if (parent_genotypes.empty()) throw Error("prompt carries no parent genotype");
    const Fingerprint c = fp.fingerprint(candidate);
    double best = 0.0;
    for (const auto& p : parent_genotypes) best = std::max(best, tanimoto(c, fp.fingerprint(Genotype(p))));
    return best;
}

double prompt_similarity(const Candidate& c, const TrajectoryRecord& q, const Fingerprinter& fp) {
    return prompt_similarity(c.genotype, q.parent_genotypes, fp);
}

bool Interval::contains(double x) const noexcept {
    return x >= lo - kBoundTolerance && x <= hi + kBoundTolerance;
}

SimilarityStats compute_stats(std::span<const double> samples) {
    if (samples.size() < 2) {
        throw InsufficientHistory("similarity statistics need at least 2 samples, have " +
                                  std::to_string(samples.size()));
    }
    // Sorted summation keeps the result independent of history order.
    std::vector<double> xs(samples.begin(), samples.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mu = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    const double sigma = std::sqrt(ss / n);

    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    SimilarityStats s;
    s.mu = mu;
    s.sigma = sigma;
    s.sample_count = xs.size();
    s.band = {clamp01(mu - sigma), clamp01(mu + sigma)};
    s.i1 = {clamp01(mu + 2.0 * sigma / 3.0), clamp01(mu + sigma)};
    s.i2 = {clamp01(mu + sigma / 3.0), clamp01(mu + sigma)};
    s.i3 = {clamp01(mu), clamp01(mu + sigma)};
    return s;
}

std::vector<double> similarity_samples(std::span<const TrajectoryRecord> history) {
    std::vector<double> out;
    for (const auto& rec : history) {
        if (rec.kind != RecordKind::Prompt) continue;
        for (const auto& e : rec.candidates) {
            if (e.valid && e.sim) out.push_back(*e.sim);
        }
    }
    return out;
}

SimilarityStats compute_stats(std::span<const TrajectoryRecord> history) {
    const auto samples = similarity_samples(history);
    return compute_stats(std::span<const double>(samples));
}

}  // namespace mcce::similarity
