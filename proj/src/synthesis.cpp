#include "mcce/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mcce/errors.hpp"

namespace mcce::synthesis {

using json = nlohmann::ordered_json;

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::I1: return "I1";
        case Stage::I2: return "I2";
        case Stage::I3: return "I3";
        case Stage::Half: return "Half";
    }
    return "Half";
}

Stage stage_from_string(std::string_view s) {
    if (s == "I1") return Stage::I1;
    if (s == "I2") return Stage::I2;
    if (s == "I3") return Stage::I3;
    if (s == "Half") return Stage::Half;
    throw Error("unknown stage '" + std::string(s) + "'");
}

std::vector<PoolCandidate> pool_of(const TrajectoryRecord& rec) {
    std::vector<PoolCandidate> out;
    if (rec.kind != RecordKind::Prompt) return out;
    for (const auto& e : rec.candidates) {
        if (!e.has_scores() || !e.sim) continue;
        out.push_back({e.id, rec.prompt_id, e.genotype, e.fitness, *e.sim});
    }
    return out;
}

std::vector<PoolCandidate> global_filter(std::span<const PoolCandidate> candidates,
                                         const similarity::SimilarityStats& stats) {
    std::vector<PoolCandidate> out;
    for (const auto& c : candidates) {
        if (stats.in_band(c.sim)) out.push_back(c);
    }
    return out;
}

namespace {

std::size_t ceil_fraction(double fraction, std::size_t n) {
    // guard against 0.3 * 10 landing a hair above 3
    const double x = fraction * static_cast<double>(n);
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

}  // namespace

StratifiedPools stratify(std::span<const PoolCandidate> candidates, double alpha) {
    if (!(alpha > 0.0 && alpha <= 0.5)) throw Error("alpha must lie in (0, 0.5]");
    if (candidates.size() < 2) {
        throw InsufficientCandidates("stratification needs at least 2 candidates, have " +
                                     std::to_string(candidates.size()));
    }
    std::vector<const PoolCandidate*> sorted;
    for (const auto& c : candidates) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](const PoolCandidate* a, const PoolCandidate* b) {
        return a->score != b->score ? a->score > b->score : a->id < b->id;
    });
    StratifiedPools pools;
    pools.alpha = alpha;
    pools.n = sorted.size();
    const std::size_t n = sorted.size();
    const std::size_t tail = std::max<std::size_t>(1, ceil_fraction(alpha, n));
    const std::size_t half = ceil_fraction(0.5, n);
    for (std::size_t i = 0; i < n; ++i) {
        const CandidateId id = sorted[i]->id;
        if (i < tail) pools.high.insert(id);
        if (i >= n - tail) pools.low.insert(id);
        if (i < half) pools.top_half.insert(id);
        if (i >= n - half) pools.bottom_half.insert(id);
    }
    return pools;
}

namespace {

struct Ladder {
    const std::set<CandidateId>* tier;
    const std::set<CandidateId>* half;
    bool prefer_high;
};

template <typename Pred>
std::optional<PreferenceSide> pick(const std::vector<PoolCandidate>& filtered, const Ladder& ladder,
                                   const similarity::SimilarityStats& stats, Pred&& admissible) {
    const std::array<std::pair<Stage, const similarity::Interval*>, 3> windows{
        {{Stage::I1, &stats.i1}, {Stage::I2, &stats.i2}, {Stage::I3, &stats.i3}}};

    auto best_of = [&](auto&& in_stage) -> const PoolCandidate* {
        const PoolCandidate* best = nullptr;
        for (const auto& c : filtered) {
            if (!in_stage(c) || !admissible(c)) continue;
            if (!best) {
                best = &c;
                continue;
            }
            const bool better = ladder.prefer_high ? c.score > best->score : c.score < best->score;
            if (better || (c.score == best->score && c.id < best->id)) best = &c;
        }
        return best;
    };

    for (const auto& [stage, window] : windows) {
        const auto* c = best_of([&](const PoolCandidate& x) { return ladder.tier->count(x.id) && window->contains(x.sim); });
        if (c) return PreferenceSide{c->id, c->genotype, c->score, c->sim, stage};
    }
    const auto* c = best_of([&](const PoolCandidate& x) { return ladder.half->count(x.id) != 0; });
    if (c) return PreferenceSide{c->id, c->genotype, c->score, c->sim, Stage::Half};
    return std::nullopt;
}

}  // namespace

std::vector<PreferenceTriplet> construct_pairs(std::span<const TrajectoryRecord> window,
                                               const similarity::SimilarityStats& stats,
                                               const StratifiedPools& pools, std::size_t r,
                                               SynthesisReport* report, std::uint64_t created_at) {
    if (r == 0) throw Error("pairs per prompt must be at least 1");
    std::vector<PreferenceTriplet> out;
    const Ladder high{&pools.high, &pools.top_half, true};
    const Ladder low{&pools.low, &pools.bottom_half, false};

    for (const auto& rec : window) {
        if (rec.kind != RecordKind::Prompt) continue;
        const auto cq = pool_of(rec);
        const auto filtered = global_filter(cq, stats);
        std::set<CandidateId> used_chosen, used_rejected;
        std::size_t made = 0;
        for (std::size_t i = 0; i < r; ++i) {
            auto chosen = pick(filtered, high, stats,
                               [&](const PoolCandidate& c) { return used_chosen.count(c.id) == 0; });
            if (!chosen) break;
            auto rejected = pick(filtered, low, stats, [&](const PoolCandidate& c) {
                return used_rejected.count(c.id) == 0 && c.id != chosen->id && c.score < chosen->score &&
                       c.genotype != chosen->genotype;
            });
            if (!rejected) break;
            used_chosen.insert(chosen->id);
            used_rejected.insert(rejected->id);
            PreferenceTriplet t{rec.prompt_id, rec.prompt_text, std::move(*chosen), std::move(*rejected), created_at};
            if (report) {
                ++report->triplet_stages[static_cast<std::size_t>(t.stage())];
                ++report->chosen_stages[static_cast<std::size_t>(t.chosen.stage)];
                ++report->rejected_stages[static_cast<std::size_t>(t.rejected.stage)];
                ++report->emitted;
            }
            out.push_back(std::move(t));
            ++made;
        }
        if (made == 0 && report) ++report->skipped_prompts;
    }
    return out;
}

SynthesisResult synthesize(std::span<const TrajectoryRecord> history, std::size_t L, double alpha, std::size_t r,
                           std::uint64_t created_at) {
    if (L == 0) throw Error("window length must be at least 1");
    SynthesisResult result;
    auto& rep = result.report;

    const auto samples = similarity::similarity_samples(history);
    rep.sample_count = samples.size();

    std::vector<TrajectoryRecord> window;
    for (auto it = history.rbegin(); it != history.rend() && window.size() < L; ++it) {
        if (it->kind == RecordKind::Prompt) window.push_back(*it);
    }
    std::reverse(window.begin(), window.end());
    rep.window_prompts = window.size();

    std::vector<PoolCandidate> c_all;
    for (const auto& rec : window) {
        auto p = pool_of(rec);
        c_all.insert(c_all.end(), p.begin(), p.end());
    }
    rep.pool_size = c_all.size();

    if (samples.size() < 2) {
        rep.note = "insufficient similarity samples (" + std::to_string(samples.size()) + ")";
        return result;
    }
    const auto stats = similarity::compute_stats(std::span<const double>(samples));
    rep.mu = stats.mu;
    rep.sigma = stats.sigma;
    if (window.empty()) {
        rep.note = "empty window";
        return result;
    }
    if (c_all.size() < 2) {
        rep.note = "fewer than 2 scored candidates in the window";
        return result;
    }
    const auto pools = stratify(c_all, alpha);
    result.dataset = construct_pairs(window, stats, pools, r, &rep, created_at);
    return result;
}

std::string SynthesisReport::to_json() const {
    auto hist = [](const std::array<std::size_t, kStageCount>& h) {
        json j;
        for (std::size_t s = 0; s < kStageCount; ++s) j[std::string(to_string(static_cast<Stage>(s)))] = h[s];
        return j;
    };
    json j;
    j["sample_count"] = sample_count;
    j["mu"] = mu;
    j["sigma"] = sigma;
    j["sigma_form"] = "population";
    j["similarity_rule"] = "max-over-parents";
    j["stratification_universe"] = "window";
    j["window_prompts"] = window_prompts;
    j["pool_size"] = pool_size;
    j["emitted"] = emitted;
    j["skipped_prompts"] = skipped_prompts;
    j["triplet_stages"] = hist(triplet_stages);
    j["chosen_stages"] = hist(chosen_stages);
    j["rejected_stages"] = hist(rejected_stages);
    j["note"] = note;
    return j.dump();
}

namespace {

json side_meta(const PreferenceSide& s) {
    json j;
    j["id"] = s.id;
    j["score"] = s.score;
    j["sim"] = s.sim;
    j["stage"] = std::string(to_string(s.stage));
    return j;
}

PreferenceSide side_from(const json& meta, std::string genotype) {
    PreferenceSide s;
    s.id = meta.at("id").get<CandidateId>();
    s.genotype = std::move(genotype);
    s.score = meta.at("score").get<double>();
    s.sim = meta.at("sim").get<double>();
    s.stage = stage_from_string(meta.at("stage").get<std::string>());
    return s;
}

}  // namespace

std::string encode_triplet(const PreferenceTriplet& t) {
    json j;
    j["schema"] = kDatasetSchemaVersion;
    j["prompt_id"] = t.prompt_id;
    j["prompt"] = t.prompt_text;
    j["chosen"] = t.chosen.genotype;
    j["rejected"] = t.rejected.genotype;
    json meta;
    meta["chosen"] = side_meta(t.chosen);
    meta["rejected"] = side_meta(t.rejected);
    meta["created_at"] = t.created_at;
    j["metadata"] = std::move(meta);
    return j.dump();
}

PreferenceTriplet decode_triplet(std::string_view line) {
    const json j = json::parse(line);
    if (j.at("schema").get<int>() != kDatasetSchemaVersion) throw Error("unsupported dataset schema");
    PreferenceTriplet t;
    t.prompt_id = j.at("prompt_id").get<std::uint64_t>();
    t.prompt_text = j.at("prompt").get<std::string>();
    const auto& meta = j.at("metadata");
    t.chosen = side_from(meta.at("chosen"), j.at("chosen").get<std::string>());
    t.rejected = side_from(meta.at("rejected"), j.at("rejected").get<std::string>());
    t.created_at = meta.at("created_at").get<std::uint64_t>();
    return t;
}

std::vector<PreferenceTriplet> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
    std::vector<PreferenceTriplet> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        try {
            out.push_back(decode_triplet(line));
        } catch (const std::exception& e) {
            throw LogParseError(n, e.what());
        }
    }
    return out;
}

}  // namespace mcce::synthesis
