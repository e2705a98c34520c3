#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mcce/errors.hpp"
#include "mcce/synthesis.hpp"

using namespace mcce;
using namespace mcce::synthesis;
using testutil::prompt_record;
using testutil::scored_entry;
using testutil::staged_history;

namespace {

// Independent mean / population sigma.
std::pair<double, double> moments(const std::vector<double>& xs) {
    const double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    return {mu, std::sqrt(ss / static_cast<double>(xs.size()))};
}

PoolCandidate pc(CandidateId id, double score, double sim = 0.5) {
    return {id, 1, "g" + std::to_string(id), score, sim};
}

}  // namespace

TEST_CASE("staged fixture hits every ladder stage") {
    const auto h = staged_history();
    std::vector<double> all;
    for (const auto& r : h)
        for (const auto& e : r.candidates) all.push_back(*e.sim);
    const auto [mu, sigma] = moments(all);

    const auto res = synthesize(h, 6, 0.35, 1, 42);
    CHECK(res.report.mu == doctest::Approx(mu).epsilon(1e-12));
    CHECK(res.report.sigma == doctest::Approx(sigma).epsilon(1e-12));
    CHECK(res.report.window_prompts == 6);
    CHECK(res.report.pool_size == 12);
    CHECK(res.report.skipped_prompts == 1);
    CHECK(res.report.triplet_stages == std::array<std::size_t, 4>{2, 1, 1, 1});
    REQUIRE(res.dataset.size() == 5);

    std::map<std::uint64_t, std::pair<std::string, std::string>> by_prompt;
    for (const auto& t : res.dataset) {
        by_prompt[t.prompt_id] = {t.chosen.genotype, t.rejected.genotype};
        CHECK(t.created_at == 42);
        CHECK(t.chosen.score > t.rejected.score);
    }
    CHECK(by_prompt[4] == std::pair<std::string, std::string>{"P3c", "P3r"});
    CHECK(res.dataset[2].rejected.stage == Stage::I2);
    CHECK(res.dataset[3].chosen.stage == Stage::I3);
    CHECK(res.dataset[4].chosen.stage == Stage::Half);
    CHECK(res.dataset[4].rejected.stage == Stage::I1);
    CHECK(by_prompt.count(7) == 0);

    const auto j = nlohmann::json::parse(res.report.to_json());
    CHECK(j["triplet_stages"]["Half"] == 1);
    CHECK(j["skipped_prompts"] == 1);

    for (const auto& t : res.dataset) CHECK(encode_triplet(decode_triplet(encode_triplet(t))) == encode_triplet(t));
}

TEST_CASE("stratify") {
    std::vector<PoolCandidate> c;
    for (CandidateId i = 1; i <= 10; ++i) c.push_back(pc(i, static_cast<double>(i)));
    const auto s = stratify(c, 0.3);
    CHECK(s.high == std::set<CandidateId>{10, 9, 8});
    CHECK(s.low == std::set<CandidateId>{1, 2, 3});
    CHECK(s.top_half == std::set<CandidateId>{6, 7, 8, 9, 10});
    CHECK(s.bottom_half == std::set<CandidateId>{1, 2, 3, 4, 5});

    std::vector<PoolCandidate> seven(c.begin(), c.begin() + 7);
    const auto s7 = stratify(seven, 0.3);
    CHECK(s7.high.size() == 3);
    CHECK(s7.top_half.size() == 4);
    CHECK(s7.bottom_half.size() == 4);

    // ties broken by id ascending
    std::vector<PoolCandidate> tied{pc(5, 1.0), pc(2, 1.0), pc(9, 1.0), pc(1, 0.0)};
    const auto st = stratify(tied, 0.25);
    CHECK(st.high == std::set<CandidateId>{2});
    CHECK(st.low == std::set<CandidateId>{1});

    const std::vector<PoolCandidate> one{pc(1, 1.0)};
    CHECK_THROWS_AS(stratify(one, 0.3), InsufficientCandidates);
    CHECK_THROWS_AS(stratify(c, 0.0), Error);
    CHECK_THROWS_AS(stratify(c, 0.6), Error);
}

TEST_CASE("thin history yields an empty dataset") {
    std::vector<TrajectoryRecord> h{prompt_record(1, {scored_entry(1, "C", 1, 0.5)})};
    auto res = synthesize(h, 4, 0.3, 1);
    CHECK(res.dataset.empty());
    CHECK_FALSE(res.report.note.empty());
    h.push_back(prompt_record(2, {scored_entry(2, "N", 1, 0.5)}));
    res = synthesize(h, 4, 0.3, 1);
    CHECK(res.dataset.empty());  // equal sims everywhere, equal scores
    CHECK_THROWS(synthesize(h, 0, 0.3, 1));
}

TEST_CASE("random histories satisfy the pair invariants") {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> nprompts(1, 12), ncands(0, 5), glen(1, 3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t L = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 8)(gen));
        const std::size_t r = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 3)(gen));
        const double alpha = std::uniform_real_distribution<double>(0.05, 0.5)(gen);
        std::vector<TrajectoryRecord> h;
        CandidateId next = 1;
        const int np = nprompts(gen);
        for (int p = 1; p <= np; ++p) {
            std::vector<CandidateEntry> es;
            const int nc = ncands(gen);
            for (int k = 0; k < nc; ++k) {
                std::string g;
                for (int q = glen(gen); q > 0; --q) g += "CNO"[gen() % 3];
                // coarse scores make ties and equal genotypes common
                es.push_back(scored_entry(next++, g, std::round(u(gen) * 4) / 4, std::round(u(gen) * 20) / 20));
            }
            h.push_back(prompt_record(static_cast<std::uint64_t>(p), es));
        }
        const auto res = synthesize(h, L, alpha, r);
        const auto again = synthesize(h, L, alpha, r);
        REQUIRE(res.dataset.size() == again.dataset.size());
        CHECK(res.dataset.size() <= L * r);
        CHECK(res.report.to_json() == again.report.to_json());
        if (res.dataset.empty()) continue;

        const auto stats = similarity::compute_stats(std::span<const TrajectoryRecord>(h));
        std::map<std::uint64_t, std::size_t> per_prompt;
        std::map<std::uint64_t, std::set<CandidateId>> chosen_ids, rejected_ids;
        const std::uint64_t first_window = static_cast<std::uint64_t>(np) + 1 - std::min<std::uint64_t>(L, np);
        for (std::size_t i = 0; i < res.dataset.size(); ++i) {
            const auto& t = res.dataset[i];
            CHECK(encode_triplet(t) == encode_triplet(again.dataset[i]));
            CHECK(t.chosen.score > t.rejected.score);
            CHECK(t.chosen.genotype != t.rejected.genotype);
            CHECK(t.prompt_id >= first_window);
            for (const auto* s : {&t.chosen, &t.rejected}) {
                CHECK(stats.in_band(s->sim));
                if (s->stage == Stage::I1) CHECK(stats.i1.contains(s->sim));
                if (s->stage == Stage::I2) CHECK(stats.i2.contains(s->sim));
                if (s->stage == Stage::I3) CHECK(stats.i3.contains(s->sim));
            }
            CHECK(chosen_ids[t.prompt_id].insert(t.chosen.id).second);
            CHECK(rejected_ids[t.prompt_id].insert(t.rejected.id).second);
            ++per_prompt[t.prompt_id];
        }
        for (const auto& [pid, n] : per_prompt) CHECK(n <= r);

        // fallback monotonicity: a first-pick side at stage s had no qualifier at any stricter stage
        std::vector<PoolCandidate> c_all;
        std::map<std::uint64_t, std::vector<PoolCandidate>> by_pid;
        for (const auto& rec : h) {
            if (rec.prompt_id < first_window) continue;
            for (const auto& c : pool_of(rec)) {
                c_all.push_back(c);
                if (stats.in_band(c.sim)) by_pid[rec.prompt_id].push_back(c);
            }
        }
        const auto pools = stratify(c_all, alpha);
        const std::array<const similarity::Interval*, 3> windows{&stats.i1, &stats.i2, &stats.i3};
        std::set<std::uint64_t> seen;
        for (const auto& t : res.dataset) {
            if (!seen.insert(t.prompt_id).second) continue;
            const auto& cands = by_pid[t.prompt_id];
            for (std::size_t s = 0; s < static_cast<std::size_t>(t.chosen.stage) && s < 3; ++s) {
                for (const auto& c : cands) CHECK_FALSE((pools.high.count(c.id) && windows[s]->contains(c.sim)));
            }
            for (std::size_t s = 0; s < static_cast<std::size_t>(t.rejected.stage) && s < 3; ++s) {
                for (const auto& c : cands) {
                    const bool admissible = c.id != t.chosen.id && c.score < t.chosen.score && c.genotype != t.chosen.genotype;
                    CHECK_FALSE((admissible && pools.low.count(c.id) && windows[s]->contains(c.sim)));
                }
            }
        }
        std::size_t hist = 0;
        for (auto v : res.report.triplet_stages) hist += v;
        CHECK(hist == res.dataset.size());
    }
}

TEST_CASE("dataset files") {
    testutil::TempDir dir;
    const auto res = synthesize(staged_history(), 6, 0.35, 1);
    std::string body;
    for (const auto& t : res.dataset) body += encode_triplet(t) + "\n";
    testutil::write_file(dir / "d.jsonl", body);
    CHECK(read_dataset(dir / "d.jsonl").size() == res.dataset.size());
    testutil::write_file(dir / "bad.jsonl", body + "{\"schema\": 1}\n");
    try {
        read_dataset(dir / "bad.jsonl");
        FAIL("expected parse error");
    } catch (const LogParseError& e) {
        CHECK(e.line() == res.dataset.size() + 1);
    }
}
