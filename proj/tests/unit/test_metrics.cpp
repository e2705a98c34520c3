#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mcce/engine.hpp"
#include "mcce/metrics.hpp"

using namespace mcce;
using namespace mcce::metrics;
using testutil::prompt_record;
using testutil::scored_entry;

namespace {

// Tanimoto over explicit 2/3-gram sets, no hashing.
double set_tanimoto(const std::string& a, const std::string& b) {
    auto grams = [](const std::string& s) {
        std::set<std::string> g;
        for (std::size_t n = 2; n <= 3; ++n)
            for (std::size_t i = 0; i + n <= s.size(); ++i) g.insert(std::to_string(n) + s.substr(i, n));
        return g;
    };
    const auto ga = grams(a), gb = grams(b);
    std::size_t inter = 0;
    for (const auto& x : ga) inter += gb.count(x);
    const std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

TrajectoryRecord init_with(std::vector<CandidateEntry> entries) {
    TrajectoryRecord r;
    r.kind = RecordKind::Init;
    r.candidates = std::move(entries);
    return r;
}

}  // namespace

TEST_CASE("top-k means") {
    CHECK(topk_mean({1, 5, 3}, 2) == 4.0);
    CHECK(topk_mean({1, 5, 3}, 10) == 3.0);
    CHECK(topk_mean({}, 10) == 0.0);

    CandidateEntry invalid;
    invalid.id = 9;
    invalid.genotype = "X";
    invalid.status = EntryStatus::Invalid;
    const std::vector<TrajectoryRecord> h{
        init_with({scored_entry(1, "A", 1.0, std::nullopt), scored_entry(2, "B", 4.0, std::nullopt)}),
        prompt_record(1, {scored_entry(3, "B", 4.0, 0.5), scored_entry(4, "C", 2.0, 0.5), invalid}),
    };
    CHECK(topk_fitness(h, 1) == 4.0);
    CHECK(topk_fitness(h, 2) == 3.0);  // B counted once
    CHECK(topk_fitness(h, 10) == doctest::Approx(7.0 / 3.0));
}

TEST_CASE("top-k AUC anchors") {
    const double K = 5.0, B = 1000.0;
    const std::vector<CurvePoint> flat{{0, K}, {B, K}};
    CHECK(topk_auc(flat, B, K) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<CurvePoint> ramp{{0, 0}, {B, K}};
    CHECK(topk_auc(ramp, B, K) == doctest::Approx(0.5).epsilon(1e-15));
    // last value is held flat to the budget
    const std::vector<CurvePoint> early{{0, 0}, {B / 2, K}};
    CHECK(topk_auc(early, B, K) == doctest::Approx(0.75).epsilon(1e-15));
    const std::vector<CurvePoint> step{{0, 1}, {200, 1}, {200, 3}, {1000, 3}};
    CHECK(topk_auc(step, B, K) == doctest::Approx((200.0 * 1 + 800.0 * 3) / (B * K)));
    const std::vector<CurvePoint> single{{0, 2.5}};
    CHECK(topk_auc(single, B, K) == doctest::Approx(0.5));
}

TEST_CASE("uniqueness, validity and diversity") {
    auto dup = scored_entry(3, "CCO", 0.5, 0.1);
    dup.status = EntryStatus::Duplicate;
    CandidateEntry bad;
    bad.id = 5;
    bad.genotype = "C((";
    bad.status = EntryStatus::Invalid;
    const std::vector<TrajectoryRecord> h{
        init_with({scored_entry(1, "NNN", 1.0, std::nullopt)}),
        prompt_record(1, {scored_entry(2, "CCO", 0.5, 0.1), dup}),
        prompt_record(2, {scored_entry(4, "CCN", 0.5, 0.1), bad}),
    };
    CHECK(uniqueness(h) == doctest::Approx(2.0 / 3.0));
    CHECK(validity(h) == doctest::Approx(0.75));
    CHECK(uniqueness(std::span<const TrajectoryRecord>(h).first(1)) == 0.0);

    const std::vector<Genotype> same{Genotype("CC"), Genotype("CC")};
    CHECK(diversity(same) == 0.0);
    const std::vector<Genotype> apart{Genotype("CCC"), Genotype("NNN")};
    CHECK(diversity(apart) == 1.0);
    const std::vector<std::string> texts{"CCO", "CCN", "OOO", "CNCO"};
    std::vector<Genotype> gs;
    for (const auto& t : texts) gs.emplace_back(t);
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < texts.size(); ++i)
        for (std::size_t j = i + 1; j < texts.size(); ++j, ++pairs) sum += set_tanimoto(texts[i], texts[j]);
    CHECK(diversity(gs) == doctest::Approx(1.0 - sum / pairs).epsilon(1e-12));
    CHECK(diversity(std::vector<Genotype>{Genotype("C")}) == 0.0);
}

TEST_CASE("number formatting and CSV round trip") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(120.0) == "120");
    CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);

    testutil::TempDir dir;
    emit_report({}, dir / "m.csv", dir / "s.json");
    CHECK(testutil::slurp(dir / "m.csv") == std::string(kCsvHeader) + "\n");

    engine::Engine e(engine::load_config(nlohmann::ordered_json{{"population_size", 20}, {"generations", 30}, {"seed", 3}}));
    const auto rep = e.run();
    REQUIRE(rep.timeline.size() == 30);
    emit_report(rep.timeline, dir / "m.csv", dir / "s.json");
    const auto csv = testutil::slurp(dir / "m.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
    const auto back = read_csv(dir / "m.csv");
    REQUIRE(back.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) CHECK(csv_row(back[i]) == csv_row(rep.timeline[i]));

    const auto replayed = replay_timeline(e.store().records());
    REQUIRE(replayed.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) CHECK(csv_row(replayed[i]) == csv_row(rep.timeline[i]));

    const auto summary = nlohmann::json::parse(testutil::slurp(dir / "s.json"));
    CHECK(summary["Top1F"] == rep.timeline.back().top1F);
    CHECK(summary["HV"] == rep.timeline.back().hv_archive);
    CHECK(summary["evaluations"] == rep.timeline.back().evaluations_used);

    for (const auto& s : rep.timeline) {
        for (double v : {s.top1auc, s.top10auc, s.top100auc, s.uniqueness, s.validity, s.diversity}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(s.top1F >= s.top10F);
        CHECK(s.top10F >= s.top100F);
        CHECK(s.top1auc_raw == doctest::Approx(s.top1auc * 5.0));
    }

    CHECK_THROWS(replay_timeline(std::span<const TrajectoryRecord>(e.store().records()).subspan(1)));
}
