#include <cmath>
#include <cstdlib>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mcce/engine.hpp"
#include "mcce/errors.hpp"

using namespace mcce;
using namespace mcce::engine;
using json = nlohmann::ordered_json;

namespace {

json small(std::size_t M, int G, std::uint64_t seed = 5) {
    return json{{"population_size", M}, {"generations", G}, {"seed", seed}, {"concurrency", 3}};
}

Population pop_of(std::vector<Candidate> members) {
    Population p;
    p.capacity = members.size();
    p.members = std::move(members);
    return p;
}

}  // namespace

TEST_CASE("alternation schedule") {
    auto count = [](double rho, std::size_t n) {
        std::size_t f = 0;
        for (std::size_t i = 0; i < n; ++i) f += slot_uses_frozen(i, rho);
        return f;
    };
    CHECK(count(0.5, 10) == 5);
    CHECK(count(0.0, 10) == 0);
    CHECK(count(1.0, 10) == 10);
    CHECK(count(0.3, 10) == 3);
    CHECK(count(0.25, 8) == 2);
    for (std::size_t n = 1; n < 50; ++n) {
        for (double rho : {0.1, 0.33, 0.5, 0.77}) CHECK(count(rho, n) == static_cast<std::size_t>(std::floor(n * rho)));
    }
    // ρ = 0.5 interleaves
    CHECK_FALSE(slot_uses_frozen(0, 0.5));
    CHECK(slot_uses_frozen(1, 0.5));
    CHECK_FALSE(slot_uses_frozen(2, 0.5));
}

TEST_CASE("parent selection") {
    Rng rng(1);
    SelectionConfig tour;
    CHECK_THROWS_AS(select_parents(pop_of({testutil::make_candidate(1, {0.5})}), tour, rng), Error);

    const auto two = pop_of({testutil::make_candidate(1, {0.2, 0.9}), testutil::make_candidate(2, {0.9, 0.2})});
    for (int i = 0; i < 50; ++i) {
        const auto [a, b] = select_parents(two, tour, rng);
        CHECK(a.id != b.id);
    }

    // a tournament over the whole population returns the rank-0 member first
    std::vector<Candidate> m;
    m.push_back(testutil::make_candidate(1, {0.1, 0.1}));
    m.push_back(testutil::make_candidate(2, {0.9, 0.9}));
    m.push_back(testutil::make_candidate(3, {0.5, 0.4}));
    m.push_back(testutil::make_candidate(4, {0.3, 0.2}));
    SelectionConfig full{SelectionConfig::Kind::Tournament, 4};
    for (int i = 0; i < 20; ++i) {
        const auto [a, b] = select_parents(pop_of(m), full, rng);
        CHECK(a.id == 2);
        CHECK(b.id == 3);
    }

    // roulette follows fitness + epsilon
    std::vector<Candidate> f;
    f.push_back(testutil::make_candidate(1, {0.0}));
    f.push_back(testutil::make_candidate(2, {0.25}));
    f.push_back(testutil::make_candidate(3, {0.75}));
    SelectionConfig prop{SelectionConfig::Kind::FitnessProportional, 3};
    std::map<CandidateId, int> firsts;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const auto [a, b] = select_parents(pop_of(f), prop, rng);
        CHECK(a.id != b.id);
        ++firsts[a.id];
    }
    CHECK(firsts[1] < 10);
    CHECK(firsts[3] / static_cast<double>(n) == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("config loading") {
    const auto c = load_config(json::object());
    CHECK(c.M == 100);
    CHECK(c.update_every_f == 200);
    CHECK(c.window_L == 100);
    CHECK(c.source["update_every"] == 200);

    CHECK_THROWS_AS(load_config(small(20, 0)), ConfigError);
    CHECK_THROWS_AS(load_config(small(21, 3)), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"alpha", 0.6}}), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"alternation", 1.5}}), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"population_size", "ten"}}), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"no_such_key", 1}}), ConfigError);
    // credentials are only ever named, never given inline
    CHECK_THROWS_AS(load_config(json{{"proposers", {{"frozen", {{"api_key", "sk-123"}}}}}}), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"proposers", {{"trainable", {{"id", "frozen"}}}}}}), ConfigError);
    CHECK_THROWS_AS(load_config(json{{"scorer", {{"kind", "subprocess"}}}}), ConfigError);

    const std::vector<std::string> ov{"generations=7", "selection.kind=proportional", "proposers.frozen.seed=9"};
    const auto o = load_config(small(20, 3), ov);
    CHECK(o.G == 7);
    CHECK(o.selection.kind == SelectionConfig::Kind::FitnessProportional);
    CHECK(o.frozen.seed == 9);
    const std::vector<std::string> bad_path{"selection.nope=1"};
    CHECK_THROWS_AS(load_config(small(20, 3), bad_path), ConfigError);
    const std::vector<std::string> bad_syntax{"generations"};
    CHECK_THROWS_AS(load_config(small(20, 3), bad_syntax), ConfigError);
    const std::vector<std::string> bad_value{"generations=0"};
    CHECK_THROWS_AS(load_config(small(20, 3), bad_value), ConfigError);

    testutil::TempDir dir;
    testutil::write_file(dir / "c.json", "{\"population_size\": 8");
    CHECK_THROWS_AS(load_config_file(dir / "c.json"), ConfigError);
    CHECK_THROWS_AS(load_config_file(dir / "absent.json"), ConfigError);
}

TEST_CASE("mock run: M/2 prompts, update cadence, determinism") {
    auto cfg = small(20, 6);
    cfg["update_every"] = 40;
    Engine e(load_config(cfg));
    const auto rep = e.run();
    REQUIRE(rep.timeline.size() == 6);
    CHECK(e.prompts_per_generation() == std::vector<std::size_t>(6, 10));

    std::map<int, std::size_t> frozen_per_gen, prompts_per_gen;
    for (const auto& r : e.store().records()) {
        if (r.kind != RecordKind::Prompt) continue;
        ++prompts_per_gen[r.generation];
        frozen_per_gen[r.generation] += r.proposer_id == e.config().frozen.id;
        CHECK(r.parent_ids.size() == 2);
    }
    for (int g = 1; g <= 6; ++g) {
        CHECK(prompts_per_gen[g] == 10);
        CHECK(frozen_per_gen[g] == 5);
    }

    // oracle for the update counter from the recorded evaluation counts
    std::uint64_t last = 0;
    std::size_t expected = 0;
    for (std::size_t g = 0; g < rep.timeline.size(); ++g) {
        if (rep.timeline[g].evaluations_used - last >= 40) {
            ++expected;
            last = rep.timeline[g].evaluations_used;
        }
    }
    CHECK(rep.updates.size() == expected);
    CHECK(expected >= 2);
    for (std::size_t g = 1; g < rep.timeline.size(); ++g) {
        CHECK(rep.timeline[g].evaluations_used >= rep.timeline[g - 1].evaluations_used);
        CHECK(rep.timeline[g].hv_archive >= rep.timeline[g - 1].hv_archive);
        CHECK(rep.population.members.size() <= 20);
    }
    for (const auto& m : rep.population.members) CHECK(m.valid);

    Engine again(load_config(cfg));
    const auto rep2 = again.run();
    REQUIRE(e.store().size() == again.store().size());
    for (std::size_t i = 0; i < e.store().size(); ++i) {
        CHECK(encode_record(e.store().records()[i]) == encode_record(again.store().records()[i]));
    }
    CHECK(rep2.manifest.dump() == rep.manifest.dump());
}

TEST_CASE("exactly one update in a short run") {
    auto cfg = small(20, 3);
    cfg["update_every"] = 40;
    Engine e(load_config(cfg));
    e.init_population();
    std::size_t fired = 0;
    for (int g = 0; g < 3; ++g) {
        e.step_generation();
        const auto before = e.updates().size();
        e.maybe_update();
        fired += e.updates().size() - before;
    }
    CHECK(e.state().evaluations_used >= 40);
    CHECK(e.state().evaluations_used < 80);
    CHECK(fired == 1);
    REQUIRE(e.updates().size() == 1);
    CHECK(e.updates()[0].outcome == "updated");
    CHECK(e.trainable().model_ref() == e.updates()[0].model_ref);
    CHECK(e.trainer().update_count() == 1);
}

TEST_CASE("failed update keeps the model reference") {
    auto cfg = small(20, 4);
    cfg["update_every"] = 30;
    cfg["trainer"] = {{"kind", "subprocess"}, {"command", std::string(MCCE_FIXTURES_DIR) + "/fake_trainer.py --fail"}};
    Engine e(load_config(cfg));
    const auto before = e.trainable().model_ref();
    const auto rep = e.run();
    REQUIRE_FALSE(rep.updates.empty());
    for (const auto& u : rep.updates) CHECK(u.outcome != "updated");
    CHECK(e.trainable().model_ref() == before);
    CHECK(rep.timeline.size() == 4);
}

TEST_CASE("subprocess trainer and output directory") {
    testutil::TempDir dir;
    auto cfg = small(10, 4);
    cfg["update_every"] = 20;
    cfg["trainer"] = {{"kind", "subprocess"}, {"command", std::string(MCCE_FIXTURES_DIR) + "/fake_trainer.py"}};
    Engine e(load_config(cfg), dir.path());
    const auto rep = e.run();
    for (const char* f : {"trajectory.jsonl", "pairs.jsonl", "metrics.csv", "summary.json", "manifest.json"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    std::size_t updated = 0, pairs = 0;
    for (const auto& u : rep.updates) {
        if (u.outcome != "updated") continue;
        ++updated;
        pairs += u.dataset_size;
        CHECK(std::filesystem::exists(dir / u.dataset_path));
        CHECK(u.model_ref.find("+sub" + std::to_string(u.dataset_size)) != std::string::npos);
    }
    CHECK(updated >= 1);
    CHECK(synthesis::read_dataset(dir / "pairs.jsonl").size() == pairs);
    const auto manifest = json::parse(testutil::slurp(dir / "manifest.json"));
    CHECK(manifest["updates"].size() == rep.updates.size());
    CHECK(manifest["final_model_ref"] == e.trainable().model_ref());
}

TEST_CASE("initial population from a file") {
    testutil::TempDir dir;
    std::string body;
    for (int i = 0; i < 40; ++i) body += "C" + std::string(static_cast<std::size_t>(i % 7 + 1), 'N') + std::string(static_cast<std::size_t>(i / 7), 'O') + "\n";
    body += "C(C\n\n";
    testutil::write_file(dir / "pool.smi", body);
    auto cfg = small(10, 1);
    cfg["init"] = {{"kind", "file"}, {"path", (dir / "pool.smi").string()}, {"sample_n", 8}};
    Engine a(load_config(cfg));
    Engine b(load_config(cfg));
    const auto& pa = a.init_population();
    const auto& pb = b.init_population();
    REQUIRE(pa.members.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(pa.members[i].genotype.text == pb.members[i].genotype.text);
    CHECK(a.store().records()[0].kind == RecordKind::Init);

    cfg["seed"] = 6;
    Engine c(load_config(cfg));
    std::size_t same = 0;
    const auto& pc = c.init_population();
    for (std::size_t i = 0; i < 8; ++i) same += pc.members[i].genotype.text == pa.members[i].genotype.text;
    CHECK(same < 8);

    testutil::write_file(dir / "tiny.smi", "CC\nCC\nC(C\n");
    cfg["init"] = {{"kind", "file"}, {"path", (dir / "tiny.smi").string()}};
    Engine d(load_config(cfg));
    CHECK_THROWS_AS(d.init_population(), InitFailed);
    cfg["init"] = {{"kind", "file"}, {"path", (dir / "absent.smi").string()}};
    Engine missing(load_config(cfg));
    CHECK_THROWS_AS(missing.init_population(), InitFailed);
}

TEST_CASE("external scorer run") {
    auto cfg = small(10, 3);
    cfg["scorer"] = {{"kind", "subprocess"}, {"command", std::string(MCCE_FIXTURES_DIR) + "/fake_scorer.py 5"}};
    Engine e(load_config(cfg));
    const auto rep = e.run();
    CHECK(rep.timeline.size() == 3);
    for (const auto& r : e.store().records()) {
        for (const auto& c : r.candidates) {
            if (!c.has_scores()) continue;
            REQUIRE(c.raw.size() == 5);
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(c.raw[j] == static_cast<double>((c.genotype.size() + j) % 5) / 4.0);
            }
        }
    }
}

TEST_CASE("remote proposer credentials stay out of artifacts") {
    testutil::ServerProcess server(MCCE_FIXTURES_DIR "/fake_http.py");
    testutil::TempDir dir;
    ::setenv("MCCE_ENGINE_TOKEN", "very-secret-token", 1);
    auto cfg = small(4, 1);
    cfg["init"] = {{"binding", "trainable"}};
    cfg["proposers"] = {{"frozen",
                         {{"kind", "remote"}, {"endpoint", server.url("/chat")}, {"model", "m1"}, {"auth_env", "MCCE_ENGINE_TOKEN"}}}};
    Engine e(load_config(cfg), dir.path());
    e.run();
    ::unsetenv("MCCE_ENGINE_TOKEN");
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path())) {
        if (!entry.is_regular_file()) continue;
        CHECK(testutil::slurp(entry.path()).find("very-secret-token") == std::string::npos);
    }
    CHECK(testutil::slurp(dir / "manifest.json").find("MCCE_ENGINE_TOKEN") != std::string::npos);
}
