#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mcce/errors.hpp"
#include "mcce/random.hpp"
#include "mcce/similarity.hpp"

using namespace mcce;
using namespace mcce::similarity;

namespace {

Fingerprint set_of(std::vector<std::uint64_t> xs) { return Fingerprint::from_unsorted(std::move(xs)); }

// Reference n-gram fingerprint built straight from the definition.
std::set<std::uint64_t> reference_features(const std::string& s) {
    std::set<std::uint64_t> out;
    if (s.size() < 2) {
        out.insert(fnv1a64(s));
        return out;
    }
    for (std::size_t n : {2u, 3u}) {
        for (std::size_t i = 0; i + n <= s.size(); ++i) out.insert(fnv1a64(s.substr(i, n)));
    }
    return out;
}

class TableFingerprinter final : public Fingerprinter {
public:
    Fingerprint fingerprint(const Genotype& g) const override {
        if (g.text == "c") return set_of({1, 2, 3, 4});
        if (g.text == "p1") return set_of({4, 5});
        return set_of({1, 2, 3, 5});
    }
    std::string name() const override { return "table"; }
};

}  // namespace

TEST_CASE("fingerprint examples") {
    const auto cc = fingerprint(Genotype("CC"));
    REQUIRE(cc.size() == 1);
    CHECK(cc.features.front() == fnv1a64("CC"));
    CHECK(fingerprint(Genotype("abcd")).size() == 5);
    CHECK(fingerprint(Genotype("CCO")) == fingerprint(Genotype("CCO")));
    CHECK(fingerprint(Genotype("C")).size() == 1);
    CHECK_THROWS_AS(fingerprint(Genotype("")), Error);
}

TEST_CASE("fingerprint agrees with the n-gram definition") {
    Rng rng(4);
    const std::string alphabet = "CNOS()=c1";
    for (int t = 0; t < 300; ++t) {
        std::string s;
        const auto len = 1 + rng.below(30);
        for (std::uint64_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
        const auto ref = reference_features(s);
        const auto fp = fingerprint(Genotype(s));
        CHECK(std::vector<std::uint64_t>(ref.begin(), ref.end()) == fp.features);
    }
}

TEST_CASE("tanimoto examples") {
    CHECK(tanimoto(set_of({1, 2, 3}), set_of({3, 2, 1})) == 1.0);
    CHECK(tanimoto(set_of({1, 2}), set_of({3, 4})) == 0.0);
    CHECK(tanimoto(set_of({10, 20}), set_of({20, 30})) == doctest::Approx(1.0 / 3.0));
    CHECK(tanimoto(set_of({}), set_of({})) == 1.0);
    CHECK(tanimoto(set_of({}), set_of({1})) == 0.0);
}

TEST_CASE("tanimoto is symmetric and bounded") {
    std::mt19937_64 gen(12);
    std::uniform_int_distribution<std::uint64_t> v(0, 30);
    std::uniform_int_distribution<std::size_t> n(0, 15);
    for (int t = 0; t < 1000; ++t) {
        std::vector<std::uint64_t> a(n(gen)), b(n(gen));
        for (auto& x : a) x = v(gen);
        for (auto& x : b) x = v(gen);
        const auto fa = set_of(a), fb = set_of(b);
        const double s = tanimoto(fa, fb);
        CHECK(s == tanimoto(fb, fa));
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        std::set<std::uint64_t> sa(a.begin(), a.end()), sb(b.begin(), b.end()), inter, uni;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(inter, inter.end()));
        std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(uni, uni.end()));
        const double expect = uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
        CHECK(s == expect);
    }
}

TEST_CASE("prompt_similarity takes the max over parents") {
    const std::vector<std::string> parents{"CCCC", "NNNN"};
    CHECK(prompt_similarity(Genotype("CCCC"), parents) == 1.0);
    CHECK(prompt_similarity(Genotype("OSOS"), parents) == 0.0);
    // stub feature sets: t(c,p1) = 1/5 = 0.2, t(c,p2) = 3/5 = 0.6
    TableFingerprinter table;
    CHECK(prompt_similarity(Genotype("c"), std::vector<std::string>{"p1"}, table) == doctest::Approx(0.2));
    CHECK(prompt_similarity(Genotype("c"), std::vector<std::string>{"p2"}, table) == doctest::Approx(0.6));
    CHECK(prompt_similarity(Genotype("c"), std::vector<std::string>{"p1", "p2"}, table) == doctest::Approx(0.6));
    const double a = prompt_similarity(Genotype("CCNO"), std::vector<std::string>{"CCNN"});
    const double b = prompt_similarity(Genotype("CCNO"), std::vector<std::string>{"SSSO"});
    const double both = prompt_similarity(Genotype("CCNO"), std::vector<std::string>{"SSSO", "CCNN"});
    CHECK(both == std::max(a, b));
    CHECK_THROWS_AS(prompt_similarity(Genotype("CC"), std::vector<std::string>{}), Error);
}

TEST_CASE("compute_stats examples") {
    const std::vector<double> flat{0.5, 0.5};
    const auto f = compute_stats(flat);
    CHECK(f.mu == 0.5);
    CHECK(f.sigma == 0.0);

    const std::vector<double> two{0.2, 0.8};
    const auto s = compute_stats(two);
    constexpr double tol = 1e-12;
    CHECK(std::fabs(s.mu - 0.5) < tol);
    CHECK(std::fabs(s.sigma - 0.3) < tol);
    CHECK(std::fabs(s.i1.lo - 0.7) < tol);
    CHECK(std::fabs(s.i1.hi - 0.8) < tol);
    CHECK(std::fabs(s.i2.lo - 0.6) < tol);
    CHECK(std::fabs(s.i2.hi - 0.8) < tol);
    CHECK(std::fabs(s.i3.lo - 0.5) < tol);
    CHECK(std::fabs(s.i3.hi - 0.8) < tol);
    CHECK(std::fabs(s.band.lo - 0.2) < tol);
    CHECK(std::fabs(s.band.hi - 0.8) < tol);
    CHECK(s.in_band(0.2));
    CHECK(s.in_band(0.8));
    CHECK_FALSE(s.in_band(0.81));

    const std::vector<double> one{0.3};
    CHECK_THROWS_AS(compute_stats(one), InsufficientHistory);
}

TEST_CASE("compute_stats nesting and clamping over random samples") {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> n(2, 50);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> xs(n(gen));
        for (auto& x : xs) x = t % 3 == 0 ? std::round(u(gen)) : u(gen);
        const auto s = compute_stats(xs);
        CHECK(s.i2.lo <= s.i1.lo);
        CHECK(s.i3.lo <= s.i2.lo);
        CHECK(s.i1.hi == s.i2.hi);
        CHECK(s.i2.hi == s.i3.hi);
        for (const auto& iv : {s.band, s.i1, s.i2, s.i3}) {
            CHECK(iv.lo >= 0.0);
            CHECK(iv.hi <= 1.0);
            CHECK(iv.lo <= iv.hi);
        }
        // population sigma oracle
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        CHECK(s.sigma == doctest::Approx(std::sqrt(ss / static_cast<double>(xs.size()))).epsilon(1e-12));
        // order independence
        auto ys = xs;
        std::shuffle(ys.begin(), ys.end(), gen);
        const auto r = compute_stats(ys);
        CHECK(r.mu == s.mu);
        CHECK(r.sigma == s.sigma);
    }
}

TEST_CASE("similarity samples come from prompt records only") {
    TrajectoryRecord init;
    init.kind = RecordKind::Init;
    CandidateEntry e;
    e.id = 1;
    e.genotype = "CC";
    e.valid = true;
    e.oriented = {1.0};
    e.raw = {1.0};
    e.sim = 0.9;
    init.candidates.push_back(e);
    TrajectoryRecord p;
    p.kind = RecordKind::Prompt;
    p.prompt_id = 1;
    e.id = 2;
    e.sim = 0.4;
    p.candidates.push_back(e);
    e.id = 3;
    e.valid = false;
    e.sim = 0.7;
    p.candidates.push_back(e);
    const std::vector<TrajectoryRecord> hist{init, p};
    CHECK(similarity_samples(hist) == std::vector<double>{0.4});
    CHECK_THROWS_AS(compute_stats(std::span<const TrajectoryRecord>(hist)), InsufficientHistory);
}

TEST_CASE("external fingerprinter") {
    ExternalFingerprinter fp({MCCE_FIXTURES_DIR "/fake_fingerprinter.py"}, std::chrono::milliseconds(10000));
    CHECK(fp.name() == "external");
    const auto a = fp.fingerprint(Genotype("CCN"));
    CHECK(a.features == std::vector<std::uint64_t>{'C', 'N'});
    const std::vector<Genotype> batch{Genotype("CO"), Genotype("SS")};
    const auto fps = fp.fingerprint_batch(batch);
    REQUIRE(fps.size() == 2);
    CHECK(fps[1].features == std::vector<std::uint64_t>{'S'});
    CHECK(prompt_similarity(Genotype("CN"), std::vector<std::string>{"CNN"}, fp) == 1.0);
}
