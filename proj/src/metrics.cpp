#include "mcce/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mcce/errors.hpp"
#include "mcce/pareto.hpp"
#include "mcce/similarity.hpp"

namespace mcce::metrics {

double topk_mean(std::vector<double> values, std::size_t k) {
    if (values.empty() || k == 0) return 0.0;
    k = std::min(k, values.size());
    std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                      std::greater<>());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += values[i];
    return sum / static_cast<double>(k);
}

namespace {

void collect_best(const TrajectoryRecord& rec, std::map<std::string, double>& best) {
    for (const auto& e : rec.candidates) {
        if (!e.has_scores()) continue;
        auto [it, inserted] = best.emplace(e.genotype, e.fitness);
        if (!inserted) it->second = std::max(it->second, e.fitness);
    }
}

std::vector<double> values_of(const std::map<std::string, double>& m) {
    std::vector<double> v;
    v.reserve(m.size());
    for (const auto& [g, f] : m) v.push_back(f);
    return v;
}

}  // namespace

double topk_fitness(std::span<const TrajectoryRecord> history, std::size_t k) {
    std::map<std::string, double> best;
    for (const auto& rec : history) collect_best(rec, best);
    return topk_mean(values_of(best), k);
}

double topk_auc(std::span<const CurvePoint> curve, double budget, double max_fitness) {
    if (curve.empty() || !(budget > 0.0) || !(max_fitness > 0.0)) return 0.0;
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double a = std::min(curve[i - 1].evals, budget);
        const double b = std::min(curve[i].evals, budget);
        area += (b - a) * 0.5 * (curve[i - 1].value + curve[i].value);
    }
    if (curve.back().evals < budget) area += (budget - curve.back().evals) * curve.back().value;
    return area / (budget * max_fitness);
}

namespace {

struct OffspringCounts {
    std::size_t parsed = 0, valid = 0;
    std::set<std::string> distinct;
};

OffspringCounts count_offspring(std::span<const TrajectoryRecord> history) {
    OffspringCounts c;
    for (const auto& rec : history) {
        if (rec.kind != RecordKind::Prompt) continue;
        for (const auto& e : rec.candidates) {
            ++c.parsed;
            if (e.valid) {
                ++c.valid;
                c.distinct.insert(e.genotype);
            }
        }
    }
    return c;
}

}  // namespace

double uniqueness(std::span<const TrajectoryRecord> history) {
    const auto c = count_offspring(history);
    return c.valid == 0 ? 0.0 : static_cast<double>(c.distinct.size()) / static_cast<double>(c.valid);
}

double validity(std::span<const TrajectoryRecord> history) {
    const auto c = count_offspring(history);
    return c.parsed == 0 ? 0.0 : static_cast<double>(c.valid) / static_cast<double>(c.parsed);
}

double diversity(std::span<const Genotype> population) {
    if (population.size() < 2) return 0.0;
    std::vector<similarity::Fingerprint> fps;
    fps.reserve(population.size());
    for (const auto& g : population) fps.push_back(similarity::fingerprint(g));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < fps.size(); ++i) {
        for (std::size_t j = i + 1; j < fps.size(); ++j) {
            sum += similarity::tanimoto(fps[i], fps[j]);
            ++pairs;
        }
    }
    return 1.0 - sum / static_cast<double>(pairs);
}

double diversity(std::span<const Candidate> population) {
    std::vector<const Candidate*> sorted;
    for (const auto& c : population) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](const Candidate* a, const Candidate* b) { return a->id < b->id; });
    std::vector<Genotype> gs;
    gs.reserve(sorted.size());
    for (const auto* c : sorted) gs.push_back(c->genotype);
    return diversity(std::span<const Genotype>(gs));
}

MetricsTracker::MetricsTracker(std::size_t objective_count, double budget)
    : objective_count_(objective_count), budget_(budget) {}

void MetricsTracker::observe(const TrajectoryRecord& rec) {
    collect_best(rec, best_ever_);
    if (rec.kind != RecordKind::Prompt) return;
    for (const auto& e : rec.candidates) {
        ++parsed_;
        if (e.valid) {
            ++valid_;
            distinct_valid_.insert(e.genotype);
        }
    }
}

void MetricsTracker::mark_start() {
    const auto vals = values_of(best_ever_);
    curve1_.push_back({0.0, topk_mean(vals, 1)});
    curve10_.push_back({0.0, topk_mean(vals, 10)});
    curve100_.push_back({0.0, topk_mean(vals, 100)});
}

MetricsSnapshot MetricsTracker::snapshot(int generation, std::uint64_t evaluations_used,
                                         std::span<const Candidate> population, std::span<const Candidate> archive) {
    if (curve1_.empty()) mark_start();
    MetricsSnapshot s;
    s.generation = generation;
    s.evaluations_used = evaluations_used;
    const auto vals = values_of(best_ever_);
    s.top1F = topk_mean(vals, 1);
    s.top10F = topk_mean(vals, 10);
    s.top100F = topk_mean(vals, 100);
    const double ev = static_cast<double>(evaluations_used);
    curve1_.push_back({ev, s.top1F});
    curve10_.push_back({ev, s.top10F});
    curve100_.push_back({ev, s.top100F});
    const double kmax = static_cast<double>(objective_count_);
    s.top1auc = topk_auc(curve1_, budget_, kmax);
    s.top10auc = topk_auc(curve10_, budget_, kmax);
    s.top100auc = topk_auc(curve100_, budget_, kmax);
    s.top1auc_raw = s.top1auc * kmax;
    s.top10auc_raw = s.top10auc * kmax;
    s.top100auc_raw = s.top100auc * kmax;
    s.uniqueness = valid_ == 0 ? 0.0 : static_cast<double>(distinct_valid_.size()) / static_cast<double>(valid_);
    s.validity = parsed_ == 0 ? 0.0 : static_cast<double>(valid_) / static_cast<double>(parsed_);
    s.diversity = diversity(population);
    s.hv_population = pareto::hypervolume_of(population);
    s.hv_archive = pareto::hypervolume_of(archive);
    return s;
}

namespace {

Candidate candidate_from(const CandidateEntry& e, const TrajectoryRecord& rec) {
    Candidate c;
    c.id = e.id;
    c.genotype = Genotype(e.genotype);
    c.scores.raw = e.raw;
    c.scores.oriented = e.oriented;
    c.scores.scalar_fitness = e.fitness;
    c.valid = e.valid;
    c.proposer_id = rec.proposer_id;
    c.parent_ids = rec.parent_ids;
    c.generation = rec.generation;
    return c;
}

}  // namespace

std::vector<MetricsSnapshot> replay_timeline(std::span<const TrajectoryRecord> records) {
    if (records.empty()) return {};
    const auto& init = records.front();
    if (init.kind != RecordKind::Init || !init.run) throw Error("log does not start with an init record");
    const auto& header = *init.run;
    const double budget = static_cast<double>(header.generations) * static_cast<double>(header.capacity);
    MetricsTracker tracker(header.objectives.size(), budget);

    std::vector<Candidate> population;
    for (const auto& e : init.candidates) {
        if (e.has_scores()) population.push_back(candidate_from(e, init));
    }
    std::vector<Candidate> archive;
    pareto::update_archive(archive, population);
    tracker.observe(init);
    tracker.mark_start();

    std::vector<MetricsSnapshot> out;
    std::uint64_t evals = 0;
    std::size_t i = 1;
    while (i < records.size()) {
        const int gen = records[i].generation;
        std::vector<Candidate> offspring;
        for (; i < records.size() && records[i].generation == gen; ++i) {
            const auto& rec = records[i];
            if (rec.kind != RecordKind::Prompt) throw Error("unexpected init record after the first line");
            tracker.observe(rec);
            for (const auto& e : rec.candidates) {
                if (e.evaluated) ++evals;
                if (e.status == EntryStatus::Scored && e.has_scores()) offspring.push_back(candidate_from(e, rec));
            }
        }
        std::vector<Candidate> pool = population;
        pool.insert(pool.end(), offspring.begin(), offspring.end());
        population = pareto::select_survivors(pool, header.capacity).members;
        pareto::update_archive(archive, offspring);
        out.push_back(tracker.snapshot(gen, evals, population, archive));
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, p);
}

std::string csv_row(const MetricsSnapshot& s) {
    std::string row = std::to_string(s.evaluations_used);
    for (double v : {s.top1F, s.top10F, s.top100F, s.top1auc, s.top10auc, s.top100auc, s.uniqueness, s.diversity,
                     s.validity, s.hv_population, s.hv_archive}) {
        row += ',';
        row += format_number(v);
    }
    return row;
}

void emit_report(std::span<const MetricsSnapshot> timeline, const std::filesystem::path& csv_path,
                 const std::filesystem::path& summary_path) {
    {
        std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
        if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
        csv << kCsvHeader << '\n';
        for (const auto& s : timeline) csv << csv_row(s) << '\n';
        if (!csv) throw IoError("write to '" + csv_path.string() + "' failed");
    }
    nlohmann::ordered_json j;
    j["snapshots"] = timeline.size();
    if (!timeline.empty()) {
        const auto& s = timeline.back();
        j["generation"] = s.generation;
        j["evaluations"] = s.evaluations_used;
        j["Top1F"] = s.top1F;
        j["Top10F"] = s.top10F;
        j["Top100F"] = s.top100F;
        j["Top1auc"] = s.top1auc_raw;
        j["Top10auc"] = s.top10auc_raw;
        j["Top100auc"] = s.top100auc_raw;
        j["Top1auc_normalized"] = s.top1auc;
        j["Top10auc_normalized"] = s.top10auc;
        j["Top100auc_normalized"] = s.top100auc;
        j["Uniqueness"] = s.uniqueness;
        j["Diversity"] = s.diversity;
        j["HV"] = s.hv_archive;
        j["HV_population"] = s.hv_population;
        j["Validity"] = s.validity;
    }
    std::ofstream out(summary_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + summary_path.string() + "'");
    out << j.dump(2) << '\n';
}

std::vector<MetricsSnapshot> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw LogParseError(1, "unexpected metrics CSV header");
    std::vector<MetricsSnapshot> out;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        std::vector<double> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || p != cell.data() + cell.size()) throw LogParseError(n, "bad number '" + cell + "'");
            cols.push_back(v);
        }
        if (cols.size() != 12) throw LogParseError(n, "expected 12 columns");
        MetricsSnapshot s;
        s.evaluations_used = static_cast<std::uint64_t>(cols[0]);
        s.top1F = cols[1];
        s.top10F = cols[2];
        s.top100F = cols[3];
        s.top1auc = cols[4];
        s.top10auc = cols[5];
        s.top100auc = cols[6];
        s.uniqueness = cols[7];
        s.diversity = cols[8];
        s.validity = cols[9];
        s.hv_population = cols[10];
        s.hv_archive = cols[11];
        out.push_back(s);
    }
    return out;
}

}  // namespace mcce::metrics
