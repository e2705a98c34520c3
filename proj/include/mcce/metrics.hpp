#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcce/core.hpp"
#include "mcce/memory.hpp"

namespace mcce::metrics {

inline constexpr std::string_view kCsvHeader =
    "evals,top1F,top10F,top100F,top1auc,top10auc,top100auc,uniq,div,validity,hv_pop,hv_arch";

struct MetricsSnapshot {
    int generation = 0;
    std::uint64_t evaluations_used = 0;
    double top1F = 0.0, top10F = 0.0, top100F = 0.0;
    // normalized to [0,1]: area / (budget * K)
    double top1auc = 0.0, top10auc = 0.0, top100auc = 0.0;
    // fitness-scale time average: area / budget
    double top1auc_raw = 0.0, top10auc_raw = 0.0, top100auc_raw = 0.0;
    double uniqueness = 0.0;
    double diversity = 0.0;
    double validity = 0.0;
    double hv_population = 0.0;
    double hv_archive = 0.0;
};

/// Mean of the k largest values (k truncated to the available count); 0 when empty.
double topk_mean(std::vector<double> values, std::size_t k);

/// Mean scalar fitness of the k best-ever distinct valid genotypes in the history.
double topk_fitness(std::span<const TrajectoryRecord> history, std::size_t k);

struct CurvePoint {
    double evals = 0.0;
    double value = 0.0;
};

/// Trapezoid area under a top-k curve over [first point, budget], with the last
/// value held flat up to the budget, divided by budget * max_fitness.
double topk_auc(std::span<const CurvePoint> curve, double budget, double max_fitness);

/// distinct valid / valid over offspring proposals (initial population excluded); 0 if none.
double uniqueness(std::span<const TrajectoryRecord> history);
/// valid / parsed over offspring proposals; 0 if none.
double validity(std::span<const TrajectoryRecord> history);
/// 1 - mean pairwise tanimoto of default fingerprints; 0 for fewer than two genotypes.
double diversity(std::span<const Genotype> population);
double diversity(std::span<const Candidate> population);

/// Incremental metric state fed record by record; shared by the live engine and
/// offline replay so both produce identical snapshots.
class MetricsTracker {
public:
    MetricsTracker(std::size_t objective_count, double budget);

    void observe(const TrajectoryRecord& rec);
    /// Records the evaluation-0 curve point after the initial population.
    void mark_start();
    MetricsSnapshot snapshot(int generation, std::uint64_t evaluations_used, std::span<const Candidate> population,
                             std::span<const Candidate> archive);

private:
    std::size_t objective_count_;
    double budget_;
    std::map<std::string, double> best_ever_;
    std::size_t parsed_ = 0;
    std::size_t valid_ = 0;
    std::set<std::string> distinct_valid_;
    std::vector<CurvePoint> curve1_, curve10_, curve100_;
};

/// Rebuilds the per-generation snapshot timeline from a trajectory log alone.
/// The log must start with an init record carrying the run header.
std::vector<MetricsSnapshot> replay_timeline(std::span<const TrajectoryRecord> records);

std::string format_number(double v);
std::string csv_row(const MetricsSnapshot& s);

/// Writes the per-snapshot CSV and a JSON summary of the last snapshot.
void emit_report(std::span<const MetricsSnapshot> timeline, const std::filesystem::path& csv_path,
                 const std::filesystem::path& summary_path);

/// Parses a metrics CSV back into snapshots (CSV columns only).
std::vector<MetricsSnapshot> read_csv(const std::filesystem::path& path);

}  // namespace mcce::metrics
