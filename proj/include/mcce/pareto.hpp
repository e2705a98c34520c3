#pragma once

#include <map>
#include <span>
#include <vector>

#include "mcce/core.hpp"

namespace mcce::pareto {

/// Crowding value assigned to boundary members of a rank.
inline constexpr double kBoundaryCrowding = 1e300;

struct ParetoFront {
    std::vector<std::vector<CandidateId>> ranks;  // rank 0 is the non-dominated set
    std::map<CandidateId, double> crowding;

    /// Rank index of a member; throws if the id is absent.
    std::size_t rank_of(CandidateId id) const;
};

struct HypervolumeResult {
    double value = 0.0;
    std::vector<double> reference_point;
    std::size_t point_count = 0;
};

/// a >= b componentwise with at least one strict inequality (maximization).
bool dominates(std::span<const double> a, std::span<const double> b);
bool dominates(const ScoreVector& a, const ScoreVector& b);

/// Index-level fast non-dominated sort; rank lists hold indices in ascending order.
std::vector<std::vector<std::size_t>> nondominated_ranks(std::span<const std::vector<double>> points);

ParetoFront nondominated_sort(std::span<const Candidate> pop);

/// Rank-by-rank fill up to capacity. The partially admitted rank is truncated by
/// descending crowding distance, ties by ascending id. Members come out ordered
/// by (rank, crowding desc, id).
Population select_survivors(std::span<const Candidate> pop, std::size_t capacity);

/// Exact volume of the union of boxes [ref, p] over all points (maximization).
/// Throws DimensionMismatch on ragged input and Error if a point lies below ref.
HypervolumeResult hypervolume(std::span<const std::vector<double>> points, std::span<const double> ref);

/// Origin-referenced hypervolume of oriented scores.
double hypervolume_of(std::span<const Candidate> members);

/// Merges newcomers into an all-time non-dominated archive. Dominated members are
/// evicted; a newcomer whose genotype or oriented vector is already archived is ignored.
void update_archive(std::vector<Candidate>& archive, std::span<const Candidate> newcomers);

}  // namespace mcce::pareto
