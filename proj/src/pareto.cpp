#include "mcce/pareto.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "mcce/errors.hpp"

namespace mcce::pareto {

std::size_t ParetoFront::rank_of(CandidateId id) const {
    for (std::size_t r = 0; r < ranks.size(); ++r) {
        if (std::find(ranks[r].begin(), ranks[r].end(), id) != ranks[r].end()) return r;
    }
    throw Error("candidate " + std::to_string(id) + " is not part of the front");
}

bool dominates(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("dominance test between vectors of size " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
    }
    bool strict = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] < b[k]) return false;
        if (a[k] > b[k]) strict = true;
    }
    return strict;
}

bool dominates(const ScoreVector& a, const ScoreVector& b) { return dominates(a.oriented, b.oriented); }

std::vector<std::vector<std::size_t>> nondominated_ranks(std::span<const std::vector<double>> points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by_me(n);
    std::vector<std::size_t> dominator_count(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(points[i], points[j])) {
                dominated_by_me[i].push_back(j);
                ++dominator_count[j];
            } else if (dominates(points[j], points[i])) {
                dominated_by_me[j].push_back(i);
                ++dominator_count[i];
            }
        }
    }
    std::vector<std::vector<std::size_t>> ranks;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        if (dominator_count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominated_by_me[i]) {
                if (--dominator_count[j] == 0) next.push_back(j);
            }
        }
        std::sort(next.begin(), next.end());
        ranks.push_back(std::move(current));
        current = std::move(next);
    }
    return ranks;
}

namespace {

// Crowding distance of one rank; `members` index into `pop`.
void assign_crowding(std::span<const Candidate> pop, const std::vector<std::size_t>& members,
                     std::map<CandidateId, double>& out) {
    if (members.size() <= 2) {
        for (std::size_t i : members) out[pop[i].id] = kBoundaryCrowding;
        return;
    }
    const std::size_t k_count = pop[members.front()].scores.size();
    std::vector<double> dist(members.size(), 0.0);
    std::vector<bool> boundary(members.size(), false);
    std::vector<std::size_t> order(members.size());
    for (std::size_t k = 0; k < k_count; ++k) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& ca = pop[members[a]];
            const auto& cb = pop[members[b]];
            const double va = ca.scores.oriented[k];
            const double vb = cb.scores.oriented[k];
            return va != vb ? va < vb : ca.id < cb.id;
        });
        boundary[order.front()] = true;
        boundary[order.back()] = true;
        const double lo = pop[members[order.front()]].scores.oriented[k];
        const double hi = pop[members[order.back()]].scores.oriented[k];
        if (hi - lo <= 0.0) continue;
        for (std::size_t p = 1; p + 1 < order.size(); ++p) {
            const double prev = pop[members[order[p - 1]]].scores.oriented[k];
            const double next = pop[members[order[p + 1]]].scores.oriented[k];
            dist[order[p]] += (next - prev) / (hi - lo);
        }
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        out[pop[members[i]].id] = boundary[i] ? kBoundaryCrowding : dist[i];
    }
}

std::vector<std::vector<double>> oriented_points(std::span<const Candidate> pop) {
    std::vector<std::vector<double>> pts;
    pts.reserve(pop.size());
    for (const auto& c : pop) pts.push_back(c.scores.oriented);
    return pts;
}

}  // namespace

ParetoFront nondominated_sort(std::span<const Candidate> pop) {
    ParetoFront front;
    if (pop.empty()) return front;
    const auto pts = oriented_points(pop);
    for (auto& rank : nondominated_ranks(pts)) {
        assign_crowding(pop, rank, front.crowding);
        std::vector<CandidateId> ids;
        ids.reserve(rank.size());
        for (std::size_t i : rank) ids.push_back(pop[i].id);
        std::sort(ids.begin(), ids.end());
        front.ranks.push_back(std::move(ids));
    }
    return front;
}

Population select_survivors(std::span<const Candidate> pop, std::size_t capacity) {
    if (capacity == 0) throw Error("survivor capacity must be positive");
    Population out;
    out.capacity = capacity;
    if (pop.empty()) return out;

    const auto pts = oriented_points(pop);
    for (const auto& rank : nondominated_ranks(pts)) {
        if (out.members.size() >= capacity) break;
        std::map<CandidateId, double> crowd;
        assign_crowding(pop, rank, crowd);
        std::vector<std::size_t> ordered = rank;
        std::sort(ordered.begin(), ordered.end(), [&](std::size_t a, std::size_t b) {
            const double ca = crowd.at(pop[a].id);
            const double cb = crowd.at(pop[b].id);
            return ca != cb ? ca > cb : pop[a].id < pop[b].id;
        });
        for (std::size_t i : ordered) {
            if (out.members.size() >= capacity) break;
            out.members.push_back(pop[i]);
        }
    }
    return out;
}

namespace {

using Point = std::vector<double>;

double inclusive_volume(const Point& p) {
    double v = 1.0;
    for (double x : p) v *= x;
    return v;
}

// Drops points weakly dominated by another (duplicates keep their first copy).
std::vector<Point> nondominated_only(std::vector<Point> pts) {
    std::vector<Point> out;
    out.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool keep = true;
        for (std::size_t j = 0; j < pts.size() && keep; ++j) {
            if (i == j) continue;
            if (dominates(pts[j], pts[i])) keep = false;
            else if (j < i && pts[j] == pts[i]) keep = false;
        }
        if (keep) out.push_back(pts[i]);
    }
    return out;
}

double area_2d(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), std::greater<>());
    double area = 0.0;
    double covered_y = 0.0;
    for (const auto& p : pts) {
        if (p[1] > covered_y) {
            area += p[0] * (p[1] - covered_y);
            covered_y = p[1];
        }
    }
    return area;
}

// WFG recursion on points shifted so the reference is the origin.
double wfg(std::vector<Point> pts) {
    if (pts.empty()) return 0.0;
    if (pts.size() == 1) return inclusive_volume(pts.front());
    const std::size_t dims = pts.front().size();
    if (dims == 1) {
        double best = 0.0;
        for (const auto& p : pts) best = std::max(best, p[0]);
        return best;
    }
    if (dims == 2) return area_2d(std::move(pts));

    // Full ordering so the summation order does not depend on input order.
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        if (a.back() != b.back()) return a.back() > b.back();
        return a > b;
    });
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<Point> limited;
        limited.reserve(pts.size() - i - 1);
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            Point q(dims);
            for (std::size_t k = 0; k < dims; ++k) q[k] = std::min(pts[j][k], pts[i][k]);
            limited.push_back(std::move(q));
        }
        total += inclusive_volume(pts[i]) - wfg(nondominated_only(std::move(limited)));
    }
    return total;
}

}  // namespace

HypervolumeResult hypervolume(std::span<const std::vector<double>> points, std::span<const double> ref) {
    HypervolumeResult result;
    result.reference_point.assign(ref.begin(), ref.end());
    result.point_count = points.size();
    if (ref.empty()) throw DimensionMismatch("hypervolume reference point is empty");

    std::vector<Point> shifted;
    shifted.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.size() != ref.size()) {
            throw DimensionMismatch("point " + std::to_string(i) + " has " + std::to_string(p.size()) +
                                    " coordinates, reference has " + std::to_string(ref.size()));
        }
        Point q(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (p[k] < ref[k]) {
                throw Error("point " + std::to_string(i) + " lies below the reference point in objective " +
                            std::to_string(k));
            }
            q[k] = p[k] - ref[k];
        }
        shifted.push_back(std::move(q));
    }
    result.value = wfg(nondominated_only(std::move(shifted)));
    return result;
}

double hypervolume_of(std::span<const Candidate> members) {
    if (members.empty()) return 0.0;
    const auto pts = oriented_points(members);
    const std::vector<double> ref(pts.front().size(), 0.0);
    return hypervolume(pts, ref).value;
}

void update_archive(std::vector<Candidate>& archive, std::span<const Candidate> newcomers) {
    for (const auto& c : newcomers) {
        if (!c.valid) continue;
        bool rejected = false;
        for (const auto& a : archive) {
            if (a.genotype == c.genotype || a.scores.oriented == c.scores.oriented ||
                dominates(a.scores, c.scores)) {
                rejected = true;
                break;
            }
        }
        if (rejected) continue;
        std::erase_if(archive, [&](const Candidate& a) { return dominates(c.scores, a.scores); });
        archive.push_back(c);
    }
}

}  // namespace mcce::pareto
