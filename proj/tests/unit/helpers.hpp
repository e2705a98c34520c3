#pragma once

#include <algorithm>
#include <atomic>
#include <optional>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mcce/core.hpp"
#include "mcce/memory.hpp"
#include "mcce/pareto.hpp"

namespace testutil {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mcce-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << body;
}

inline std::vector<std::vector<double>> random_points(std::mt19937_64& gen, std::size_t n, std::size_t k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> pts(n, std::vector<double>(k));
    for (auto& p : pts) {
        for (auto& x : p) x = u(gen);
    }
    return pts;
}

/// Candidate with the given oriented vector; raw mirrors oriented.
inline mcce::Candidate make_candidate(mcce::CandidateId id, std::vector<double> oriented, std::string text = "") {
    mcce::Candidate c;
    c.id = id;
    c.genotype = mcce::Genotype(text.empty() ? "g" + std::to_string(id) : text);
    c.scores.raw = oriented;
    c.scores.oriented = std::move(oriented);
    c.scores.scalar_fitness = 0.0;
    for (double v : c.scores.oriented) c.scores.scalar_fitness += v;
    c.valid = true;
    return c;
}

/// Brute-force dominance-matrix oracle: a point's rank is the length of the
/// longest chain of points dominating it.
inline std::vector<std::size_t> brute_force_ranks(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            bool ge = true, gt = false;
            for (std::size_t k = 0; k < pts[i].size(); ++k) {
                if (pts[i][k] < pts[j][k]) ge = false;
                if (pts[i][k] > pts[j][k]) gt = true;
            }
            dom[i][j] = ge && gt;
        }
    }
    std::vector<std::size_t> rank(n, 0);
    std::vector<bool> assigned(n, false);
    std::size_t done = 0, r = 0;
    while (done < n) {
        std::vector<std::size_t> layer;
        for (std::size_t j = 0; j < n; ++j) {
            if (assigned[j]) continue;
            bool dominated = false;
            for (std::size_t i = 0; i < n && !dominated; ++i) dominated = !assigned[i] && dom[i][j];
            if (!dominated) layer.push_back(j);
        }
        for (auto j : layer) {
            rank[j] = r;
            assigned[j] = true;
        }
        done += layer.size();
        ++r;
    }
    return rank;
}

/// Monte-Carlo estimate of the volume dominated by pts inside [ref, 1]^K.
inline double monte_carlo_hv(const std::vector<std::vector<double>>& pts, const std::vector<double>& ref,
                             std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t k = ref.size();
    double box = 1.0;
    for (std::size_t d = 0; d < k; ++d) box *= 1.0 - ref[d];
    std::vector<double> x(k);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t d = 0; d < k; ++d) x[d] = ref[d] + u(gen) * (1.0 - ref[d]);
        for (const auto& p : pts) {
            bool inside = true;
            for (std::size_t d = 0; d < k && inside; ++d) inside = x[d] <= p[d];
            if (inside) {
                ++hits;
                break;
            }
        }
    }
    return box * static_cast<double>(hits) / static_cast<double>(samples);
}

}  // namespace testutil

#include <csignal>
#include <sys/wait.h>

namespace testutil {

/// Background fixture server that prints its port on the first stdout line.
class ServerProcess {
public:
    explicit ServerProcess(const std::string& script) {
        int fds[2];
        if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
        pid_ = ::fork();
        if (pid_ == 0) {
            ::dup2(fds[1], 1);
            ::close(fds[0]);
            ::close(fds[1]);
            ::execlp("python3", "python3", script.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(fds[1]);
        std::string line;
        char c;
        while (::read(fds[0], &c, 1) == 1 && c != '\n') line += c;
        ::close(fds[0]);
        port_ = std::stoi(line);
    }
    ~ServerProcess() {
        ::kill(pid_, SIGTERM);
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }
    ServerProcess(const ServerProcess&) = delete;
    ServerProcess& operator=(const ServerProcess&) = delete;

    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    pid_t pid_ = -1;
    int port_ = 0;
};

/// Valid single-objective entry whose fitness equals `score`.
inline mcce::CandidateEntry scored_entry(mcce::CandidateId id, std::string genotype, double score,
                                         std::optional<double> sim) {
    mcce::CandidateEntry e;
    e.id = id;
    e.genotype = std::move(genotype);
    e.valid = true;
    e.evaluated = true;
    e.raw = {score};
    e.oriented = {std::clamp(score, 0.0, 1.0)};
    e.fitness = score;
    e.sim = sim;
    return e;
}

inline mcce::TrajectoryRecord prompt_record(std::uint64_t pid, std::vector<mcce::CandidateEntry> entries,
                                            int generation = 1) {
    mcce::TrajectoryRecord r;
    r.kind = mcce::RecordKind::Prompt;
    r.prompt_id = pid;
    r.timestamp = pid;
    r.generation = generation;
    r.proposer_id = "p";
    r.model_ref = "m";
    r.parent_ids = {1, 2};
    r.parent_genotypes = {"CC", "CO"};
    r.prompt_text = "prompt " + std::to_string(pid);
    r.candidates = std::move(entries);
    return r;
}

/// Six-prompt window over a ballast record; with L=6, alpha=0.35, r=1 it emits
/// stages {I1:2, I2:1, I3:1, Half:1} and skips the last prompt.
inline std::vector<mcce::TrajectoryRecord> staged_history() {
    std::vector<mcce::TrajectoryRecord> h;
    // ballast outside the window pins mu near 0.5 and sigma near 0.2
    std::vector<mcce::CandidateEntry> ballast;
    for (mcce::CandidateId i = 0; i < 2000; ++i) ballast.push_back(scored_entry(1000 + i, "B" + std::to_string(i), 0.0, i % 2 ? 0.7 : 0.3));
    h.push_back(prompt_record(1, ballast, 0));
    // windows: I1 [0.633, 0.7], I2 [0.567, 0.7], I3 [0.5, 0.7], band [0.3, 0.7]
    h.push_back(prompt_record(2, {scored_entry(1, "P1c", 10, 0.67), scored_entry(2, "P1r", 1, 0.67)}));
    h.push_back(prompt_record(3, {scored_entry(3, "P2c", 9, 0.67), scored_entry(4, "P2r", 2, 0.67)}));
    h.push_back(prompt_record(4, {scored_entry(5, "P3c", 8, 0.67), scored_entry(6, "P3r", 3, 0.60)}));
    h.push_back(prompt_record(5, {scored_entry(7, "P4c", 7, 0.53), scored_entry(8, "P4r", 4, 0.67)}));
    h.push_back(prompt_record(6, {scored_entry(9, "P5c", 5, 0.40), scored_entry(10, "P5r", 0.5, 0.67)}));
    h.push_back(prompt_record(7, {scored_entry(11, "P6a", 6, 0.95), scored_entry(12, "P6b", 4.5, 0.95)}));
    return h;
}

}  // namespace testutil
