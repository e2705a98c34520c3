#include "mcce/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "mcce/engine.hpp"
#include "mcce/errors.hpp"
#include "mcce/metrics.hpp"
#include "mcce/objectives.hpp"
#include "mcce/pareto.hpp"
#include "mcce/similarity.hpp"
#include "mcce/synthesis.hpp"
#include "mcce/version.hpp"

namespace mcce::cli {

namespace {

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

std::vector<double> parse_row(const std::string& line, std::size_t lineno) {
    std::vector<double> row;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size() || !std::isfinite(v)) {
            throw ConfigError("line " + std::to_string(lineno) + ": '" + tok + "' is not a number");
        }
        row.push_back(v);
    }
    return row;
}

std::string hv_text(double v) {
    auto s = metrics::format_number(v);
    if (s.find_first_of(".eE") == std::string::npos && s != "inf" && s != "nan") s += ".0";
    return s;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_dir,
            std::ostream& out) {
    auto config = engine::load_config_file(config_path, overrides);
    engine::Engine eng(std::move(config), std::filesystem::path(out_dir));
    const auto report = eng.run();
    const auto& last = report.timeline.back();
    out << "generations " << report.timeline.size() << ", evaluations " << last.evaluations_used << ", hv_archive "
        << metrics::format_number(last.hv_archive) << ", top1F " << metrics::format_number(last.top1F)
        << ", updates " << eng.trainer().update_count() << "\n";
    return kOk;
}

int cmd_synthesize(const std::string& log_path, std::size_t L, double alpha, std::size_t r, const std::string& out_path,
                   std::string report_path, std::ostream& out) {
    const auto history = replay(log_path);
    const auto result = synthesis::synthesize(history, L, alpha, r, history.empty() ? 0 : history.back().timestamp);
    {
        std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write '" + out_path + "'");
        for (const auto& t : result.dataset) f << synthesis::encode_triplet(t) << '\n';
        if (!f) throw IoError("write to '" + out_path + "' failed");
    }
    if (report_path.empty()) report_path = out_path + ".report.json";
    std::ofstream rep(report_path, std::ios::binary | std::ios::trunc);
    if (!rep) throw IoError("cannot write '" + report_path + "'");
    rep << nlohmann::ordered_json::parse(result.report.to_json()).dump(2) << '\n';
    out << result.dataset.size() << " triplets from " << result.report.window_prompts << " prompts\n";
    return kOk;
}

int cmd_metrics(const std::string& log_path, const std::string& out_path, std::string summary_path,
                std::ostream& out) {
    const auto history = replay(log_path);
    const auto timeline = metrics::replay_timeline(history);
    if (summary_path.empty()) {
        summary_path = (std::filesystem::path(out_path).parent_path() / "summary.replay.json").string();
    }
    metrics::emit_report(timeline, out_path, summary_path);
    out << timeline.size() << " snapshots\n";
    return kOk;
}

int cmd_hv(const std::string& points_path, const std::string& ref_text, std::ostream& out) {
    std::ifstream in(points_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open points file '" + points_path + "'");
    std::vector<std::vector<double>> points;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        auto row = parse_row(line, n);
        if (row.empty()) continue;
        if (!points.empty() && row.size() != points.front().size()) {
            throw ConfigError("line " + std::to_string(n) + ": expected " + std::to_string(points.front().size()) +
                              " values, got " + std::to_string(row.size()));
        }
        points.push_back(std::move(row));
    }
    std::vector<double> ref;
    if (!ref_text.empty()) {
        std::string t = ref_text;
        for (auto& c : t) {
            if (c == ',') c = ' ';
        }
        ref = parse_row(t, 0);
    }
    if (points.empty()) {
        out << "0.0\n";
        return kOk;
    }
    if (ref.empty()) ref.assign(points.front().size(), 0.0);
    if (ref.size() != points.front().size()) throw ConfigError("reference point has the wrong dimension");
    try {
        out << hv_text(pareto::hypervolume(points, ref).value) << "\n";
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return kOk;
}

struct Mismatch {
    std::uint64_t prompt_id;
    CandidateId id;
    std::string what;
};

int cmd_verify(const std::string& log_path, std::ostream& out, std::ostream& err) {
    const auto history = replay(log_path);
    if (history.empty()) {
        out << "0 records verified\n";
        return kOk;
    }
    if (history.front().kind != RecordKind::Init || !history.front().run) {
        throw LogParseError(1, "log does not start with an init record");
    }
    const auto& header = *history.front().run;
    const ObjectiveRegistry registry(header.objectives);
    const bool builtin = header.scorer == "builtin:surrogate";
    const bool ngram = header.fingerprinter == similarity::default_fingerprinter().name();
    constexpr double tol = 1e-12;
    auto differs = [](double a, double b) { return !(std::fabs(a - b) <= tol); };

    std::vector<Mismatch> bad;
    std::size_t sims_checked = 0;
    for (const auto& rec : history) {
        if (rec.kind == RecordKind::Prompt) {
            const auto parents = proposers::prompt_parents(rec.prompt_text);
            if (parents != rec.parent_genotypes) bad.push_back({rec.prompt_id, 0, "parent genotypes disagree with prompt text"});
            if (rec.parent_ids.size() != rec.parent_genotypes.size()) {
                bad.push_back({rec.prompt_id, 0, "parent id count disagrees with parent genotypes"});
            }
        }
        for (const auto& e : rec.candidates) {
            if (builtin && (e.status == EntryStatus::Scored || e.status == EntryStatus::Invalid) &&
                objectives::validate_builtin(e.genotype) != e.valid) {
                bad.push_back({rec.prompt_id, e.id, "validity flag"});
            }
            if (!e.has_scores()) {
                if (e.sim) bad.push_back({rec.prompt_id, e.id, "sim stored for an unscored candidate"});
                continue;
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < registry.size(); ++k) {
                double expect = 0.0;
                try {
                    expect = orient_score(registry[k], e.raw[k]);
                } catch (const Error&) {
                    expect = std::nan("");
                }
                if (differs(expect, e.oriented[k])) {
                    bad.push_back({rec.prompt_id, e.id, "oriented[" + std::to_string(k) + "]"});
                }
                sum += e.oriented[k];
            }
            if (differs(sum, e.fitness)) bad.push_back({rec.prompt_id, e.id, "fitness"});
            if (builtin) {
                const auto raw = objectives::SurrogateScorer::raw_scores(e.genotype);
                for (std::size_t k = 0; k < raw.size() && k < e.raw.size(); ++k) {
                    if (differs(raw[k], e.raw[k])) bad.push_back({rec.prompt_id, e.id, "raw[" + std::to_string(k) + "]"});
                }
            }
            if (rec.kind == RecordKind::Prompt) {
                if (!e.sim) {
                    bad.push_back({rec.prompt_id, e.id, "missing sim"});
                } else if (ngram) {
                    const double s = similarity::prompt_similarity(Genotype(e.genotype), rec.parent_genotypes);
                    ++sims_checked;
                    if (differs(s, *e.sim)) bad.push_back({rec.prompt_id, e.id, "sim"});
                }
            }
        }
    }
    for (const auto& m : bad) {
        err << "mcce: mismatch: record " << m.prompt_id;
        if (m.id != 0) err << " candidate " << m.id;
        err << ": " << m.what << "\n";
    }
    if (!bad.empty()) return kMismatch;
    out << history.size() << " records verified, " << sims_checked << " similarities recomputed\n";
    return kOk;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-objective evolutionary search with co-evolving proposers", "mcce"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, out_dir = "mcce-run";
    std::vector<std::string> overrides;
    auto* run = app.add_subcommand("run", "Run the closed search loop");
    run->add_option("-c,--config", config_path, "JSON config file")->required();
    run->add_option("-o,--output-dir", out_dir, "Directory for run artifacts");
    run->add_option("--override", overrides, "dotted.key=value, repeatable");

    std::string log_path, dataset_out, report_out;
    std::size_t window = 100, pairs = 1;
    double alpha = 0.3;
    auto* syn = app.add_subcommand("synthesize-pairs", "Build a preference dataset from a trajectory log");
    syn->add_option("--log", log_path, "Trajectory log")->required();
    syn->add_option("-L,--window", window, "Recent prompts considered")->check(CLI::PositiveNumber);
    syn->add_option("--alpha", alpha, "Stratification fraction in (0, 0.5]");
    syn->add_option("-r,--pairs", pairs, "Pairs per prompt")->check(CLI::PositiveNumber);
    syn->add_option("-o,--out", dataset_out, "Dataset output path")->required();
    syn->add_option("--report", report_out, "Synthesis report path (default <out>.report.json)");

    std::string metrics_out, summary_out;
    auto* met = app.add_subcommand("metrics", "Recompute the metrics CSV from a trajectory log");
    met->add_option("--log", log_path, "Trajectory log")->required();
    met->add_option("-o,--out", metrics_out, "CSV output path")->required();
    met->add_option("--summary", summary_out, "Summary JSON path");

    std::string points_path, ref_text;
    auto* hv = app.add_subcommand("hv", "Hypervolume of a whitespace-separated points file (maximization)");
    hv->add_option("points", points_path, "Points file, one point per line")->required();
    hv->add_option("--ref", ref_text, "Reference point, comma separated (default origin)");

    auto* ver = app.add_subcommand("verify-log", "Re-check a trajectory log and its recomputable fields");
    ver->add_option("--log", log_path, "Trajectory log")->required();

    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "mcce: error: " << one_line(e.what()) << "\n";
        return kUsage;
    }

    try {
        if (*run) return cmd_run(config_path, overrides, out_dir, out);
        if (*syn) return cmd_synthesize(log_path, window, alpha, pairs, dataset_out, report_out, out);
        if (*met) return cmd_metrics(log_path, metrics_out, summary_out, out);
        if (*hv) return cmd_hv(points_path, ref_text, out);
        if (*ver) return cmd_verify(log_path, out, err);
    } catch (const InitFailed& e) {
        err << "mcce: init failed: " << one_line(e.what()) << "\n";
        return kInitFailed;
    } catch (const LogParseError& e) {
        err << "mcce: log parse error: " << one_line(e.what()) << "\n";
        return kLogParse;
    } catch (const std::exception& e) {
        err << "mcce: error: " << one_line(e.what()) << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace mcce::cli
