#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "mcce/engine.hpp"
#include "mcce/errors.hpp"
#include "mcce/metrics.hpp"
#include "mcce/pareto.hpp"
#include "mcce/proposers.hpp"
#include "mcce/similarity.hpp"
#include "mcce/synthesis.hpp"
#include "mcce/trainer.hpp"
#include "mcce/version.hpp"

namespace py = pybind11;
using json = nlohmann::ordered_json;

namespace {

double hypervolume(const std::vector<std::vector<double>>& points, std::optional<std::vector<double>> ref) {
    if (points.empty()) return 0.0;
    if (!ref) ref = std::vector<double>(points.front().size(), 0.0);
    return mcce::pareto::hypervolume(points, *ref).value;
}

// Column-wise z-scores of a row-major score matrix.
std::vector<std::vector<double>> znormalize(const std::vector<std::vector<double>>& rows) {
    std::vector<mcce::ScoreVector> sv(rows.size());
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) throw mcce::DimensionMismatch("ragged score rows");
        sv[i].raw = rows[i];
    }
    std::vector<std::vector<double>> out(rows.size(), std::vector<double>(width));
    for (std::size_t k = 0; k < width; ++k) {
        const auto col = mcce::znormalize(sv, k);
        for (std::size_t i = 0; i < rows.size(); ++i) out[i][k] = col[i];
    }
    return out;
}

std::vector<std::uint64_t> fingerprint(const std::string& text) {
    return mcce::similarity::fingerprint(mcce::Genotype(text)).features;
}

double tanimoto(const std::string& a, const std::string& b) {
    return mcce::similarity::tanimoto(mcce::similarity::fingerprint(mcce::Genotype(a)),
                                      mcce::similarity::fingerprint(mcce::Genotype(b)));
}

std::string stats_json(const std::vector<double>& samples) {
    const auto s = mcce::similarity::compute_stats(samples);
    json j;
    j["mu"] = s.mu;
    j["sigma"] = s.sigma;
    j["samples"] = s.sample_count;
    j["band"] = {s.band.lo, s.band.hi};
    j["i1"] = {s.i1.lo, s.i1.hi};
    j["i2"] = {s.i2.lo, s.i2.hi};
    j["i3"] = {s.i3.lo, s.i3.hi};
    return j.dump();
}

std::pair<std::vector<std::string>, std::vector<std::string>> parse_response(const std::string& raw) {
    auto r = mcce::proposers::parse_response(raw);
    std::vector<std::string> gs;
    for (auto& g : r.genotypes) gs.push_back(std::move(g.text));
    return {gs, r.warnings};
}

std::pair<std::vector<std::string>, std::string> synthesize(const std::string& log_path, std::size_t window,
                                                            double alpha, std::size_t pairs) {
    const auto history = mcce::replay(log_path);
    const auto res = mcce::synthesis::synthesize(history, window, alpha, pairs);
    std::vector<std::string> lines;
    for (const auto& t : res.dataset) lines.push_back(mcce::synthesis::encode_triplet(t));
    return {lines, res.report.to_json()};
}

std::string metrics_csv(const std::string& log_path) {
    const auto history = mcce::replay(log_path);
    std::string out(mcce::metrics::kCsvHeader);
    out += '\n';
    for (const auto& s : mcce::metrics::replay_timeline(history)) out += mcce::metrics::csv_row(s) + '\n';
    return out;
}

std::string run(const std::string& config_json, const std::vector<std::string>& overrides,
                std::optional<std::string> output_dir) {
    auto user = json::parse(config_json);
    auto cfg = mcce::engine::load_config(user, overrides);
    std::optional<std::filesystem::path> dir;
    if (output_dir) dir = *output_dir;
    mcce::engine::RunReport report;
    {
        py::gil_scoped_release release;
        mcce::engine::Engine eng(std::move(cfg), dir);
        report = eng.run();
    }
    json out;
    json timeline = json::array();
    for (const auto& s : report.timeline) timeline.push_back(mcce::metrics::csv_row(s));
    out["timeline"] = std::move(timeline);
    out["population"] = report.population.members.size();
    out["archive"] = report.archive.size();
    out["manifest"] = report.manifest;
    return out.dump();
}

}  // namespace

PYBIND11_MODULE(_mcce, m) {
    m.doc() = "Native core of the mcce search loop";
    m.attr("__version__") = std::string(mcce::kVersion);

    // Translators are tried newest first, so the base goes in before its subclasses.
    const auto base = py::register_exception<mcce::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<mcce::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<mcce::InitFailed>(m, "InitFailed", base.ptr());
    py::register_exception<mcce::LogParseError>(m, "LogParseError", base.ptr());

    m.def("dominates", [](const std::vector<double>& a, const std::vector<double>& b) {
        return mcce::pareto::dominates(a, b);
    }, py::arg("a"), py::arg("b"));
    m.def("nondominated_ranks", [](const std::vector<std::vector<double>>& pts) {
        return mcce::pareto::nondominated_ranks(pts);
    }, py::arg("points"));
    m.def("hypervolume", &hypervolume, py::arg("points"), py::arg("ref") = py::none());
    m.def("znormalize", &znormalize, py::arg("rows"));
    m.def("fingerprint", &fingerprint, py::arg("text"));
    m.def("tanimoto", &tanimoto, py::arg("a"), py::arg("b"));
    m.def("prompt_similarity", [](const std::string& text, const std::vector<std::string>& parents) {
        return mcce::similarity::prompt_similarity(mcce::Genotype(text), parents);
    }, py::arg("text"), py::arg("parents"));
    m.def("_similarity_stats", &stats_json, py::arg("samples"));
    m.def("parse_response", &parse_response, py::arg("raw"));
    m.def("dpo_loss", &mcce::trainer::dpo_loss, py::arg("policy_chosen"), py::arg("policy_rejected"),
          py::arg("ref_chosen"), py::arg("ref_rejected"), py::arg("beta"));
    m.def("_synthesize", &synthesize, py::arg("log_path"), py::arg("window"), py::arg("alpha"), py::arg("pairs"));
    m.def("metrics_csv", &metrics_csv, py::arg("log_path"));
    m.def("_run", &run, py::arg("config_json"), py::arg("overrides"), py::arg("output_dir"));
}
