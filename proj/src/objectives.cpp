#include "mcce/objectives.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "mcce/errors.hpp"
#include "mcce/process.hpp"

namespace mcce::objectives {

bool validate_builtin(std::string_view text) {
    if (text.empty()) return false;
    std::vector<char> stack;
    for (char c : text) {
        if (kBuiltinAlphabet.find(c) == std::string_view::npos) return false;
        if (c == '(' || c == '[') stack.push_back(c);
        else if (c == ')' || c == ']') {
            const char open = c == ')' ? '(' : '[';
            if (stack.empty() || stack.back() != open) return false;
            stack.pop_back();
        }
    }
    return stack.empty();
}

Scorer::Scorer(ObjectiveRegistry registry) : registry_(std::move(registry)) {
    if (registry_.size() < 2) throw ConfigError("a scorer needs at least two objectives");
}

ScoreVector Scorer::score(const Genotype& g) const {
    auto out = score_batch(std::span<const Genotype>(&g, 1));
    auto& o = out.front();
    if (!o.ok()) {
        throw ScorerUnavailable(o.error.empty() ? "genotype '" + g.text + "' could not be scored" : o.error);
    }
    return std::move(o.scores);
}

namespace {

std::size_t count_overlapping(std::string_view text, std::string_view motif) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + motif.size() <= text.size(); ++i) {
        if (text.substr(i, motif.size()) == motif) ++n;
    }
    return n;
}

double entropy_bits(std::string_view text) {
    if (text.empty()) return 0.0;
    std::array<std::size_t, 256> hist{};
    for (unsigned char c : text) ++hist[c];
    double h = 0.0;
    const double n = static_cast<double>(text.size());
    for (std::size_t cnt : hist) {
        if (cnt == 0) continue;
        const double p = static_cast<double>(cnt) / n;
        h -= p * std::log2(p);
    }
    return h;
}

std::size_t nesting_depth(std::string_view text) {
    std::size_t depth = 0, best = 0;
    for (char c : text) {
        if (c == '(' || c == '[') best = std::max(best, ++depth);
        else if ((c == ')' || c == ']') && depth > 0) --depth;
    }
    return best;
}

}  // namespace

ObjectiveRegistry surrogate_registry() {
    return ObjectiveRegistry({
        {"lengthband", Direction::Minimize, RawRange{0.0, 24.0}, "length deviation",
         "length deviation: distance between the string length and 24 characters. Trimming or extending toward 24 "
         "characters lowers it."},
        {"charbalance", Direction::Maximize, RawRange{0.0, 3.0}, "character balance",
         "character balance: entropy of the character histogram. Using many different characters evenly raises it."},
        {"motifcount", Direction::Maximize, RawRange{0.0, 4.0}, "CN motif count",
         "CN motif count: occurrences of the substring CN. Repeating the CN pair raises it."},
        {"motifavoid", Direction::Minimize, RawRange{0.0, 4.0}, "OO motif count",
         "OO motif count: occurrences of the substring OO. Separating adjacent O atoms lowers it."},
        {"bracketdepth", Direction::Minimize, RawRange{0.0, 4.0}, "branch depth",
         "branch depth: maximum nesting of parentheses and brackets. Flattening nested branches lowers it."},
    });
}

ObjectiveRegistry molecular_registry() {
    return ObjectiveRegistry({
        {"sa", Direction::Minimize, RawRange{1.0, 10.0}, "SA",
         "synthetic accessibility score; fewer fused rings and exotic groups make a molecule easier to make."},
        {"drd2", Direction::Minimize, RawRange{0.0, 1.0}, "DRD2",
         "predicted dopamine D2 receptor activity; bulky groups near the aromatic core tend to reduce it."},
        {"qed", Direction::Maximize, RawRange{0.0, 1.0}, "QED",
         "drug-likeness estimate from weight, polarity and hydrogen-bond counts; compact balanced molecules score "
         "higher."},
        {"gsk3b", Direction::Minimize, RawRange{0.0, 1.0}, "GSK3\u03b2",
         "predicted GSK3 beta kinase activity; steric hindrance and hydrophobic patches tend to reduce it."},
        {"jnk3", Direction::Maximize, RawRange{0.0, 1.0}, "JNK3",
         "predicted JNK3 kinase activity; small polar or electronegative substituents tend to raise it."},
    });
}

ObjectiveRegistry registry_preset(std::string_view name) {
    if (name == "surrogate") return surrogate_registry();
    if (name == "molecular") return molecular_registry();
    throw ConfigError("unknown objective preset '" + std::string(name) + "'");
}

SurrogateScorer::SurrogateScorer() : Scorer(surrogate_registry()) {}

bool SurrogateScorer::validate(const Genotype& g) const { return validate_builtin(g.text); }

std::vector<double> SurrogateScorer::raw_scores(std::string_view text) {
    const double len = static_cast<double>(text.size());
    return {
        std::abs(len - static_cast<double>(kTargetLength)),
        entropy_bits(text),
        static_cast<double>(count_overlapping(text, kTargetMotif)),
        static_cast<double>(count_overlapping(text, kBannedMotif)),
        static_cast<double>(nesting_depth(text)),
    };
}

std::vector<ScoreOutcome> SurrogateScorer::score_batch(std::span<const Genotype> gs) const {
    std::vector<ScoreOutcome> out;
    out.reserve(gs.size());
    for (const auto& g : gs) {
        ScoreOutcome o;
        if (!validate(g)) {
            o.status = ScoreOutcome::Status::Invalid;
            o.scores = ScoreVector::sentinel(registry_.size());
            o.error = "genotype fails the builtin validity check";
        } else {
            o.status = ScoreOutcome::Status::Ok;
            o.scores = make_score_vector(registry_, raw_scores(g.text));
        }
        out.push_back(std::move(o));
    }
    return out;
}

ExternalScorer::ExternalScorer(ObjectiveRegistry registry, ExternalTransport transport,
                               std::chrono::milliseconds timeout)
    : Scorer(std::move(registry)), transport_(std::move(transport)), timeout_(timeout) {
    if (transport_.kind == ExternalTransport::Kind::Subprocess && transport_.argv.empty()) {
        throw ConfigError("external scorer command is empty");
    }
    if (transport_.kind == ExternalTransport::Kind::Http && transport_.url.empty()) {
        throw ConfigError("external scorer endpoint is empty");
    }
}

bool ExternalScorer::validate(const Genotype& g) const {
    return !g.empty() && g.text.find_first_of("\r\n") == std::string::npos;
}

std::string encode_score_request(std::span<const Genotype> gs) {
    std::string out;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        out += "SCORE ";
        out += std::to_string(i);
        out += ' ';
        out += gs[i].text;
        out += '\n';
    }
    out += "END\n";
    return out;
}

namespace {

ScoreOutcome unavailable(std::size_t k, std::string why) {
    return ScoreOutcome{ScoreOutcome::Status::Unavailable, ScoreVector::sentinel(k), std::move(why)};
}

bool parse_double(std::string_view tok, double& out) {
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
}

}  // namespace

std::vector<ScoreOutcome> decode_score_reply(std::string_view reply, std::size_t n,
                                             const ObjectiveRegistry& registry) {
    const std::size_t k = registry.size();
    std::map<std::size_t, ScoreOutcome> got;
    std::istringstream in{std::string(reply)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "END") break;
        std::istringstream toks(line);
        std::string tag, id_tok, flag;
        if (!(toks >> tag >> id_tok >> flag) || tag != "RESULT") continue;
        std::size_t id = 0;
        const auto [p, ec] = std::from_chars(id_tok.data(), id_tok.data() + id_tok.size(), id);
        if (ec != std::errc{} || p != id_tok.data() + id_tok.size() || id >= n) continue;
        std::vector<double> raw;
        std::string tok;
        bool numeric = true;
        while (toks >> tok) {
            double v = 0.0;
            if (!parse_double(tok, v)) numeric = false;
            raw.push_back(v);
        }
        if (flag != "0" && flag != "1") {
            got[id] = unavailable(k, "bad validity flag in reply for request " + id_tok);
        } else if (flag == "0") {
            got[id] = ScoreOutcome{ScoreOutcome::Status::Invalid, ScoreVector::sentinel(k), "scorer declared invalid"};
        } else if (!numeric || raw.size() != k) {
            got[id] = unavailable(k, "reply for request " + id_tok + " carries " + std::to_string(raw.size()) +
                                         " scores, expected " + std::to_string(k));
        } else {
            try {
                got[id] = ScoreOutcome{ScoreOutcome::Status::Ok, make_score_vector(registry, std::move(raw)), {}};
            } catch (const Error& e) {
                got[id] = unavailable(k, e.what());
            }
        }
    }
    std::vector<ScoreOutcome> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = got.find(i);
        out.push_back(it != got.end() ? std::move(it->second)
                                      : unavailable(k, "no reply for request " + std::to_string(i)));
    }
    return out;
}

std::vector<ScoreOutcome> ExternalScorer::score_batch(std::span<const Genotype> gs) const {
    if (gs.empty()) return {};
    const std::string request = encode_score_request(gs);
    std::string reply;
    std::lock_guard lock(in_flight_);
    try {
        if (transport_.kind == ExternalTransport::Kind::Subprocess) {
            const auto res = run_process(transport_.argv, request, timeout_);
            if (res.timed_out) throw ScorerUnavailable("external scorer timed out");
            if (res.exit_code != 0) {
                throw ScorerUnavailable("external scorer exited with status " + std::to_string(res.exit_code));
            }
            reply = res.out;
        } else {
            const auto res = http_post(transport_.url, request, "text/plain", {}, timeout_);
            if (res.status < 200 || res.status >= 300) {
                throw ScorerUnavailable("external scorer replied HTTP " + std::to_string(res.status));
            }
            reply = res.body;
        }
    } catch (const Error& e) {
        std::vector<ScoreOutcome> out;
        for (std::size_t i = 0; i < gs.size(); ++i) out.push_back(unavailable(registry_.size(), e.what()));
        return out;
    }
    return decode_score_reply(reply, gs.size(), registry_);
}

}  // namespace mcce::objectives
