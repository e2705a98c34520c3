#include "mcce/proposers.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mcce/errors.hpp"
#include "mcce/process.hpp"
#include "mcce/random.hpp"

namespace mcce::proposers {

using json = nlohmann::json;

namespace {

constexpr std::string_view kOpenTag = "<mol>";
constexpr std::string_view kCloseTag = "</mol>";
constexpr std::string_view kPointPrefix = "Point ";

std::string directive_lines(const ObjectiveRegistry& registry) {
    std::string out;
    for (std::size_t k = 0; k < registry.size(); ++k) {
        const auto& o = registry[k];
        out += std::to_string(k + 1) + ". " + (o.direction == Direction::Maximize ? "increase" : "decrease") +
               " the " + o.label + " value.\n";
    }
    return out;
}

std::vector<std::string> briefs_of(const ObjectiveRegistry& registry) {
    std::vector<std::string> out;
    for (const auto& o : registry.specs()) out.push_back(o.name + ": " + o.brief);
    return out;
}

std::string output_rule(std::string_view encoding) {
    return "Do not write code. Do not give any explanation. Each output new molecule must start with <mol> and end "
           "with </mol> in " +
           std::string(encoding) + " form. Your answer can only contain two molecules and end immediately";
}

std::string header_block(const ObjectiveRegistry& registry, const std::vector<std::string>& briefs) {
    std::string text = "suggest new molecules that satisfy the following requirements: \n";
    text += directive_lines(registry);
    text += '\n';
    for (const auto& b : briefs) text += b + "\n\n";
    return text;
}

}  // namespace

void check_prompt_registry(const ObjectiveRegistry& registry) {
    for (const auto& o : registry.specs()) {
        if (o.label.empty() || o.brief.empty()) {
            throw ConfigError("objective '" + o.name + "' has no prompt label/brief");
        }
    }
}

PromptSpec build_prompt(const Candidate& p1, const Candidate& p2, const ObjectiveRegistry& registry,
                        std::string_view encoding) {
    if (!p1.valid || !p2.valid) throw Error("prompt parents must be valid candidates");
    check_prompt_registry(registry);
    PromptSpec spec;
    spec.template_id = std::string(kCrossoverTemplate);
    spec.parent_ids = {p1.id, p2.id};
    spec.parent_genotypes = {p1.genotype.text, p2.genotype.text};
    spec.objective_briefs = briefs_of(registry);

    std::string text = header_block(registry, spec.objective_briefs);
    text += std::string(kPointPrefix) + "1: " + p1.genotype.text + "\n";
    text += std::string(kPointPrefix) + "2: " + p2.genotype.text + "\n\n";
    text += "Give me 2 new molecules that fit the features.\n\n";
    text += "You can do it by applying crossover on the given points and based on your knowledge. The molecule should "
            "be valid.\n\n";
    text += output_rule(encoding);
    spec.rendered_text = std::move(text);
    return spec;
}

PromptSpec build_seed_prompt(const ObjectiveRegistry& registry, std::string_view encoding) {
    check_prompt_registry(registry);
    PromptSpec spec;
    spec.template_id = std::string(kSeedTemplate);
    spec.objective_briefs = briefs_of(registry);
    std::string text = header_block(registry, spec.objective_briefs);
    text += "Give me 2 new molecules that fit the features.\n\n";
    text += "The molecule should be valid.\n\n";
    text += output_rule(encoding);
    spec.rendered_text = std::move(text);
    return spec;
}

std::vector<std::string> prompt_parents(std::string_view rendered_text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(rendered_text)};
    std::string line;
    while (std::getline(in, line)) {
        for (int slot = 1; slot <= 2; ++slot) {
            const std::string prefix = std::string(kPointPrefix) + std::to_string(slot) + ": ";
            if (line.rfind(prefix, 0) == 0 && out.size() == static_cast<std::size_t>(slot - 1)) {
                out.push_back(line.substr(prefix.size()));
            }
        }
    }
    return out;
}

ParseResult parse_response(std::string_view raw) {
    ParseResult result;
    std::size_t spans = 0;
    std::size_t pos = 0;
    while (true) {
        std::size_t open = raw.find(kOpenTag, pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = raw.find(kCloseTag, open + kOpenTag.size());
        if (close == std::string_view::npos) {
            result.warnings.push_back("unterminated <mol> tag");
            break;
        }
        // innermost opening tag before the close
        for (std::size_t next = raw.find(kOpenTag, open + kOpenTag.size()); next != std::string_view::npos && next < close;
             next = raw.find(kOpenTag, next + kOpenTag.size())) {
            open = next;
        }
        std::string_view body = raw.substr(open + kOpenTag.size(), close - open - kOpenTag.size());
        pos = close + kCloseTag.size();
        const auto first = body.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) {
            result.warnings.push_back("empty <mol> span dropped");
            continue;
        }
        body = body.substr(first, body.find_last_not_of(" \t\r\n") - first + 1);
        if (body.find_first_of("\r\n") != std::string_view::npos) {
            result.warnings.push_back("multi-line <mol> span dropped");
            continue;
        }
        ++spans;
        if (result.genotypes.size() < 2) result.genotypes.emplace_back(std::string(body));
    }
    if (spans > 2) {
        result.warnings.push_back("response carried " + std::to_string(spans) + " molecules; kept the first 2");
    }
    return result;
}

MockPolicy MockPolicy::defaults() {
    MockPolicy p;
    for (char c : std::string_view("CNOSFcno()=12")) p.vocabulary.emplace_back(std::string(1, c), 1.0);
    return p;
}

MockPolicy MockPolicy::from_script(const std::string& path) {
    MockPolicy p = defaults();
    if (path.empty() || path == "builtin") return p;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read mock script '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("mock script '" + path + "': " + e.what());
    }
    if (j.contains("vocabulary")) {
        p.vocabulary.clear();
        for (const auto& [tok, w] : j.at("vocabulary").items()) p.vocabulary.emplace_back(tok, w.get<double>());
    }
    p.p_keep = j.value("p_keep", p.p_keep);
    p.p_insert = j.value("p_insert", p.p_insert);
    p.p_delete = j.value("p_delete", p.p_delete);
    p.seed_min_len = j.value("seed_min_len", p.seed_min_len);
    p.seed_max_len = j.value("seed_max_len", p.seed_max_len);
    p.seed_alphabet = j.value("seed_alphabet", p.seed_alphabet);
    const double total = p.p_keep + p.p_insert + p.p_delete;
    if (std::abs(total - 1.0) > 1e-9 || p.p_keep < 0 || p.p_insert < 0 || p.p_delete < 0) {
        throw ConfigError("mock script '" + path + "': operator probabilities must be non-negative and sum to 1");
    }
    if (p.seed_alphabet.empty() || p.seed_min_len == 0 || p.seed_min_len > p.seed_max_len) {
        throw ConfigError("mock script '" + path + "': bad seed alphabet or length range");
    }
    if (p.vocabulary.empty()) throw ConfigError("mock script '" + path + "': empty vocabulary");
    return p;
}

double MockPolicy::total_weight() const noexcept {
    double w = 0.0;
    for (const auto& [tok, weight] : vocabulary) w += weight;
    return w;
}

double MockPolicy::token_weight(std::string_view t) const noexcept {
    for (const auto& [tok, weight] : vocabulary) {
        if (tok == t) return weight;
    }
    return 0.0;
}

void MockPolicyStore::put(const std::string& model_ref, MockPolicy policy) {
    std::lock_guard lock(mu_);
    policies_[model_ref] = std::make_shared<const MockPolicy>(std::move(policy));
}

std::shared_ptr<const MockPolicy> MockPolicyStore::get(const std::string& model_ref) const {
    std::lock_guard lock(mu_);
    auto it = policies_.find(model_ref);
    if (it == policies_.end()) throw Error("no mock policy registered for model '" + model_ref + "'");
    return it->second;
}

bool MockPolicyStore::contains(const std::string& model_ref) const {
    std::lock_guard lock(mu_);
    return policies_.count(model_ref) != 0;
}

std::string_view to_string(ProposerBinding::Kind k) {
    switch (k) {
        case ProposerBinding::Kind::RemoteApi: return "remote";
        case ProposerBinding::Kind::LocalEndpoint: return "local";
        case ProposerBinding::Kind::ScriptedMock: return "mock";
    }
    return "mock";
}

std::string Proposer::model_ref() const {
    std::lock_guard lock(ref_mu_);
    return binding_.model_ref;
}

void Proposer::set_model_ref(std::string ref) {
    std::lock_guard lock(ref_mu_);
    binding_.model_ref = std::move(ref);
}

double Proposer::sequence_logprob(std::string_view, std::string_view) const {
    throw CapabilityError("proposer '" + binding_.id + "' does not support sequence log-probabilities");
}

// ---------------------------------------------------------------------------
// Scripted mock

namespace {

std::string sample_token(const MockPolicy& p, Rng& rng) {
    const double total = p.total_weight();
    double u = rng.uniform() * total;
    for (const auto& [tok, w] : p.vocabulary) {
        if (u < w) return tok;
        u -= w;
    }
    return p.vocabulary.back().first;
}

std::string sample_child(const MockPolicy& p, std::string_view first, std::string_view second, Rng& rng) {
    const std::size_t cut_a = rng.below(first.size() + 1);
    const std::size_t cut_b = rng.below(second.size() + 1);
    std::string x = std::string(first.substr(0, cut_a)) + std::string(second.substr(cut_b));
    const double u = rng.uniform();
    if (u < p.p_keep) return x;
    if (u < p.p_keep + p.p_insert) {
        const std::size_t pos = rng.below(x.size() + 1);
        x.insert(pos, sample_token(p, rng));
        return x;
    }
    if (x.empty()) return x;
    x.erase(rng.below(x.size()), 1);
    return x;
}

std::string sample_seed(const MockPolicy& p, Rng& rng) {
    const std::size_t len = p.seed_min_len + rng.below(p.seed_max_len - p.seed_min_len + 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += p.seed_alphabet[rng.below(p.seed_alphabet.size())];
    return s;
}

std::size_t common_prefix(std::string_view a, std::string_view b) {
    std::size_t n = 0;
    while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
    return n;
}

std::size_t common_suffix(std::string_view a, std::string_view b) {
    std::size_t n = 0;
    while (n < a.size() && n < b.size() && a[a.size() - 1 - n] == b[b.size() - 1 - n]) ++n;
    return n;
}

// Probability that the mutation step turns x into c.
double mutation_probability(const MockPolicy& p, std::string_view x, std::string_view c, double total_weight) {
    double prob = 0.0;
    if (c == x) prob += p.p_keep;
    if (c.size() > x.size()) {
        const std::size_t tlen = c.size() - x.size();
        const std::size_t pre = common_prefix(c, x);
        const std::size_t suf = common_suffix(c, x);
        double hits = 0.0;
        for (std::size_t pos = 0; pos <= x.size() && pos <= pre; ++pos) {
            if (x.size() - pos > suf) continue;
            hits += p.token_weight(c.substr(pos, tlen));
        }
        prob += p.p_insert * hits / total_weight / static_cast<double>(x.size() + 1);
    }
    if (x.empty()) {
        if (c.empty()) prob += p.p_delete;
    } else if (c.size() + 1 == x.size()) {
        const std::size_t pre = common_prefix(c, x);
        const std::size_t suf = common_suffix(c, x);
        std::size_t hits = 0;
        for (std::size_t pos = 0; pos < x.size(); ++pos) {
            if (pos <= pre && x.size() - pos - 1 <= suf) ++hits;
        }
        prob += p.p_delete * static_cast<double>(hits) / static_cast<double>(x.size());
    }
    return prob;
}

double child_probability(const MockPolicy& p, std::string_view first, std::string_view second, std::string_view c) {
    const double total = p.total_weight();
    const double cut_mass = 1.0 / static_cast<double>((first.size() + 1) * (second.size() + 1));
    double prob = 0.0;
    for (std::size_t a = 0; a <= first.size(); ++a) {
        for (std::size_t b = 0; b <= second.size(); ++b) {
            const std::string x = std::string(first.substr(0, a)) + std::string(second.substr(b));
            prob += cut_mass * mutation_probability(p, x, c, total);
        }
    }
    return prob;
}

bool in_seed_support(const MockPolicy& p, std::string_view c) {
    if (c.size() < p.seed_min_len || c.size() > p.seed_max_len) return false;
    return c.find_first_not_of(p.seed_alphabet) == std::string_view::npos;
}

double seed_logprob(const MockPolicy& p, std::string_view c) {
    if (!in_seed_support(p, c)) return -std::numeric_limits<double>::infinity();
    return -std::log(static_cast<double>(p.seed_max_len - p.seed_min_len + 1)) -
           static_cast<double>(c.size()) * std::log(static_cast<double>(p.seed_alphabet.size()));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

}  // namespace

double mock_logprob(const MockPolicy& policy, std::span<const std::string> parents,
                    std::span<const std::string> completion) {
    if (completion.empty() || completion.size() > 2) {
        throw Error("mock log-probability needs one or two completion genotypes");
    }
    if (parents.empty()) {
        double lp = 0.0;
        for (const auto& c : completion) lp += seed_logprob(policy, c);
        return lp;
    }
    const std::string_view a = parents[0];
    const std::string_view b = parents.size() > 1 ? std::string_view(parents[1]) : a;
    if (completion.size() == 2) {
        return safe_log(child_probability(policy, a, b, completion[0])) +
               safe_log(child_probability(policy, b, a, completion[1]));
    }
    return safe_log(0.5 * child_probability(policy, a, b, completion[0]) +
                    0.5 * child_probability(policy, b, a, completion[0]));
}

ScriptedMockProposer::ScriptedMockProposer(ProposerBinding binding, std::shared_ptr<MockPolicyStore> store)
    : Proposer(std::move(binding)), store_(std::move(store)) {
    binding_.supports_logprob = true;
    if (!store_) store_ = std::make_shared<MockPolicyStore>();
    if (binding_.model_ref.empty()) binding_.model_ref = "mock:" + binding_.id + "@0";
    if (!store_->contains(binding_.model_ref)) {
        store_->put(binding_.model_ref, MockPolicy::from_script(binding_.script_path));
    }
}

std::shared_ptr<const MockPolicy> ScriptedMockProposer::policy() const { return store_->get(model_ref()); }

std::string ScriptedMockProposer::complete(const PromptSpec& prompt, int attempt) const {
    const auto pol = policy();
    Rng rng(splitmix64(binding_.seed ^ fnv1a64(prompt.rendered_text)) ^ splitmix64(prompt.sample_nonce) ^
            splitmix64(0x5151ULL + static_cast<std::uint64_t>(attempt)));
    const auto& parents = prompt.parent_genotypes;
    std::string c0, c1;
    if (parents.empty()) {
        c0 = sample_seed(*pol, rng);
        c1 = sample_seed(*pol, rng);
    } else {
        const std::string& a = parents[0];
        const std::string& b = parents.size() > 1 ? parents[1] : parents[0];
        c0 = sample_child(*pol, a, b, rng);
        c1 = sample_child(*pol, b, a, rng);
    }
    return std::string(kOpenTag) + c0 + std::string(kCloseTag) + "\n" + std::string(kOpenTag) + c1 +
           std::string(kCloseTag);
}

double ScriptedMockProposer::sequence_logprob(std::string_view prompt_text, std::string_view completion) const {
    const auto parents = prompt_parents(prompt_text);
    auto parsed = parse_response(completion);
    std::vector<std::string> texts;
    for (auto& g : parsed.genotypes) texts.push_back(g.text);
    if (texts.empty()) {
        // bare genotype text
        const auto first = completion.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) return -std::numeric_limits<double>::infinity();
        texts.emplace_back(completion.substr(first, completion.find_last_not_of(" \t\r\n") - first + 1));
    }
    return mock_logprob(*policy(), parents, texts);
}

// ---------------------------------------------------------------------------
// HTTP backends

HttpProposer::HttpProposer(ProposerBinding binding) : Proposer(std::move(binding)) {
    if (binding_.endpoint.empty()) throw ConfigError("proposer '" + binding_.id + "' has no endpoint");
}

namespace {

std::vector<std::pair<std::string, std::string>> auth_headers(const ProposerBinding& b) {
    std::vector<std::pair<std::string, std::string>> h;
    if (!b.auth_env_var.empty()) {
        const char* token = std::getenv(b.auth_env_var.c_str());
        if (token == nullptr || *token == '\0') {
            throw IoError("environment variable " + b.auth_env_var + " is not set");
        }
        h.emplace_back("Authorization", std::string("Bearer ") + token);
    }
    return h;
}

}  // namespace

std::string HttpProposer::complete(const PromptSpec& prompt, int) const {
    json req;
    req["model"] = binding_.kind == ProposerBinding::Kind::RemoteApi ? binding_.model_name : model_ref();
    req["messages"] = json::array({{{"role", "user"}, {"content", prompt.rendered_text}}});
    req["temperature"] = binding_.temperature;
    const auto reply = http_post(binding_.endpoint, req.dump(), "application/json", auth_headers(binding_),
                                 binding_.timeout);
    if (reply.status < 200 || reply.status >= 300) {
        throw IoError("proposer '" + binding_.id + "' got HTTP " + std::to_string(reply.status));
    }
    try {
        const auto j = json::parse(reply.body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("proposer '" + binding_.id + "' returned a malformed reply: " + e.what());
    }
}

double HttpProposer::sequence_logprob(std::string_view prompt_text, std::string_view completion) const {
    if (!binding_.supports_logprob || binding_.logprob_endpoint.empty()) {
        return Proposer::sequence_logprob(prompt_text, completion);
    }
    json req;
    req["model"] = binding_.kind == ProposerBinding::Kind::RemoteApi ? binding_.model_name : model_ref();
    req["prompt"] = std::string(prompt_text);
    req["completion"] = std::string(completion);
    const auto reply = http_post(binding_.logprob_endpoint, req.dump(), "application/json", auth_headers(binding_),
                                 binding_.timeout);
    if (reply.status < 200 || reply.status >= 300) {
        throw IoError("logprob endpoint of '" + binding_.id + "' got HTTP " + std::to_string(reply.status));
    }
    const auto j = json::parse(reply.body, nullptr, false);
    if (j.is_discarded() || !j.contains("logprob")) throw IoError("malformed logprob reply");
    if (j.at("logprob").is_null()) return -std::numeric_limits<double>::infinity();
    return j.at("logprob").get<double>();
}

std::unique_ptr<Proposer> make_proposer(const ProposerBinding& binding, std::shared_ptr<MockPolicyStore> store) {
    if (binding.kind == ProposerBinding::Kind::ScriptedMock) {
        return std::make_unique<ScriptedMockProposer>(binding, std::move(store));
    }
    return std::make_unique<HttpProposer>(binding);
}

ProposalResult propose(const PromptSpec& prompt, const Proposer& proposer, bool with_logprob) {
    ProposalResult result;
    std::string last_error = "no molecules parsed";
    const int tries = std::max(0, proposer.binding().max_retries) + 1;
    for (int attempt = 0; attempt < tries; ++attempt) {
        ++result.attempts;
        try {
            result.raw_text = proposer.complete(prompt, attempt);
        } catch (const std::exception& e) {
            last_error = e.what();
            continue;
        }
        auto parsed = parse_response(result.raw_text);
        result.parse_errors = std::move(parsed.warnings);
        if (!parsed.genotypes.empty()) {
            result.parsed = std::move(parsed.genotypes);
            if (with_logprob && proposer.binding().supports_logprob) {
                try {
                    result.logprob = proposer.sequence_logprob(prompt.rendered_text, result.raw_text);
                } catch (const std::exception&) {
                    result.logprob.reset();
                }
            }
            return result;
        }
        last_error = "no molecules parsed";
    }
    throw ProposerUnavailable("proposer '" + proposer.binding().id + "' failed after " +
                              std::to_string(result.attempts) + " attempt(s): " + last_error);
}

}  // namespace mcce::proposers
