#include <fstream>

#include "mcce/engine.hpp"
#include "mcce/errors.hpp"

namespace mcce::engine {

using json = nlohmann::ordered_json;

namespace {

json binding_defaults(const std::string& id, std::uint64_t seed) {
    json b;
    b["id"] = id;
    b["kind"] = "mock";
    b["seed"] = seed;
    b["script"] = "";
    b["endpoint"] = "";
    b["model"] = "";
    b["auth_env"] = "";
    b["model_ref"] = "";
    b["logprob_endpoint"] = "";
    b["supports_logprob"] = false;
    b["max_retries"] = 2;
    b["temperature"] = 1.0;
    b["timeout_ms"] = 60000;
    return b;
}

std::string type_name(const json& v) {
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    return v.type_name();
}

bool same_kind(const json& def, const json& v) {
    if (def.is_number()) return v.is_number();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array();
    if (def.is_object()) return v.is_object();
    return true;
}

void merge_into(json& base, const json& user, const std::string& where) {
    if (!user.is_object()) throw ConfigError("'" + (where.empty() ? "<root>" : where) + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        auto& slot = base[key];
        if (!same_kind(slot, value)) {
            throw ConfigError("config key '" + path + "' expects " + type_name(slot) + ", got " + type_name(value));
        }
        if (slot.is_object()) {
            merge_into(slot, value, path);
        } else {
            slot = value;
        }
    }
}

void apply_override(json& cfg, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not key=value");
    const std::string key = spec.substr(0, eq);
    const std::string text = spec.substr(eq + 1);
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown override key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    if (!same_kind(*node, value)) {
        throw ConfigError("override '" + key + "' expects " + type_name(*node) + ", got " + type_name(value));
    }
    if (node->is_object()) {
        merge_into(*node, value, key);
    } else {
        *node = value;
    }
}

std::uint64_t as_u64(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
}

std::int64_t as_i64(const json& v, const std::string& key) {
    if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
    throw ConfigError("config key '" + key + "' must be an integer");
}

proposers::ProposerBinding read_binding(const json& b, const std::string& where) {
    proposers::ProposerBinding out;
    out.id = b["id"].get<std::string>();
    const auto kind = b["kind"].get<std::string>();
    if (kind == "mock") out.kind = proposers::ProposerBinding::Kind::ScriptedMock;
    else if (kind == "remote") out.kind = proposers::ProposerBinding::Kind::RemoteApi;
    else if (kind == "local") out.kind = proposers::ProposerBinding::Kind::LocalEndpoint;
    else throw ConfigError(where + ".kind must be mock, remote or local, got '" + kind + "'");
    out.seed = as_u64(b["seed"], where + ".seed");
    out.script_path = b["script"].get<std::string>();
    out.endpoint = b["endpoint"].get<std::string>();
    out.model_name = b["model"].get<std::string>();
    out.auth_env_var = b["auth_env"].get<std::string>();
    out.model_ref = b["model_ref"].get<std::string>();
    out.logprob_endpoint = b["logprob_endpoint"].get<std::string>();
    out.supports_logprob = b["supports_logprob"].get<bool>();
    const auto retries = as_i64(b["max_retries"], where + ".max_retries");
    if (retries < 0) throw ConfigError(where + ".max_retries must be >= 0");
    out.max_retries = static_cast<int>(retries);
    out.temperature = b["temperature"].get<double>();
    out.timeout = std::chrono::milliseconds(as_u64(b["timeout_ms"], where + ".timeout_ms"));
    if (out.id.empty()) throw ConfigError(where + ".id must not be empty");
    if (out.kind != proposers::ProposerBinding::Kind::ScriptedMock && out.endpoint.empty()) {
        throw ConfigError(where + ".endpoint is required for kind '" + kind + "'");
    }
    return out;
}

std::vector<ObjectiveSpec> read_objectives(const json& arr) {
    std::vector<ObjectiveSpec> out;
    std::size_t i = 0;
    for (const auto& o : arr) {
        const std::string where = "scorer.objectives[" + std::to_string(i++) + "]";
        if (!o.is_object()) throw ConfigError(where + " must be an object");
        for (const auto& [k, v] : o.items()) {
            if (k != "name" && k != "direction" && k != "lo" && k != "hi" && k != "label" && k != "brief") {
                throw ConfigError("unknown config key '" + where + "." + k + "'");
            }
        }
        ObjectiveSpec s;
        try {
            s.name = o.at("name").get<std::string>();
            s.direction = direction_from_string(o.at("direction").get<std::string>());
            if (o.contains("lo") || o.contains("hi")) s.raw_range = RawRange{o.at("lo").get<double>(), o.at("hi").get<double>()};
            s.label = o.value("label", s.name);
            s.brief = o.value("brief", "");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(where + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

json default_config_json() {
    json j;
    j["population_size"] = 100;
    j["generations"] = 50;
    j["seed"] = 0;
    j["init"] = {{"kind", "proposer"}, {"path", ""}, {"sample_n", 0}, {"binding", "frozen"}, {"max_prompts", 0}};
    j["alternation"] = 0.5;
    j["selection"] = {{"kind", "tournament"}, {"size", 3}};
    j["update_every"] = 0;
    j["window"] = 0;
    j["alpha"] = 0.3;
    j["pairs_per_prompt"] = 1;
    j["beta"] = 0.1;
    j["concurrency"] = 4;
    j["encoding"] = "SMILES";
    j["scorer"] = {{"kind", "builtin"}, {"preset", "surrogate"}, {"objectives", json::array()},
                   {"command", ""},     {"url", ""},             {"timeout_ms", 30000}};
    j["fingerprinter"] = {{"kind", "ngram"}, {"command", ""}, {"timeout_ms", 30000}};
    j["proposers"] = {{"frozen", binding_defaults("frozen", 1)}, {"trainable", binding_defaults("trainable", 2)}};
    j["trainer"] = {{"kind", "mock"}, {"learning_rate", 1.0}, {"command", ""}, {"url", ""}, {"timeout_ms", 600000}};
    return j;
}

void RunConfig::validate() const {
    if (M < 2 || M % 2 != 0) throw ConfigError("population_size must be even and at least 2");
    if (G < 1) throw ConfigError("generations must be at least 1");
    if (!(alpha > 0.0 && alpha <= 0.5)) throw ConfigError("alpha must lie in (0, 0.5]");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("alternation must lie in [0, 1]");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (update_every_f < 1) throw ConfigError("update_every must be at least 1");
    if (window_L < 1) throw ConfigError("window must be at least 1");
    if (pairs_r < 1) throw ConfigError("pairs_per_prompt must be at least 1");
    if (concurrency < 1) throw ConfigError("concurrency must be at least 1");
    if (selection.kind == SelectionConfig::Kind::Tournament && selection.tournament_size < 1) {
        throw ConfigError("selection.size must be at least 1");
    }
    if (init.kind == InitConfig::Kind::FromFile) {
        if (init.path.empty()) throw ConfigError("init.path is required for file initialization");
        if (init.sample_n != 0 && (init.sample_n < 2 || init.sample_n > M)) {
            throw ConfigError("init.sample_n must lie in [2, population_size]");
        }
    }
    if (scorer.kind == ScorerConfig::Kind::Builtin && scorer.preset != "surrogate") {
        throw ConfigError("the builtin scorer only implements the surrogate suite; use an external scorer for '" +
                          scorer.preset + "'");
    }
    if (scorer.kind == ScorerConfig::Kind::Subprocess && scorer.command.empty()) {
        throw ConfigError("scorer.command is required for a subprocess scorer");
    }
    if (scorer.kind == ScorerConfig::Kind::Http && scorer.url.empty()) {
        throw ConfigError("scorer.url is required for an http scorer");
    }
    if (fingerprinter.external && fingerprinter.command.empty()) {
        throw ConfigError("fingerprinter.command is required for an external fingerprinter");
    }
    if (trainer.kind == TrainerConfig::Kind::Subprocess && trainer.command.empty()) {
        throw ConfigError("trainer.command is required for a subprocess trainer");
    }
    if (trainer.kind == TrainerConfig::Kind::Http && trainer.url.empty()) {
        throw ConfigError("trainer.url is required for an http trainer");
    }
    if (frozen.id == trainable.id) throw ConfigError("the two proposer bindings need distinct ids");
}

RunConfig load_config(const json& user, std::span<const std::string> overrides) {
    json j = default_config_json();
    merge_into(j, user, "");
    for (const auto& o : overrides) apply_override(j, o);

    RunConfig c;
    c.M = as_u64(j["population_size"], "population_size");
    const auto g = as_i64(j["generations"], "generations");
    if (g < 1 || g > 1000000) throw ConfigError("generations must be at least 1");
    c.G = static_cast<int>(g);
    c.seed = as_u64(j["seed"], "seed");

    const auto& init = j["init"];
    const auto init_kind = init["kind"].get<std::string>();
    if (init_kind == "file") c.init.kind = InitConfig::Kind::FromFile;
    else if (init_kind == "proposer") c.init.kind = InitConfig::Kind::FromProposer;
    else throw ConfigError("init.kind must be file or proposer, got '" + init_kind + "'");
    c.init.path = init["path"].get<std::string>();
    c.init.sample_n = as_u64(init["sample_n"], "init.sample_n");
    c.init.binding = init["binding"].get<std::string>();
    if (c.init.binding != "frozen" && c.init.binding != "trainable") {
        throw ConfigError("init.binding must be frozen or trainable");
    }
    c.init.max_prompts = as_u64(init["max_prompts"], "init.max_prompts");

    c.rho = j["alternation"].get<double>();
    const auto sel = j["selection"]["kind"].get<std::string>();
    if (sel == "tournament") c.selection.kind = SelectionConfig::Kind::Tournament;
    else if (sel == "proportional") c.selection.kind = SelectionConfig::Kind::FitnessProportional;
    else throw ConfigError("selection.kind must be tournament or proportional, got '" + sel + "'");
    c.selection.tournament_size = as_u64(j["selection"]["size"], "selection.size");

    const auto f = as_u64(j["update_every"], "update_every");
    c.update_every_f = f == 0 ? 2 * c.M : f;
    const auto L = as_u64(j["window"], "window");
    c.window_L = L == 0 ? c.M : L;
    c.alpha = j["alpha"].get<double>();
    c.pairs_r = as_u64(j["pairs_per_prompt"], "pairs_per_prompt");
    c.beta = j["beta"].get<double>();
    c.concurrency = as_u64(j["concurrency"], "concurrency");
    c.encoding = j["encoding"].get<std::string>();

    const auto& sc = j["scorer"];
    const auto sk = sc["kind"].get<std::string>();
    if (sk == "builtin") c.scorer.kind = ScorerConfig::Kind::Builtin;
    else if (sk == "subprocess") c.scorer.kind = ScorerConfig::Kind::Subprocess;
    else if (sk == "http") c.scorer.kind = ScorerConfig::Kind::Http;
    else throw ConfigError("scorer.kind must be builtin, subprocess or http, got '" + sk + "'");
    c.scorer.preset = sc["preset"].get<std::string>();
    c.scorer.objectives = read_objectives(sc["objectives"]);
    c.scorer.command = sc["command"].get<std::string>();
    c.scorer.url = sc["url"].get<std::string>();
    c.scorer.timeout = std::chrono::milliseconds(as_u64(sc["timeout_ms"], "scorer.timeout_ms"));

    const auto& fp = j["fingerprinter"];
    const auto fk = fp["kind"].get<std::string>();
    if (fk != "ngram" && fk != "external") throw ConfigError("fingerprinter.kind must be ngram or external");
    c.fingerprinter.external = fk == "external";
    c.fingerprinter.command = fp["command"].get<std::string>();
    c.fingerprinter.timeout = std::chrono::milliseconds(as_u64(fp["timeout_ms"], "fingerprinter.timeout_ms"));

    c.frozen = read_binding(j["proposers"]["frozen"], "proposers.frozen");
    c.trainable = read_binding(j["proposers"]["trainable"], "proposers.trainable");

    const auto& tr = j["trainer"];
    const auto tk = tr["kind"].get<std::string>();
    if (tk == "mock") c.trainer.kind = TrainerConfig::Kind::Mock;
    else if (tk == "subprocess") c.trainer.kind = TrainerConfig::Kind::Subprocess;
    else if (tk == "http") c.trainer.kind = TrainerConfig::Kind::Http;
    else throw ConfigError("trainer.kind must be mock, subprocess or http, got '" + tk + "'");
    c.trainer.learning_rate = tr["learning_rate"].get<double>();
    c.trainer.command = tr["command"].get<std::string>();
    c.trainer.url = tr["url"].get<std::string>();
    c.trainer.timeout = std::chrono::milliseconds(as_u64(tr["timeout_ms"], "trainer.timeout_ms"));

    c.validate();
    j["update_every"] = c.update_every_f;
    j["window"] = c.window_L;
    c.source = std::move(j);
    return c;
}

RunConfig load_config_file(const std::filesystem::path& path, std::span<const std::string> overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
    return load_config(user, overrides);
}

}  // namespace mcce::engine
