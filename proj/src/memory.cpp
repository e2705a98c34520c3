#include "mcce/memory.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mcce/errors.hpp"

namespace mcce {

using json = nlohmann::ordered_json;

std::string_view to_string(EntryStatus s) {
    switch (s) {
        case EntryStatus::Scored: return "scored";
        case EntryStatus::Duplicate: return "duplicate";
        case EntryStatus::Invalid: return "invalid";
        case EntryStatus::ScorerError: return "scorer_error";
    }
    return "invalid";
}

EntryStatus entry_status_from_string(std::string_view s) {
    if (s == "scored") return EntryStatus::Scored;
    if (s == "duplicate") return EntryStatus::Duplicate;
    if (s == "invalid") return EntryStatus::Invalid;
    if (s == "scorer_error") return EntryStatus::ScorerError;
    throw Error("unknown candidate status '" + std::string(s) + "'");
}

namespace {

json objective_to_json(const ObjectiveSpec& o) {
    json j;
    j["name"] = o.name;
    j["direction"] = std::string(to_string(o.direction));
    if (o.raw_range) {
        j["lo"] = o.raw_range->lo;
        j["hi"] = o.raw_range->hi;
    }
    if (!o.label.empty()) j["label"] = o.label;
    return j;
}

ObjectiveSpec objective_from_json(const json& j) {
    ObjectiveSpec o;
    o.name = j.at("name").get<std::string>();
    o.direction = direction_from_string(j.at("direction").get<std::string>());
    if (j.contains("lo")) o.raw_range = RawRange{j.at("lo").get<double>(), j.at("hi").get<double>()};
    if (j.contains("label")) o.label = j.at("label").get<std::string>();
    return o;
}

json entry_to_json(const CandidateEntry& e) {
    json j;
    j["id"] = e.id;
    j["genotype"] = e.genotype;
    j["status"] = std::string(to_string(e.status));
    j["valid"] = e.valid;
    j["evaluated"] = e.evaluated;
    j["raw"] = e.raw;
    j["oriented"] = e.oriented;
    j["fitness"] = e.fitness;
    j["sim"] = e.sim ? json(*e.sim) : json(nullptr);
    return j;
}

CandidateEntry entry_from_json(const json& j) {
    CandidateEntry e;
    e.id = j.at("id").get<CandidateId>();
    e.genotype = j.at("genotype").get<std::string>();
    e.status = entry_status_from_string(j.at("status").get<std::string>());
    e.valid = j.at("valid").get<bool>();
    e.evaluated = j.at("evaluated").get<bool>();
    e.raw = j.at("raw").get<std::vector<double>>();
    e.oriented = j.at("oriented").get<std::vector<double>>();
    e.fitness = j.at("fitness").get<double>();
    if (!j.at("sim").is_null()) e.sim = j.at("sim").get<double>();
    return e;
}

}  // namespace

std::string encode_record(const TrajectoryRecord& rec) {
    json j;
    j["schema"] = kTrajectorySchemaVersion;
    j["kind"] = rec.kind == RecordKind::Init ? "init" : "prompt";
    j["prompt_id"] = rec.prompt_id;
    j["timestamp"] = rec.timestamp;
    j["generation"] = rec.generation;
    j["proposer_id"] = rec.proposer_id;
    j["model_ref"] = rec.model_ref;
    j["parent_ids"] = rec.parent_ids;
    j["parent_genotypes"] = rec.parent_genotypes;
    j["prompt_text"] = rec.prompt_text;
    json cands = json::array();
    for (const auto& e : rec.candidates) cands.push_back(entry_to_json(e));
    j["candidates"] = std::move(cands);
    if (rec.error) j["error"] = *rec.error;
    if (rec.run) {
        json r;
        r["capacity"] = rec.run->capacity;
        r["generations"] = rec.run->generations;
        r["seed"] = rec.run->seed;
        json objs = json::array();
        for (const auto& o : rec.run->objectives) objs.push_back(objective_to_json(o));
        r["objectives"] = std::move(objs);
        r["scorer"] = rec.run->scorer;
        r["fingerprinter"] = rec.run->fingerprinter;
        j["run"] = std::move(r);
    }
    return j.dump();
}

TrajectoryRecord decode_record(std::string_view line) {
    const json j = json::parse(line);
    if (!j.is_object()) throw Error("record is not an object");
    const int schema = j.at("schema").get<int>();
    if (schema != kTrajectorySchemaVersion) throw Error("unsupported schema version " + std::to_string(schema));
    TrajectoryRecord rec;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "init") rec.kind = RecordKind::Init;
    else if (kind == "prompt") rec.kind = RecordKind::Prompt;
    else throw Error("unknown record kind '" + kind + "'");
    rec.prompt_id = j.at("prompt_id").get<std::uint64_t>();
    rec.timestamp = j.at("timestamp").get<std::uint64_t>();
    rec.generation = j.at("generation").get<int>();
    rec.proposer_id = j.at("proposer_id").get<std::string>();
    rec.model_ref = j.at("model_ref").get<std::string>();
    rec.parent_ids = j.at("parent_ids").get<std::vector<CandidateId>>();
    rec.parent_genotypes = j.at("parent_genotypes").get<std::vector<std::string>>();
    rec.prompt_text = j.at("prompt_text").get<std::string>();
    for (const auto& c : j.at("candidates")) rec.candidates.push_back(entry_from_json(c));
    if (j.contains("error")) rec.error = j.at("error").get<std::string>();
    if (j.contains("run")) {
        const auto& r = j.at("run");
        RunHeader h;
        h.capacity = r.at("capacity").get<std::size_t>();
        h.generations = r.at("generations").get<int>();
        h.seed = r.at("seed").get<std::uint64_t>();
        for (const auto& o : r.at("objectives")) h.objectives.push_back(objective_from_json(o));
        h.scorer = r.at("scorer").get<std::string>();
        h.fingerprinter = r.at("fingerprinter").get<std::string>();
        rec.run = std::move(h);
    }
    return rec;
}

TrajectoryStore::TrajectoryStore(const std::filesystem::path& path) : path_(path) {
    out_.open(path, std::ios::out | std::ios::trunc | std::ios::binary);
    if (!out_) throw IoError("cannot open trajectory log '" + path.string() + "' for writing");
}

void TrajectoryStore::append(TrajectoryRecord rec) {
    if (ids_.count(rec.prompt_id)) {
        throw StoreError("duplicate prompt_id " + std::to_string(rec.prompt_id));
    }
    if (!records_.empty()) {
        const auto& last = records_.back();
        if (rec.prompt_id <= last.prompt_id || rec.timestamp <= last.timestamp) {
            throw StoreError("prompt_id/timestamp must increase (last " + std::to_string(last.prompt_id) + ", got " +
                             std::to_string(rec.prompt_id) + ")");
        }
    }
    if (out_.is_open()) {
        const std::string line = encode_record(rec);
        out_ << line << '\n';
        out_.flush();
        if (!out_) throw IoError("write to trajectory log failed");
    }
    ids_.insert(rec.prompt_id);
    records_.push_back(std::move(rec));
}

std::vector<TrajectoryRecord> TrajectoryStore::recent_window(std::size_t L) const {
    if (L == 0) throw Error("window length must be at least 1");
    const std::size_t n = std::min(L, records_.size());
    return {records_.end() - static_cast<std::ptrdiff_t>(n), records_.end()};
}

std::vector<TrajectoryRecord> TrajectoryStore::recent_prompts(std::size_t L) const {
    if (L == 0) throw Error("window length must be at least 1");
    std::vector<TrajectoryRecord> out;
    for (auto it = records_.rbegin(); it != records_.rend() && out.size() < L; ++it) {
        if (it->kind == RecordKind::Prompt) out.push_back(*it);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

LogReader::LogReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open trajectory log '" + path.string() + "'");
}

std::optional<TrajectoryRecord> LogReader::next() {
    std::string text;
    if (!std::getline(in_, text)) return std::nullopt;
    ++line_;
    TrajectoryRecord rec;
    try {
        rec = decode_record(text);
    } catch (const std::exception& e) {
        throw LogParseError(line_, e.what());
    }
    if (last_id_ && rec.prompt_id <= *last_id_) throw LogParseError(line_, "prompt_id does not increase");
    if (last_ts_ && rec.timestamp <= *last_ts_) throw LogParseError(line_, "timestamp does not increase");
    if (rec.run) objective_count_ = rec.run->objectives.size();
    for (const auto& e : rec.candidates) {
        if (e.genotype.empty()) throw LogParseError(line_, "candidate " + std::to_string(e.id) + " has empty genotype");
        if (!e.valid) continue;
        if (e.raw.size() != e.oriented.size() || e.oriented.empty()) {
            throw LogParseError(line_, "valid candidate " + std::to_string(e.id) + " lacks a full score vector");
        }
        if (objective_count_ != 0 && e.oriented.size() != objective_count_) {
            throw LogParseError(line_, "candidate " + std::to_string(e.id) + " has wrong objective count");
        }
        for (double v : e.oriented) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw LogParseError(line_, "candidate " + std::to_string(e.id) + " has oriented score outside [0,1]");
            }
        }
        if (!std::isfinite(e.fitness)) throw LogParseError(line_, "non-finite fitness");
    }
    last_id_ = rec.prompt_id;
    last_ts_ = rec.timestamp;
    return rec;
}

std::vector<TrajectoryRecord> replay(const std::filesystem::path& path) {
    LogReader reader(path);
    std::vector<TrajectoryRecord> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

}  // namespace mcce
