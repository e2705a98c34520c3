#include "mcce/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "mcce/errors.hpp"
#include "mcce/process.hpp"
#include "mcce/version.hpp"

namespace mcce::engine {

using json = nlohmann::ordered_json;

bool slot_uses_frozen(std::size_t slot, double rho) {
    const double i = static_cast<double>(slot);
    return std::floor((i + 1.0) * rho) - std::floor(i * rho) == 1.0;
}

namespace {

struct Rankings {
    std::map<CandidateId, std::size_t> rank;
    const std::map<CandidateId, double>* crowding = nullptr;
};

Rankings rankings_of(const pareto::ParetoFront& front) {
    Rankings r;
    for (std::size_t k = 0; k < front.ranks.size(); ++k) {
        for (auto id : front.ranks[k]) r.rank[id] = k;
    }
    r.crowding = &front.crowding;
    return r;
}

// True when a should win a tournament against b.
bool better(const Candidate& a, const Candidate& b, const Rankings& r) {
    const auto ra = r.rank.at(a.id), rb = r.rank.at(b.id);
    if (ra != rb) return ra < rb;
    const double ca = r.crowding->at(a.id), cb = r.crowding->at(b.id);
    if (ca != cb) return ca > cb;
    if (a.scores.scalar_fitness != b.scores.scalar_fitness) return a.scores.scalar_fitness > b.scores.scalar_fitness;
    return a.id < b.id;
}

std::size_t tournament(const std::vector<const Candidate*>& pool, std::size_t k, const Rankings& r, Rng& rng) {
    // k distinct entrants by a partial Fisher-Yates shuffle
    k = std::min(k, pool.size());
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
        if (best == pool.size() || better(*pool[idx[i]], *pool[best], r)) best = idx[i];
    }
    return best;
}

std::size_t roulette(const std::vector<const Candidate*>& pool, Rng& rng) {
    constexpr double eps = 1e-9;
    double total = 0.0;
    for (const auto* c : pool) total += std::max(0.0, c->scores.scalar_fitness) + eps;
    double x = rng.uniform() * total;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        x -= std::max(0.0, pool[i]->scores.scalar_fitness) + eps;
        if (x < 0.0) return i;
    }
    return pool.size() - 1;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

CandidateEntry scored_entry(CandidateId id, const Genotype& g, const ScoreVector& sv) {
    CandidateEntry e;
    e.id = id;
    e.genotype = g.text;
    e.status = EntryStatus::Scored;
    e.valid = true;
    e.evaluated = true;
    e.raw = sv.raw;
    e.oriented = sv.oriented;
    e.fitness = sv.scalar_fitness;
    return e;
}

Candidate candidate_of(const CandidateEntry& e, const TrajectoryRecord& rec) {
    Candidate c;
    c.id = e.id;
    c.genotype = Genotype(e.genotype);
    c.scores.raw = e.raw;
    c.scores.oriented = e.oriented;
    c.scores.scalar_fitness = e.fitness;
    c.valid = e.valid;
    c.proposer_id = rec.proposer_id;
    c.parent_ids = rec.parent_ids;
    c.generation = rec.generation;
    return c;
}

json snapshot_json(const synthesis::SynthesisReport& r) { return json::parse(r.to_json()); }

}  // namespace

std::pair<Candidate, Candidate> select_parents(const Population& pop, const pareto::ParetoFront& front,
                                               const SelectionConfig& selection, Rng& rng) {
    if (pop.members.size() < 2) throw Error("parent selection needs at least two members");
    std::vector<const Candidate*> pool;
    pool.reserve(pop.members.size());
    for (const auto& m : pop.members) pool.push_back(&m);

    if (selection.kind == SelectionConfig::Kind::Tournament) {
        const auto r = rankings_of(front);
        const auto first = tournament(pool, selection.tournament_size, r, rng);
        const Candidate* p1 = pool[first];
        // Re-drawing until distinct is the same as drawing from the others.
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(first));
        const Candidate* p2 = pool[tournament(pool, selection.tournament_size, r, rng)];
        return {*p1, *p2};
    }
    const auto first = roulette(pool, rng);
    const Candidate* p1 = pool[first];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(first));
    const Candidate* p2 = pool[roulette(pool, rng)];
    return {*p1, *p2};
}

std::pair<Candidate, Candidate> select_parents(const Population& pop, const SelectionConfig& selection, Rng& rng) {
    if (pop.members.size() < 2) throw Error("parent selection needs at least two members");
    return select_parents(pop, pareto::nondominated_sort(pop.members), selection, rng);
}

Engine::Engine(RunConfig config, std::optional<std::filesystem::path> output_dir)
    : config_(std::move(config)), out_dir_(std::move(output_dir)) {
    config_.validate();

    switch (config_.scorer.kind) {
        case ScorerConfig::Kind::Builtin:
            scorer_ = std::make_unique<objectives::SurrogateScorer>();
            break;
        case ScorerConfig::Kind::Subprocess:
        case ScorerConfig::Kind::Http: {
            auto registry = config_.scorer.objectives.empty() ? objectives::registry_preset(config_.scorer.preset)
                                                              : ObjectiveRegistry(config_.scorer.objectives);
            objectives::ExternalTransport t;
            if (config_.scorer.kind == ScorerConfig::Kind::Subprocess) {
                t.kind = objectives::ExternalTransport::Kind::Subprocess;
                t.argv = split_command(config_.scorer.command);
            } else {
                t.kind = objectives::ExternalTransport::Kind::Http;
                t.url = config_.scorer.url;
            }
            scorer_ = std::make_unique<objectives::ExternalScorer>(std::move(registry), std::move(t),
                                                                   config_.scorer.timeout);
            break;
        }
    }
    proposers::check_prompt_registry(scorer_->registry());

    if (config_.fingerprinter.external) {
        external_fp_ = std::make_unique<similarity::ExternalFingerprinter>(split_command(config_.fingerprinter.command),
                                                                           config_.fingerprinter.timeout);
    }

    policies_ = std::make_shared<proposers::MockPolicyStore>();
    frozen_ = proposers::make_proposer(config_.frozen, policies_);
    trainable_ = proposers::make_proposer(config_.trainable, policies_);

    switch (config_.trainer.kind) {
        case TrainerConfig::Kind::Mock:
            trainer_ = std::make_unique<trainer::MockTrainer>(policies_, config_.trainer.learning_rate);
            break;
        case TrainerConfig::Kind::Subprocess:
            trainer_ = std::make_unique<trainer::SubprocessTrainer>(split_command(config_.trainer.command),
                                                                    config_.trainer.timeout);
            break;
        case TrainerConfig::Kind::Http:
            trainer_ = std::make_unique<trainer::HttpTrainer>(config_.trainer.url, config_.trainer.timeout);
            break;
    }
    reference_model_ref_ = trainable_->model_ref();
    trainer_->set_current_model_ref(reference_model_ref_);

    if (out_dir_) {
        std::filesystem::create_directories(*out_dir_);
        store_ = std::make_unique<TrajectoryStore>(*out_dir_ / "trajectory.jsonl");
        std::ofstream pairs(*out_dir_ / "pairs.jsonl", std::ios::binary | std::ios::trunc);
        if (!pairs) throw IoError("cannot create '" + (*out_dir_ / "pairs.jsonl").string() + "'");
    } else {
        store_ = std::make_unique<TrajectoryStore>();
    }

    tracker_ = std::make_unique<metrics::MetricsTracker>(
        scorer_->registry().size(), static_cast<double>(config_.G) * static_cast<double>(config_.M));
    state_.rng = Rng(splitmix64(config_.seed ^ 0x6d6363652d72756eULL));
    state_.model_ref = reference_model_ref_;
    state_.population.capacity = config_.M;
}

Engine::~Engine() {
    if (temp_dir_) {
        std::error_code ec;
        std::filesystem::remove_all(*temp_dir_, ec);
    }
}

void Engine::log(std::string msg) { events_.push_back(std::move(msg)); }

std::uint64_t Engine::next_prompt_id() { return ++prompt_counter_; }

const similarity::Fingerprinter& Engine::fingerprinter() const {
    return external_fp_ ? *external_fp_ : similarity::default_fingerprinter();
}

const proposers::Proposer& Engine::init_binding() const {
    return config_.init.binding == "trainable" ? *trainable_ : *frozen_;
}

std::filesystem::path Engine::dataset_dir() {
    std::filesystem::path dir;
    if (out_dir_) {
        dir = *out_dir_ / "datasets";
    } else {
        if (!temp_dir_) {
            std::ostringstream name;
            name << "mcce-" << ::getpid() << "-" << std::hex << reinterpret_cast<std::uintptr_t>(this);
            temp_dir_ = std::filesystem::temp_directory_path() / name.str();
        }
        dir = *temp_dir_;
    }
    std::filesystem::create_directories(dir);
    return dir;
}

void Engine::commit_init(std::vector<CandidateEntry> entries, const std::string& proposer_id,
                         const std::string& model_ref, const std::string& prompt_text) {
    TrajectoryRecord rec;
    rec.kind = RecordKind::Init;
    rec.prompt_id = 0;
    rec.timestamp = 0;
    rec.generation = 0;
    rec.proposer_id = proposer_id;
    rec.model_ref = model_ref;
    rec.prompt_text = prompt_text;
    rec.candidates = std::move(entries);
    RunHeader h;
    h.capacity = config_.M;
    h.generations = config_.G;
    h.seed = config_.seed;
    h.objectives.assign(scorer_->registry().specs().begin(), scorer_->registry().specs().end());
    h.scorer = scorer_->description();
    h.fingerprinter = fingerprinter().name();
    rec.run = std::move(h);

    state_.population.members.clear();
    for (const auto& e : rec.candidates) state_.population.members.push_back(candidate_of(e, rec));
    state_.population.capacity = config_.M;
    state_.population.generation = 0;
    state_.archive.clear();
    pareto::update_archive(state_.archive, state_.population.members);

    tracker_->observe(rec);
    tracker_->mark_start();
    store_->append(std::move(rec));
    initialized_ = true;
}

void Engine::init_from_file() {
    std::ifstream in(config_.init.path, std::ios::binary);
    if (!in) throw InitFailed("cannot open initial population file '" + config_.init.path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) lines.push_back(std::move(t));
    }
    // Seeded Fisher-Yates; taking the prefix is uniform sampling without replacement.
    for (std::size_t i = lines.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(state_.rng.below(i));
        std::swap(lines[i - 1], lines[j]);
    }

    const std::size_t target = config_.init.sample_n == 0 ? config_.M : config_.init.sample_n;
    std::vector<CandidateEntry> accepted;
    std::set<std::string> seen;
    std::size_t invalid = 0, duplicates = 0, unscored = 0;
    std::size_t next = 0;
    while (accepted.size() < target && next < lines.size()) {
        std::vector<Genotype> batch;
        while (batch.size() < target - accepted.size() && next < lines.size()) {
            const auto& text = lines[next++];
            if (!seen.insert(text).second) {
                ++duplicates;
                continue;
            }
            Genotype g(text);
            if (!scorer_->validate(g)) {
                ++invalid;
                continue;
            }
            batch.push_back(std::move(g));
        }
        if (batch.empty()) break;
        const auto outcomes = scorer_->score_batch(batch);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (outcomes[i].ok()) {
                accepted.push_back(scored_entry(++candidate_counter_, batch[i], outcomes[i].scores));
            } else if (outcomes[i].status == objectives::ScoreOutcome::Status::Invalid) {
                ++invalid;
            } else {
                ++unscored;
            }
        }
    }
    if (accepted.size() < target) {
        throw InitFailed("initial population file '" + config_.init.path + "' yielded " +
                         std::to_string(accepted.size()) + " valid distinct genotypes, need " +
                         std::to_string(target) + " (" + std::to_string(lines.size()) + " lines, " +
                         std::to_string(invalid) + " invalid, " + std::to_string(duplicates) + " duplicates, " +
                         std::to_string(unscored) + " unscored)");
    }
    log("initial population: " + std::to_string(accepted.size()) + " genotypes sampled from " + config_.init.path);
    commit_init(std::move(accepted), "file", "", "");
}

void Engine::init_from_proposer() {
    const auto& proposer = init_binding();
    auto prompt = proposers::build_seed_prompt(scorer_->registry(), config_.encoding);
    const std::size_t max_prompts = config_.init.max_prompts == 0 ? 4 * config_.M : config_.init.max_prompts;
    std::vector<CandidateEntry> accepted;
    std::set<std::string> seen;
    std::size_t failed = 0, invalid = 0, duplicates = 0, unscored = 0, issued = 0;
    const std::string model_ref = proposer.model_ref();
    while (accepted.size() < config_.M && issued < max_prompts) {
        prompt.sample_nonce = issued++;
        proposers::ProposalResult res;
        try {
            res = proposers::propose(prompt, proposer);
        } catch (const Error&) {
            ++failed;
            continue;
        }
        std::vector<Genotype> batch;
        for (auto& g : res.parsed) {
            if (!seen.insert(g.text).second) {
                ++duplicates;
                continue;
            }
            if (!scorer_->validate(g)) {
                ++invalid;
                continue;
            }
            batch.push_back(g);
        }
        if (batch.empty()) continue;
        const auto outcomes = scorer_->score_batch(batch);
        for (std::size_t i = 0; i < batch.size() && accepted.size() < config_.M; ++i) {
            if (outcomes[i].ok()) {
                accepted.push_back(scored_entry(++candidate_counter_, batch[i], outcomes[i].scores));
            } else if (outcomes[i].status == objectives::ScoreOutcome::Status::Invalid) {
                ++invalid;
            } else {
                ++unscored;
            }
        }
    }
    if (accepted.size() < config_.M) {
        throw InitFailed("proposer '" + proposer.binding().id + "' produced " + std::to_string(accepted.size()) +
                         " valid distinct candidates in " + std::to_string(issued) + " seed prompts, need " +
                         std::to_string(config_.M) + " (" + std::to_string(failed) + " failed prompts, " +
                         std::to_string(invalid) + " invalid, " + std::to_string(duplicates) + " duplicates, " +
                         std::to_string(unscored) + " unscored)");
    }
    log("initial population: " + std::to_string(accepted.size()) + " candidates from " + std::to_string(issued) +
        " seed prompts to '" + proposer.binding().id + "'");
    commit_init(std::move(accepted), proposer.binding().id, model_ref, prompt.rendered_text);
}

const Population& Engine::init_population() {
    if (initialized_) throw Error("population already initialized");
    if (config_.init.kind == InitConfig::Kind::FromFile) {
        init_from_file();
    } else {
        init_from_proposer();
    }
    return state_.population;
}

void Engine::step_generation() {
    if (!initialized_) init_population();
    const int gen = state_.generation + 1;
    const std::size_t slots = config_.M / 2;
    const auto front = pareto::nondominated_sort(state_.population.members);

    struct Slot {
        proposers::PromptSpec prompt;
        const proposers::Proposer* proposer = nullptr;
        std::string model_ref;
        std::optional<proposers::ProposalResult> result;
        std::string error;
    };
    std::vector<Slot> work(slots);
    for (std::size_t i = 0; i < slots; ++i) {
        auto [p1, p2] = select_parents(state_.population, front, config_.selection, state_.rng);
        auto& s = work[i];
        s.proposer = slot_uses_frozen(i, config_.rho) ? frozen_.get() : trainable_.get();
        s.prompt = proposers::build_prompt(p1, p2, scorer_->registry(), config_.encoding);
        s.prompt.sample_nonce = next_prompt_id();
        s.model_ref = s.proposer->model_ref();
    }

    // Slots run concurrently; results are committed below in slot order.
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (std::size_t i = cursor++; i < slots; i = cursor++) {
            auto& s = work[i];
            try {
                s.result = proposers::propose(s.prompt, *s.proposer);
            } catch (const std::exception& e) {
                s.error = e.what();
            }
        }
    };
    const std::size_t threads = std::min(config_.concurrency, slots);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::map<std::string, const Candidate*> known;
    for (const auto& c : state_.population.members) known.emplace(c.genotype.text, &c);
    for (const auto& c : state_.archive) known.emplace(c.genotype.text, &c);

    std::vector<TrajectoryRecord> records(slots);
    std::map<std::string, std::pair<std::size_t, std::size_t>> first_seen;  // genotype -> (slot, entry)
    std::vector<std::pair<std::size_t, std::size_t>> pending;
    std::vector<Genotype> batch;
    for (std::size_t i = 0; i < slots; ++i) {
        auto& s = work[i];
        auto& rec = records[i];
        rec.kind = RecordKind::Prompt;
        rec.prompt_id = s.prompt.sample_nonce;
        rec.timestamp = s.prompt.sample_nonce;
        rec.generation = gen;
        rec.proposer_id = s.proposer->binding().id;
        rec.model_ref = s.model_ref;
        rec.parent_ids = s.prompt.parent_ids;
        rec.parent_genotypes = s.prompt.parent_genotypes;
        rec.prompt_text = s.prompt.rendered_text;
        if (!s.result) {
            rec.error = s.error.empty() ? "proposer failed" : s.error;
            log("generation " + std::to_string(gen) + " prompt " + std::to_string(rec.prompt_id) + ": " + *rec.error);
            continue;
        }
        for (const auto& g : s.result->parsed) {
            CandidateEntry e;
            e.id = ++candidate_counter_;
            e.genotype = g.text;
            const auto k = known.find(g.text);
            if (k != known.end()) {
                e.status = EntryStatus::Duplicate;
                e.valid = true;
                e.raw = k->second->scores.raw;
                e.oriented = k->second->scores.oriented;
                e.fitness = k->second->scores.scalar_fitness;
            } else if (first_seen.count(g.text)) {
                e.status = EntryStatus::Duplicate;  // resolved after scoring
            } else if (!scorer_->validate(g)) {
                e.status = EntryStatus::Invalid;
                first_seen.emplace(g.text, std::make_pair(i, rec.candidates.size()));
            } else {
                first_seen.emplace(g.text, std::make_pair(i, rec.candidates.size()));
                pending.emplace_back(i, rec.candidates.size());
                batch.push_back(g);
            }
            rec.candidates.push_back(std::move(e));
        }
    }

    if (!batch.empty()) {
        const auto outcomes = scorer_->score_batch(batch);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            auto& e = records[pending[b].first].candidates[pending[b].second];
            const auto& o = outcomes[b];
            if (o.ok()) {
                e.status = EntryStatus::Scored;
                e.valid = true;
                e.evaluated = true;
                e.raw = o.scores.raw;
                e.oriented = o.scores.oriented;
                e.fitness = o.scores.scalar_fitness;
            } else if (o.status == objectives::ScoreOutcome::Status::Invalid) {
                e.status = EntryStatus::Invalid;
                e.evaluated = true;
            } else {
                e.status = EntryStatus::ScorerError;
                log("generation " + std::to_string(gen) + " candidate " + std::to_string(e.id) +
                    ": scorer unavailable: " + o.error);
            }
        }
    }

    std::vector<Candidate> offspring;
    for (auto& rec : records) {
        for (auto& e : rec.candidates) {
            if (e.status == EntryStatus::Duplicate && e.oriented.empty() && !known.count(e.genotype)) {
                const auto [si, ei] = first_seen.at(e.genotype);
                const auto& src = records[si].candidates[ei];
                if (src.status == EntryStatus::Scored) {
                    e.valid = true;
                    e.raw = src.raw;
                    e.oriented = src.oriented;
                    e.fitness = src.fitness;
                } else {
                    e.status = src.status;
                }
            }
            if (e.has_scores()) {
                e.sim = similarity::prompt_similarity(Genotype(e.genotype), rec.parent_genotypes, fingerprinter());
            }
            if (e.evaluated) ++state_.evaluations_used;
            if (e.status == EntryStatus::Scored) offspring.push_back(candidate_of(e, rec));
        }
        tracker_->observe(rec);
        store_->append(rec);
    }

    std::vector<Candidate> pool = state_.population.members;
    pool.insert(pool.end(), offspring.begin(), offspring.end());
    state_.population = pareto::select_survivors(pool, config_.M);
    state_.population.generation = gen;
    pareto::update_archive(state_.archive, offspring);
    state_.generation = gen;
    prompts_per_gen_.push_back(slots);
    state_.timeline.push_back(
        tracker_->snapshot(gen, state_.evaluations_used, state_.population.members, state_.archive));
}

void Engine::maybe_update() {
    if (state_.evaluations_used - state_.last_update_at < config_.update_every_f) return;
    state_.last_update_at = state_.evaluations_used;

    UpdateEvent ev;
    ev.generation = state_.generation;
    ev.evaluations = state_.evaluations_used;
    ev.model_ref = trainable_->model_ref();
    auto result = synthesis::synthesize(store_->records(), config_.window_L, config_.alpha, config_.pairs_r,
                                        prompt_counter_);
    ev.report = result.report;
    ev.dataset_size = result.dataset.size();
    if (result.dataset.empty()) {
        ev.outcome = "empty";
        ev.detail = result.report.note;
        log("update at " + std::to_string(ev.evaluations) + " evaluations skipped: empty dataset");
        updates_.push_back(std::move(ev));
        return;
    }
    std::ostringstream name;
    name << "update_" << std::setw(4) << std::setfill('0') << (updates_.size() + 1) << ".jsonl";
    const auto path = dataset_dir() / name.str();
    try {
        trainer::export_dataset(result.dataset, path);
        ev.dataset_path = out_dir_ ? (std::filesystem::path("datasets") / name.str()).string() : name.str();
        if (out_dir_) {
            std::ofstream pairs(*out_dir_ / "pairs.jsonl", std::ios::binary | std::ios::app);
            for (const auto& t : result.dataset) pairs << synthesis::encode_triplet(t) << '\n';
            if (!pairs) throw IoError("append to pairs.jsonl failed");
        }
        const auto ref = trainer::invoke_update(*trainer_, path, config_.beta);
        trainable_->set_model_ref(ref);
        state_.model_ref = ref;
        ev.outcome = "updated";
        ev.model_ref = ref;
        log("update " + std::to_string(trainer_->update_count()) + " at " + std::to_string(ev.evaluations) +
            " evaluations: " + std::to_string(ev.dataset_size) + " pairs, model " + ref);
    } catch (const Error& e) {
        ev.outcome = "failed";
        ev.detail = e.what();
        log("update at " + std::to_string(ev.evaluations) + " evaluations failed: " + e.what());
    }
    updates_.push_back(std::move(ev));
}

json Engine::manifest() const {
    json m;
    m["schema"] = 1;
    m["tool"] = "mcce";
    m["version"] = std::string(kVersion);
    m["seed"] = config_.seed;
    m["config"] = config_.source;
    json bindings = json::array();
    for (const auto* p : {frozen_.get(), trainable_.get()}) {
        const auto& b = p->binding();
        json jb;
        jb["role"] = p == frozen_.get() ? "frozen" : "trainable";
        jb["id"] = b.id;
        jb["kind"] = std::string(proposers::to_string(b.kind));
        jb["model"] = b.model_name;
        jb["endpoint"] = b.endpoint;
        jb["auth_env"] = b.auth_env_var;
        jb["model_ref"] = p->model_ref();
        bindings.push_back(std::move(jb));
    }
    m["bindings"] = std::move(bindings);
    m["reference_model_ref"] = reference_model_ref_;
    m["scorer"] = scorer_->description();
    m["fingerprinter"] = fingerprinter().name();
    json objs = json::array();
    for (const auto& s : scorer_->registry().specs()) {
        objs.push_back({{"name", s.name}, {"direction", std::string(to_string(s.direction))}});
    }
    m["objectives"] = std::move(objs);
    m["schemas"] = {{"trajectory", kTrajectorySchemaVersion},
                    {"preference_dataset", synthesis::kDatasetSchemaVersion},
                    {"metrics_csv", std::string(metrics::kCsvHeader)}};
    m["decisions"] = {
        {"prompts_per_generation", config_.M / 2},
        {"alternation", "slot i frozen iff floor((i+1)*rho) - floor(i*rho) == 1"},
        {"deduplication", "exact genotype text against population, archive and earlier offspring"},
        {"failed_slots_retried", false},
        {"evaluations_counted", "offspring receiving a scorer verdict"},
        {"update_every", config_.update_every_f},
        {"window", config_.window_L},
        {"alpha", config_.alpha},
        {"pairs_per_prompt", config_.pairs_r},
        {"beta", config_.beta},
        {"similarity_sigma", "population"},
        {"prompt_similarity", "max over parents"},
        {"auc_budget", static_cast<std::uint64_t>(config_.G) * config_.M},
    };
    json ups = json::array();
    for (const auto& u : updates_) {
        json ju;
        ju["generation"] = u.generation;
        ju["evaluations"] = u.evaluations;
        ju["outcome"] = u.outcome;
        ju["dataset_size"] = u.dataset_size;
        ju["dataset"] = u.dataset_path;
        ju["model_ref"] = u.model_ref;
        ju["detail"] = u.detail;
        ju["synthesis"] = snapshot_json(u.report);
        ups.push_back(std::move(ju));
    }
    m["updates"] = std::move(ups);
    m["generations_completed"] = state_.generation;
    m["evaluations_used"] = state_.evaluations_used;
    m["final_model_ref"] = state_.model_ref;
    m["events"] = events_;
    return m;
}

RunReport Engine::run() {
    if (!initialized_) init_population();
    while (state_.generation < config_.G) {
        step_generation();
        maybe_update();
    }
    RunReport report;
    report.population = state_.population;
    report.archive = state_.archive;
    report.timeline = state_.timeline;
    report.updates = updates_;
    report.events = events_;
    report.manifest = manifest();
    if (out_dir_) {
        metrics::emit_report(report.timeline, *out_dir_ / "metrics.csv", *out_dir_ / "summary.json");
        std::ofstream mf(*out_dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
        mf << report.manifest.dump(2) << '\n';
        if (!mf) throw IoError("cannot write manifest.json");
    }
    return report;
}

}  // namespace mcce::engine
