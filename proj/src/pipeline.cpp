#include "hef/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hef/error.hpp"
#include "hef/random.hpp"

namespace hef {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::data, "cannot read " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

// Runs `fn`, prefixing any hef::Error with the stage name.
template <class Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::data, std::string("stage ") + name + ": " + e.what());
    }
}

std::string_view idf_corpus_name(IdfCorpus c) {
    switch (c) {
        case IdfCorpus::eval: return "eval";
        case IdfCorpus::train: return "train";
        case IdfCorpus::all: return "all";
    }
    return "eval";
}

ordered_json instruction_json(const Instruction& ins) {
    ordered_json j;
    j["dialogue_id"] = ins.dialogue_id;
    j["sections"] = {{"two_stage", ins.sections.two_stage}, {"cause", ins.sections.cause}};
    std::vector<std::string> prio;
    for (const auto& l : ins.priority) prio.push_back(l.str());
    j["priority"] = prio;
    j["high_words"] = ins.high_words;
    j["low_words"] = ins.low_words;
    j["text"] = ins.text;
    return j;
}

ordered_json parsed_json(const std::string& id, EmotionLabel gold, const ParsedOutput& p) {
    ordered_json j;
    j["dialogue_id"] = id;
    j["gold_emotion"] = gold.str();
    j["predicted_emotion"] = p.predicted_emotion ? json(p.predicted_emotion->str()) : json(nullptr);
    j["raw_emotion_text"] = p.raw_emotion_text;
    j["response"] = p.response;
    j["well_formed"] = p.well_formed;
    return j;
}

MetricsReport compute_report(const std::string& system, const std::vector<const Dialogue*>& dialogues,
                             const std::vector<SemAnnotation>& annotations, const std::vector<ParsedOutput>& parsed) {
    MetricsReport r;
    r.system = system;
    r.n_samples = dialogues.size();
    std::vector<EmotionLabel> golds;
    for (const auto* d : dialogues) golds.push_back(d->gold_emotion);
    r.accuracy = emotion_accuracy(parsed, golds);
    if (!annotations.empty())
        for (std::size_t k : {1, 3, 10, 20, 32}) r.topk_accuracy[k] = topk_accuracy(annotations, golds, k);

    std::vector<Tokens> responses;
    std::size_t unparsed = 0;
    for (const auto& p : parsed) {
        responses.push_back(tokenize(p.response));
        if (!p.predicted_emotion) ++unparsed;
    }
    auto safe_distinct = [&](std::size_t n) {
        const bool any = std::any_of(responses.begin(), responses.end(), [&](const Tokens& t) { return t.size() >= n; });
        return any ? distinct_n(responses, n) : 0.0;
    };
    r.distinct1 = safe_distinct(1);
    r.distinct2 = safe_distinct(2);
    r.unparsed_emotion_rate = parsed.empty() ? 0.0 : static_cast<double>(unparsed) / static_cast<double>(parsed.size());
    return r;
}

LlmBackendConfig backend_from_json(const json& j) {
    LlmBackendConfig b;
    const std::string kind = j.value("backend", "mock");
    if (kind == "mock") {
        b.kind = LlmBackendConfig::Kind::mock;
        const std::string policy = j.value("policy", "first_priority");
        const auto p = mock_policy_from_name(policy);
        if (!p) throw Error(ErrorKind::config, "unknown mock policy '" + policy + "'");
        b.policy = *p;
    } else if (kind == "http") {
        b.kind = LlmBackendConfig::Kind::http;
        b.endpoint = j.value("endpoint", "");
        if (b.endpoint.empty()) throw Error(ErrorKind::config, "http backend needs an endpoint");
    } else {
        throw Error(ErrorKind::config, "unknown llm backend '" + kind + "'");
    }
    if (j.contains("api_key")) throw Error(ErrorKind::config, "API keys are read from HEF_API_KEY, not from config files");
    b.canned_response = j.value("canned_response", b.canned_response);
    b.model_name = j.value("model", b.model_name);
    b.temperature = j.value("temperature", b.temperature);
    b.max_tokens = j.value("max_tokens", b.max_tokens);
    b.max_attempts = j.value("max_attempts", b.max_attempts);
    b.backoff_base_ms = j.value("backoff_base_ms", b.backoff_base_ms);
    if (b.kind == LlmBackendConfig::Kind::http && b.model_name.empty())
        throw Error(ErrorKind::config, "http backend needs a model name");
    return b;
}

ordered_json backend_to_json(const LlmBackendConfig& b) {
    ordered_json j;
    if (b.kind == LlmBackendConfig::Kind::mock) {
        j["backend"] = "mock";
        j["policy"] = std::string(to_string(b.policy));
        j["canned_response"] = b.canned_response;
        if (!b.model_name.empty()) j["model"] = b.model_name;
    } else {
        j["backend"] = "http";
        j["endpoint"] = b.endpoint;
        j["model"] = b.model_name;
        j["max_attempts"] = b.max_attempts;
        j["backoff_base_ms"] = b.backoff_base_ms;
    }
    j["temperature"] = b.temperature;
    j["max_tokens"] = b.max_tokens;
    return j;
}

std::shared_ptr<LlmClient> make_backend(const LlmBackendConfig& b, std::uint64_t seed,
                                        std::unordered_map<std::string, EmotionLabel> golds) {
    if (b.kind == LlmBackendConfig::Kind::mock) {
        MockConfig mc;
        mc.policy = b.policy;
        mc.canned_response = b.canned_response;
        mc.seed = seed;
        mc.golds = std::move(golds);
        return std::make_shared<MockClient>(std::move(mc));
    }
    HttpConfig hc;
    hc.endpoint = b.endpoint;
    hc.api_key = HttpConfig::api_key_from_env();
    hc.max_attempts = b.max_attempts;
    hc.backoff_base = std::chrono::milliseconds(b.backoff_base_ms);
    return std::make_shared<HttpClient>(std::move(hc));
}

LlmRequest make_request(const LlmBackendConfig& b, std::uint64_t seed, Instruction ins) {
    LlmRequest req;
    req.dialogue_id = ins.dialogue_id;
    req.instruction = std::move(ins);
    req.model_name = b.resolved_model_name(seed);
    req.temperature = b.temperature;
    req.max_tokens = b.max_tokens;
    return req;
}

}  // namespace

// --- config ----------------------------------------------------------------

std::string LlmBackendConfig::resolved_model_name(std::uint64_t seed) const {
    if (!model_name.empty()) return model_name;
    if (kind == Kind::mock) return "mock-" + std::string(to_string(policy)) + "-" + std::to_string(seed);
    return model_name;
}

RunConfig RunConfig::from_json(const json& j) {
    static const std::set<std::string> known = {"data_dir", "splits",      "lexicon", "sem",       "strategy",
                                                "llm",      "prompt_template", "parallelism", "seed", "output_dir",
                                                "cache",    "max_samples", "idf_corpus"};
    if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw Error(ErrorKind::config, "unknown config key '" + key + "'");
    try {
        RunConfig c;
        c.data_dir = j.value("data_dir", "");
        if (j.contains("splits")) {
            const auto& s = j.at("splits");
            c.train_split = s.value("train", c.train_split);
            c.valid_split = s.value("valid", c.valid_split);
            c.eval_split = s.value("eval", c.eval_split);
        }
        c.lexicon = j.value("lexicon", "");
        if (j.contains("sem")) {
            const auto& s = j.at("sem");
            const bool has_model = s.contains("model"), has_ann = s.contains("annotations");
            if (has_model == has_ann)
                throw Error(ErrorKind::config, "sem needs exactly one of 'model' or 'annotations'");
            c.sem.kind = has_model ? SemSource::Kind::model : SemSource::Kind::annotations;
            c.sem.path = s.at(has_model ? "model" : "annotations").get<std::string>();
        }
        if (j.contains("strategy")) {
            const auto& s = j.at("strategy");
            c.strategy.use_two_stage = s.value("two_stage", c.strategy.use_two_stage);
            c.strategy.use_cause = s.value("cause", c.strategy.use_cause);
            c.strategy.k1 = s.value("k1", c.strategy.k1);
            c.strategy.k2 = s.value("k2", c.strategy.k2);
        }
        if (j.contains("llm")) c.llm = backend_from_json(j.at("llm"));
        c.prompt_template = j.value("prompt_template", "");
        c.parallelism = j.value("parallelism", c.parallelism);
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", c.output_dir.string());
        c.cache = j.value("cache", "");
        c.max_samples = j.value("max_samples", c.max_samples);
        const std::string idf = j.value("idf_corpus", "eval");
        if (idf == "eval") c.idf_corpus = IdfCorpus::eval;
        else if (idf == "train") c.idf_corpus = IdfCorpus::train;
        else if (idf == "all") c.idf_corpus = IdfCorpus::all;
        else throw Error(ErrorKind::config, "idf_corpus must be eval, train or all");
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("invalid config: ") + e.what());
    }
}

RunConfig RunConfig::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, "cannot parse config " + path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::config, e.what());
    }
    RunConfig c = from_json(j);
    // relative paths are relative to the config file
    const fs::path base = path.parent_path();
    for (fs::path* p : {&c.data_dir, &c.lexicon, &c.sem.path, &c.prompt_template, &c.output_dir, &c.cache})
        if (!p->empty() && p->is_relative()) *p = base / *p;
    return c;
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["data_dir"] = data_dir.string();
    j["splits"] = {{"train", train_split}, {"valid", valid_split}, {"eval", eval_split}};
    j["lexicon"] = lexicon.string();
    j["sem"] = {{sem.kind == SemSource::Kind::model ? "model" : "annotations", sem.path.string()}};
    j["strategy"] = {{"two_stage", strategy.use_two_stage}, {"cause", strategy.use_cause}, {"k1", strategy.k1},
                     {"k2", strategy.k2}};
    j["llm"] = backend_to_json(llm);
    j["prompt_template"] = prompt_template.string();
    j["parallelism"] = parallelism;
    j["seed"] = seed;
    j["output_dir"] = output_dir.string();
    j["cache"] = cache.string();
    j["max_samples"] = max_samples;
    j["idf_corpus"] = std::string(idf_corpus_name(idf_corpus));
    return j;
}

void RunConfig::validate() const {
    if (data_dir.empty()) throw Error(ErrorKind::config, "data_dir is required");
    if (sem.path.empty()) throw Error(ErrorKind::config, "a SEM source (model or annotations) is required");
    if (!fs::exists(sem.path)) throw Error(ErrorKind::config, "SEM source not found: " + sem.path.string());
    if (strategy.use_cause && lexicon.empty())
        throw Error(ErrorKind::config, "the cause strategy needs an intensity lexicon");
    if (!lexicon.empty() && !fs::exists(lexicon)) throw Error(ErrorKind::config, "lexicon not found: " + lexicon.string());
    if (!prompt_template.empty() && !fs::exists(prompt_template))
        throw Error(ErrorKind::config, "prompt template not found: " + prompt_template.string());
    if (parallelism == 0) throw Error(ErrorKind::config, "parallelism must be positive");
    if (llm.kind == LlmBackendConfig::Kind::http) {
        if (llm.endpoint.empty()) throw Error(ErrorKind::config, "the http backend needs an endpoint");
        if (llm.model_name.empty()) throw Error(ErrorKind::config, "the http backend needs a model name");
        HttpConfig::api_key_from_env();
    }
    try {
        strategy.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::config, e.what());
    }
}

fs::path RunConfig::cache_path() const { return cache.empty() ? output_dir / "cache.jsonl" : cache; }

// --- stages ----------------------------------------------------------------

PreparedCorpus prepare_corpus(const RunConfig& cfg) {
    cfg.validate();
    PreparedCorpus pc;
    pc.eval = stage("ingest", [&] { return load_dataset(cfg.data_dir, cfg.eval_split); });

    pc.annotations = stage("annotate", [&] {
        std::vector<SemAnnotation> out;
        out.reserve(pc.eval.dialogues.size());
        if (cfg.sem.kind == SemSource::Kind::model) {
            const SemModel model = load_model(cfg.sem.path);
            for (const auto& d : pc.eval.dialogues) out.push_back(annotate(model, d));
            return out;
        }
        auto loaded = load_external_annotations(cfg.sem.path);
        std::unordered_map<std::string, std::size_t> by_id;
        for (std::size_t i = 0; i < loaded.size(); ++i) by_id.emplace(loaded[i].dialogue_id, i);
        for (const auto& d : pc.eval.dialogues) {
            const auto it = by_id.find(d.id);
            if (it == by_id.end()) throw Error(ErrorKind::data, "no annotation for dialogue " + d.id);
            SemAnnotation& a = loaded[it->second];
            const Tokens words = context_words(d);
            bool aligned = a.attention.size() == words.size();
            for (std::size_t i = 0; aligned && i < words.size(); ++i) aligned = a.attention[i].word == words[i];
            if (!aligned) throw Error(ErrorKind::data, "attention of dialogue " + d.id + " is not aligned with its context");
            out.push_back(std::move(a));
        }
        return out;
    });

    if (!cfg.lexicon.empty()) pc.lexicon = stage("lexicon", [&] { return load_intensity_lexicon(cfg.lexicon); });

    pc.idf = stage("idf", [&] {
        std::vector<Tokens> docs;
        auto add = [&](const Dataset& ds) {
            for (const auto& d : ds.dialogues) docs.push_back(context_words(d));
        };
        if (cfg.idf_corpus == IdfCorpus::eval || cfg.idf_corpus == IdfCorpus::all) add(pc.eval);
        if (cfg.idf_corpus == IdfCorpus::train || cfg.idf_corpus == IdfCorpus::all)
            add(load_dataset(cfg.data_dir, cfg.train_split));
        if (cfg.idf_corpus == IdfCorpus::all) add(load_dataset(cfg.data_dir, cfg.valid_split));
        return IdfTable(docs);
    });

    pc.selected.resize(pc.eval.dialogues.size());
    std::iota(pc.selected.begin(), pc.selected.end(), 0);
    if (cfg.max_samples > 0 && cfg.max_samples < pc.selected.size()) {
        Rng rng(cfg.seed);
        rng.shuffle(pc.selected);
        pc.selected.resize(cfg.max_samples);
        std::sort(pc.selected.begin(), pc.selected.end());
    }
    return pc;
}

ordered_json CauseReport::to_json(std::size_t max_examples) const {
    ordered_json j;
    j["k1"] = stats.k1;
    j["cause_set_size"] = stats.cause_set.size();
    j["avg_intensity"] = stats.avg_intensity;
    j["avg_idf"] = stats.avg_idf;
    ordered_json examples = ordered_json::array();
    for (const auto& p : partitions) {
        if (examples.size() >= max_examples) break;
        if (p.empty()) continue;
        examples.push_back({{"dialogue_id", p.dialogue_id}, {"high", p.high}, {"low", p.low}});
    }
    j["examples"] = std::move(examples);
    std::size_t with_high = 0, with_any = 0;
    for (const auto& p : partitions) {
        with_high += p.high.empty() ? 0 : 1;
        with_any += p.empty() ? 0 : 1;
    }
    j["dialogues"] = partitions.size();
    j["dialogues_with_cause_words"] = with_any;
    j["dialogues_with_high_words"] = with_high;
    return j;
}

CauseReport compute_cause_report(const PreparedCorpus& pc, std::size_t k1) {
    CauseReport r;
    r.stats = compute_cause_stats(collect_global_cause_set(pc.annotations, k1), pc.lexicon, *pc.idf, k1);
    r.partitions.reserve(pc.eval.dialogues.size());
    for (const auto& d : pc.eval.dialogues) r.partitions.push_back(partition_dialogue(d, r.stats, pc.lexicon, *pc.idf));
    return r;
}

std::vector<Instruction> build_instructions(const RunConfig& cfg, const PreparedCorpus& pc, const CauseReport* causes,
                                            const PromptTemplate& tpl) {
    std::vector<Instruction> out;
    out.reserve(pc.selected.size());
    for (std::size_t i : pc.selected) {
        const Dialogue& d = pc.eval.dialogues[i];
        std::vector<EmotionLabel> priority;
        if (cfg.strategy.use_two_stage) priority = top_k_emotions(pc.annotations[i], cfg.strategy.k2);
        CausePartition part;
        part.dialogue_id = d.id;
        if (cfg.strategy.use_cause && causes != nullptr) part = causes->partitions[i];
        try {
            out.push_back(build_instruction(d, priority, part, cfg.strategy, tpl));
        } catch (const Error& e) {
            throw Error(e.kind(), "dialogue " + d.id + ": " + e.what());
        }
    }
    return out;
}

std::shared_ptr<LlmClient> make_client(const RunConfig& cfg, const PreparedCorpus& pc) {
    std::unordered_map<std::string, EmotionLabel> golds;
    for (const auto& d : pc.eval.dialogues) golds.emplace(d.id, d.gold_emotion);
    auto inner = make_backend(cfg.llm, cfg.seed, std::move(golds));
    return std::make_shared<CachingClient>(std::move(inner), std::make_shared<ResponseCache>(cfg.cache_path()));
}

RunOutput run_prepared(const RunConfig& cfg, const PreparedCorpus& pc, LlmClient& client, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    write_text(run_dir / "config.json", cfg.to_json().dump(2) + "\n");
    stage("annotate", [&] {
        write_annotations(run_dir / "annotations.jsonl", pc.annotations);
        return 0;
    });

    std::optional<CauseReport> causes;
    if (cfg.strategy.use_cause) {
        causes = stage("cause-stats", [&] { return compute_cause_report(pc, cfg.strategy.k1); });
        write_text(run_dir / "cause_stats.json", causes->to_json().dump(2) + "\n");
    }

    const auto instructions = stage("build-prompts", [&] {
        const PromptTemplate tpl =
            cfg.prompt_template.empty() ? PromptTemplate::builtin() : PromptTemplate::load(cfg.prompt_template);
        return build_instructions(cfg, pc, causes ? &*causes : nullptr, tpl);
    });
    {
        std::ofstream out(run_dir / "prompts.jsonl", std::ios::binary);
        for (const auto& ins : instructions) out << instruction_json(ins).dump() << '\n';
    }

    std::vector<LlmRequest> requests;
    requests.reserve(instructions.size());
    for (const auto& ins : instructions) requests.push_back(make_request(cfg.llm, cfg.seed, ins));
    const auto results = stage("complete", [&] { return dispatch(client, requests, cfg.parallelism); });

    RunOutput ro;
    {
        std::ofstream out(run_dir / "raw_outputs.jsonl", std::ios::binary);
        for (const auto& r : results) {
            ro.cache_hits += r.cached ? 1 : 0;
            out << ordered_json{{"dialogue_id", r.dialogue_id}, {"text", r.text}}.dump() << '\n';
        }
    }

    std::vector<const Dialogue*> dialogues;
    std::vector<SemAnnotation> anns;
    {
        std::ofstream out(run_dir / "parsed.jsonl", std::ios::binary);
        for (std::size_t n = 0; n < results.size(); ++n) {
            const std::size_t i = pc.selected[n];
            dialogues.push_back(&pc.eval.dialogues[i]);
            anns.push_back(pc.annotations[i]);
            ro.parsed.push_back(parse_model_output(results[n].text));
            out << parsed_json(pc.eval.dialogues[i].id, pc.eval.dialogues[i].gold_emotion, ro.parsed.back()).dump()
                << '\n';
        }
    }
    ro.report = stage("metrics", [&] { return compute_report(cfg.strategy.tag(), dialogues, anns, ro.parsed); });
    write_text(run_dir / "report.json", ro.report.to_json());
    write_text(run_dir / "report.tsv", MetricsReport::tsv_header() + "\n" + ro.report.to_tsv_row() + "\n");
    return ro;
}

RunOutput run_pipeline(const RunConfig& cfg, const fs::path& run_dir) {
    const PreparedCorpus pc = prepare_corpus(cfg);
    auto client = make_client(cfg, pc);
    return run_prepared(cfg, pc, *client, run_dir);
}

std::vector<StrategyConfig> ablation_variants(const StrategyConfig& base) {
    std::vector<StrategyConfig> out;
    for (auto [two_stage, cause] : {std::pair{true, true}, {true, false}, {false, true}, {false, false}}) {
        StrategyConfig s = base;
        s.use_two_stage = two_stage;
        s.use_cause = cause;
        out.push_back(s);
    }
    return out;
}

std::vector<SweepResult> run_variants(const RunConfig& cfg, const std::vector<StrategyConfig>& variants,
                                      const fs::path& run_dir) {
    fs::create_directories(run_dir);
    write_text(run_dir / "config.json", cfg.to_json().dump(2) + "\n");
    RunConfig probe = cfg;
    probe.strategy.use_cause = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v.use_cause; });
    const PreparedCorpus pc = prepare_corpus(probe);
    auto client = make_client(cfg, pc);

    std::vector<SweepResult> results;
    std::string summary = MetricsReport::tsv_header() + "\n";
    for (const auto& v : variants) {
        RunConfig c = cfg;
        c.strategy = v;
        auto ro = run_prepared(c, pc, *client, run_dir / v.tag());
        summary += ro.report.to_tsv_row() + "\n";
        results.push_back({v, std::move(ro.report)});
    }
    write_text(run_dir / "summary.tsv", summary);
    return results;
}

MetricsReport evaluate_run_dir(const fs::path& run_dir) {
    const RunConfig cfg = stage("eval", [&] { return RunConfig::from_json(json::parse(read_text(run_dir / "config.json"))); });
    const Dataset ds = stage("ingest", [&] { return load_dataset(cfg.data_dir, cfg.eval_split); });
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const auto& d : ds.dialogues) by_id.emplace(d.id, &d);
    std::unordered_map<std::string, SemAnnotation> anns_by_id;
    if (fs::exists(run_dir / "annotations.jsonl"))
        for (auto& a : load_external_annotations(run_dir / "annotations.jsonl")) anns_by_id.emplace(a.dialogue_id, std::move(a));

    std::vector<const Dialogue*> dialogues;
    std::vector<SemAnnotation> anns;
    std::vector<ParsedOutput> parsed;
    for (const auto& row : stage("eval", [&] { return read_jsonl(run_dir / "raw_outputs.jsonl"); })) {
        const auto id = row.at("dialogue_id").get<std::string>();
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorKind::data, "stage eval: unknown dialogue " + id);
        dialogues.push_back(it->second);
        parsed.push_back(parse_model_output(row.at("text").get<std::string>()));
        if (auto a = anns_by_id.find(id); a != anns_by_id.end()) anns.push_back(a->second);
    }
    if (anns.size() != dialogues.size()) anns.clear();
    MetricsReport r = stage("metrics", [&] { return compute_report(cfg.strategy.tag(), dialogues, anns, parsed); });
    write_text(run_dir / "report.json", r.to_json());
    write_text(run_dir / "report.tsv", MetricsReport::tsv_header() + "\n" + r.to_tsv_row() + "\n");
    return r;
}

JudgeOutput run_judge(const JudgeConfig& cfg, const fs::path& out_dir) {
    auto responses = [](const fs::path& run) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& row : read_jsonl(run / "parsed.jsonl"))
            out.emplace_back(row.at("dialogue_id").get<std::string>(), row.at("response").get<std::string>());
        return out;
    };
    const auto cand = stage("judge", [&] { return responses(cfg.candidate_run); });
    const auto base_rows = stage("judge", [&] { return responses(cfg.baseline_run); });
    const std::unordered_map<std::string, std::string> base(base_rows.begin(), base_rows.end());
    const RunConfig rc =
        stage("judge", [&] { return RunConfig::from_json(json::parse(read_text(cfg.candidate_run / "config.json"))); });
    const Dataset ds = stage("ingest", [&] { return load_dataset(rc.data_dir, rc.eval_split); });
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const auto& d : ds.dialogues) by_id.emplace(d.id, &d);

    std::vector<std::size_t> shared;
    for (std::size_t i = 0; i < cand.size(); ++i)
        if (base.contains(cand[i].first) && by_id.contains(cand[i].first)) shared.push_back(i);
    if (shared.empty()) throw Error(ErrorKind::data, "stage judge: the two runs share no dialogues");
    if (cfg.samples > 0 && cfg.samples < shared.size()) {
        Rng rng(cfg.seed);
        rng.shuffle(shared);
        shared.resize(cfg.samples);
        std::sort(shared.begin(), shared.end());
    }

    std::vector<LlmRequest> requests;
    std::vector<std::pair<std::size_t, JudgeAspect>> meta;
    std::vector<bool> swapped;
    for (JudgeAspect aspect : kJudgeAspects) {
        for (std::size_t i : shared) {
            const auto& [id, text] = cand[i];
            JudgePrompt jp = build_judge_prompt(*by_id.at(id), text, base.at(id), aspect, cfg.seed);
            jp.instruction.dialogue_id = id + "#" + std::string(to_string(aspect));
            swapped.push_back(jp.swapped);
            meta.emplace_back(i, aspect);
            requests.push_back(make_request(cfg.judge, cfg.seed, std::move(jp.instruction)));
        }
    }

    fs::create_directories(out_dir);
    const fs::path cache = cfg.cache.empty() ? out_dir / "judge_cache.jsonl" : cfg.cache;
    CachingClient client(make_backend(cfg.judge, cfg.seed, {}), std::make_shared<ResponseCache>(cache));
    const auto results = stage("judge", [&] { return dispatch(client, requests, cfg.parallelism); });

    JudgeOutput jo;
    jo.samples = shared.size();
    for (JudgeAspect a : kJudgeAspects) jo.tallies.push_back(JudgeTally{a});
    std::ofstream ledger(out_dir / "verdicts.jsonl", std::ios::app | std::ios::binary);
    for (std::size_t n = 0; n < results.size(); ++n) {
        const auto [i, aspect] = meta[n];
        const JudgeVerdict v = parse_judge_verdict(results[n].text, aspect);
        const JudgeOutcome outcome = resolve_for_candidate(v.outcome, swapped[n]);
        jo.tallies[static_cast<std::size_t>(aspect)].add(outcome, v.unparsed);
        ledger << ordered_json{{"sample_id", cand[i].first},
                               {"aspect", std::string(to_string(aspect))},
                               {"permutation", swapped[n] ? "baseline_first" : "candidate_first"},
                               {"judge_text", results[n].text},
                               {"verdict", std::string(to_string(outcome))},
                               {"unparsed", v.unparsed}}
                      .dump()
               << '\n';
    }
    ordered_json report;
    report["candidate"] = cfg.candidate_run.string();
    report["baseline"] = cfg.baseline_run.string();
    report["samples"] = jo.samples;
    for (const auto& t : jo.tallies)
        report["aspects"][std::string(to_string(t.aspect))] = {
            {"win", t.wins}, {"lose", t.loses}, {"tie", t.ties}, {"unparsed", t.unparsed}};
    write_text(out_dir / "judge_report.json", report.dump(2) + "\n");
    return jo;
}

fs::path timestamped_dir(const fs::path& root) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    fs::path dir = root / buf;
    for (int n = 1; fs::exists(dir); ++n) dir = root / (std::string(buf) + "-" + std::to_string(n));
    return dir;
}

}  // namespace hef
