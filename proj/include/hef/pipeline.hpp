#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hef/cause.hpp"
#include "hef/corpus.hpp"
#include "hef/eval.hpp"
#include "hef/lexicon.hpp"
#include "hef/llm.hpp"
#include "hef/prompt.hpp"
#include "hef/sem.hpp"

namespace hef {

/// Where per-dialogue emotion probabilities and attention come from.
struct SemSource {
    enum class Kind { model, annotations };
    Kind kind = Kind::model;
    std::filesystem::path path;
};

struct LlmBackendConfig {
    enum class Kind { mock, http };
    Kind kind = Kind::mock;
    MockPolicy policy = MockPolicy::first_priority;
    std::string canned_response = MockConfig{}.canned_response;
    std::string endpoint;
    std::string model_name;  // defaults to "mock-<policy>" for the mock
    double temperature = 0.0;
    std::size_t max_tokens = 256;
    std::size_t max_attempts = 5;
    std::int64_t backoff_base_ms = 1000;

    std::string resolved_model_name(std::uint64_t seed) const;
};

/// Which documents feed the IDF table.
enum class IdfCorpus { eval, train, all };

/// One pipeline run. Read from a single JSON file; CLI flags override
/// individual fields. The API key is never part of it.
struct RunConfig {
    std::filesystem::path data_dir;
    std::string train_split = "train";
    std::string valid_split = "valid";
    std::string eval_split = "test";
    std::filesystem::path lexicon;
    SemSource sem;
    StrategyConfig strategy;
    LlmBackendConfig llm;
    std::filesystem::path prompt_template;  // empty: built-in template
    std::size_t parallelism = 4;
    std::uint64_t seed = 13;
    std::filesystem::path output_dir = "runs";
    std::filesystem::path cache;  // empty: <output_dir>/cache.jsonl
    std::size_t max_samples = 0;  // 0: whole eval split
    IdfCorpus idf_corpus = IdfCorpus::eval;

    static RunConfig from_json(const nlohmann::json& j);  // throws hef::Error(config)
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
    void validate() const;
    std::filesystem::path cache_path() const;
};

/// Everything upstream of the LLM: the evaluation split, SEM annotations
/// aligned to it, and the tables behind cause-word partitioning.
struct PreparedCorpus {
    Dataset eval;
    std::vector<SemAnnotation> annotations;  // aligned with eval.dialogues
    IntensityLexicon lexicon;
    std::optional<IdfTable> idf;
    std::vector<std::size_t> selected;  // indices of dialogues sent to the LLM
};

PreparedCorpus prepare_corpus(const RunConfig& cfg);

/// Annotations and partitions for one strategy setting.
struct CauseReport {
    GlobalCauseStats stats;
    std::vector<CausePartition> partitions;  // aligned with eval.dialogues

    nlohmann::ordered_json to_json(std::size_t max_examples = 10) const;
};

CauseReport compute_cause_report(const PreparedCorpus& pc, std::size_t k1);

std::vector<Instruction> build_instructions(const RunConfig& cfg, const PreparedCorpus& pc,
                                            const CauseReport* causes, const PromptTemplate& tpl);

/// Backend from config, wrapped in the response cache.
std::shared_ptr<LlmClient> make_client(const RunConfig& cfg, const PreparedCorpus& pc);

struct RunOutput {
    MetricsReport report;
    std::vector<ParsedOutput> parsed;  // aligned with pc.selected
    std::size_t cache_hits = 0;
};

/// Runs annotate -> cause set -> stats -> partitions -> top-k2 -> prompts ->
/// completion -> parse -> metrics, writing every intermediate artifact into
/// `run_dir`. Errors are rethrown with the failing stage name.
RunOutput run_prepared(const RunConfig& cfg, const PreparedCorpus& pc, LlmClient& client,
                       const std::filesystem::path& run_dir);
RunOutput run_pipeline(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// The four strategy variants of one configuration, in order:
/// both strategies, two-stage only, cause only, vanilla.
std::vector<StrategyConfig> ablation_variants(const StrategyConfig& base);

struct SweepResult {
    StrategyConfig strategy;
    MetricsReport report;
};

/// Runs each strategy in its own subdirectory of `run_dir` (named by tag) and
/// writes summary.tsv.
std::vector<SweepResult> run_variants(const RunConfig& cfg, const std::vector<StrategyConfig>& variants,
                                      const std::filesystem::path& run_dir);

/// Recomputes the report from a finished run directory's raw outputs.
MetricsReport evaluate_run_dir(const std::filesystem::path& run_dir);

struct JudgeConfig {
    std::filesystem::path candidate_run;  // HEF-based run directory
    std::filesystem::path baseline_run;
    std::size_t samples = 100;
    std::uint64_t seed = 13;
    LlmBackendConfig judge;
    std::size_t parallelism = 4;
    std::filesystem::path cache;
};

struct JudgeOutput {
    std::vector<JudgeTally> tallies;  // one per aspect
    std::size_t samples = 0;
};

/// A/B judging of two runs over a seeded sample of shared dialogues. Each
/// verdict is appended to <out_dir>/verdicts.jsonl.
JudgeOutput run_judge(const JudgeConfig& cfg, const std::filesystem::path& out_dir);

/// "runs/20261016-134501"-style directory name under `root`.
std::filesystem::path timestamped_dir(const std::filesystem::path& root);

}  // namespace hef
