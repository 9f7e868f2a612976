// hef: command-line driver for the hybrid empathetic pipeline.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hef/cause.hpp"
#include "hef/corpus.hpp"
#include "hef/error.hpp"
#include "hef/eval.hpp"
#include "hef/lexicon.hpp"
#include "hef/pipeline.hpp"
#include "hef/prompt.hpp"
#include "hef/sem.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// Flags shared by every command that builds a RunConfig.
struct RunFlags {
    std::string config;
    std::string data;
    std::string eval_split;
    std::string lexicon;
    std::string model;
    std::string annotations;
    std::optional<std::size_t> k1, k2;
    bool no_two_stage = false, no_cause = false;
    std::string mock;
    std::string endpoint;
    std::string model_name;
    std::optional<std::size_t> parallelism, max_samples;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
    std::string run_dir;
    std::string cache;
    std::string prompt_template;
    std::string idf_corpus;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON run configuration");
        app->add_option("--data", data, "directory holding <split>.csv files");
        app->add_option("--split", eval_split, "evaluation split (default test)");
        app->add_option("--lexicon", lexicon, "VAD lexicon (word, valence, arousal, dominance)");
        app->add_option("--model", model, "built-in SEM checkpoint");
        app->add_option("--annotations", annotations, "external SEM annotations (JSONL)");
        app->add_option("--k1", k1, "cause words per dialogue");
        app->add_option("--k2", k2, "priority emotions per dialogue");
        app->add_flag("--no-two-stage", no_two_stage, "disable two-stage emotion prediction");
        app->add_flag("--no-cause", no_cause, "disable emotion cause perception");
        app->add_option("--mock", mock, "mock backend policy (echo_gold, first_priority, uniform_random, fixed_text)");
        app->add_option("--endpoint", endpoint, "OpenAI-compatible base URL; selects the http backend");
        app->add_option("--model-name", model_name, "model name sent to the backend");
        app->add_option("-j,--parallelism", parallelism, "max in-flight LLM requests");
        app->add_option("--max-samples", max_samples, "seeded subset size (0 = all)");
        app->add_option("--seed", seed, "seed");
        app->add_option("--output-dir", output_dir, "root for timestamped run directories");
        app->add_option("--run-dir", run_dir, "exact run directory (skips the timestamp)");
        app->add_option("--cache", cache, "response cache (JSONL)");
        app->add_option("--prompt-template", prompt_template, "instruction template file");
        app->add_option("--idf-corpus", idf_corpus, "eval, train or all");
    }

    hef::RunConfig resolve() const {
        hef::RunConfig c = config.empty() ? hef::RunConfig{} : hef::RunConfig::load(config);
        if (!data.empty()) c.data_dir = data;
        if (!eval_split.empty()) c.eval_split = eval_split;
        if (!lexicon.empty()) c.lexicon = lexicon;
        if (!model.empty() && !annotations.empty())
            throw hef::Error(hef::ErrorKind::config, "--model and --annotations are mutually exclusive");
        if (!model.empty()) c.sem = {hef::SemSource::Kind::model, model};
        if (!annotations.empty()) c.sem = {hef::SemSource::Kind::annotations, annotations};
        if (k1) c.strategy.k1 = *k1;
        if (k2) c.strategy.k2 = *k2;
        if (no_two_stage) c.strategy.use_two_stage = false;
        if (no_cause) c.strategy.use_cause = false;
        if (!mock.empty() && !endpoint.empty())
            throw hef::Error(hef::ErrorKind::config, "--mock and --endpoint are mutually exclusive");
        if (!mock.empty()) {
            const auto p = hef::mock_policy_from_name(mock);
            if (!p) throw hef::Error(hef::ErrorKind::config, "unknown mock policy '" + mock + "'");
            c.llm.kind = hef::LlmBackendConfig::Kind::mock;
            c.llm.policy = *p;
        }
        if (!endpoint.empty()) {
            c.llm.kind = hef::LlmBackendConfig::Kind::http;
            c.llm.endpoint = endpoint;
        }
        if (!model_name.empty()) c.llm.model_name = model_name;
        if (c.llm.kind == hef::LlmBackendConfig::Kind::http && c.llm.model_name.empty())
            throw hef::Error(hef::ErrorKind::config, "the http backend needs --model-name");
        if (parallelism) c.parallelism = *parallelism;
        if (max_samples) c.max_samples = *max_samples;
        if (seed) c.seed = *seed;
        if (!output_dir.empty()) c.output_dir = output_dir;
        if (!cache.empty()) c.cache = cache;
        if (!prompt_template.empty()) c.prompt_template = prompt_template;
        if (!idf_corpus.empty()) {
            if (idf_corpus == "eval") c.idf_corpus = hef::IdfCorpus::eval;
            else if (idf_corpus == "train") c.idf_corpus = hef::IdfCorpus::train;
            else if (idf_corpus == "all") c.idf_corpus = hef::IdfCorpus::all;
            else throw hef::Error(hef::ErrorKind::config, "--idf-corpus must be eval, train or all");
        }
        return c;
    }

    fs::path target_dir(const hef::RunConfig& c) const {
        return run_dir.empty() ? hef::timestamped_dir(c.output_dir) : fs::path(run_dir);
    }
};

void emit(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw hef::Error(hef::ErrorKind::data, "cannot write " + out);
    f << text;
}

std::vector<std::size_t> parse_grid(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw hef::Error(hef::ErrorKind::config, "bad grid value '" + item + "'");
        }
    }
    return out;
}

void print_report(const hef::MetricsReport& r) {
    std::cout << hef::MetricsReport::tsv_header() << '\n' << r.to_tsv_row() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid empathetic framework: SEM-guided prompting and evaluation for LLM empathetic replies"};
    app.require_subcommand(1);

    // ingest
    std::string data_dir, split = "test", out;
    auto* ingest = app.add_subcommand("ingest", "load one ED split and print a summary");
    ingest->add_option("--data", data_dir, "directory or CSV file")->required();
    ingest->add_option("--split", split, "train, valid or test");

    // train-sem
    hef::SemHyperparams hp;
    std::string train_split = "train", valid_split = "valid", test_split = "test", model_out;
    auto* train = app.add_subcommand("train-sem", "train the built-in attention classifier");
    train->add_option("--data", data_dir, "directory with train/valid/test CSVs")->required();
    train->add_option("--out", model_out, "checkpoint path")->required();
    train->add_option("--dim", hp.dim, "embedding size");
    train->add_option("--epochs", hp.epochs, "epochs");
    train->add_option("--lr", hp.learning_rate, "learning rate");
    train->add_option("--momentum", hp.momentum, "momentum");
    train->add_option("--batch", hp.batch_size, "batch size");
    train->add_option("--min-count", hp.min_count, "minimum word count for its own embedding");
    train->add_option("--seed", hp.seed, "seed");
    train->add_option("--init-scale", hp.init_scale, "uniform init range for embeddings and attention query");
    train->add_option("--train-split", train_split);
    train->add_option("--valid-split", valid_split);
    train->add_option("--test-split", test_split);

    // annotate
    std::string model_path;
    auto* annotate_cmd = app.add_subcommand("annotate", "write SEM annotations (JSONL) for a split");
    annotate_cmd->add_option("--model", model_path, "checkpoint")->required();
    annotate_cmd->add_option("--data", data_dir, "directory or CSV file")->required();
    annotate_cmd->add_option("--split", split);
    annotate_cmd->add_option("--out", out, "output JSONL")->required();

    RunFlags flags;
    auto* cause_cmd = app.add_subcommand("cause-stats", "report the global cause-word set and its averages");
    flags.attach(cause_cmd);
    std::string cause_out;
    std::size_t examples = 10;
    cause_cmd->add_option("--out", cause_out, "write JSON here instead of stdout");
    cause_cmd->add_option("--examples", examples, "example partitions to include");

    auto* prompts_cmd = app.add_subcommand("build-prompts", "write the instructions (JSONL) without calling a model");
    flags.attach(prompts_cmd);
    std::string prompts_out;
    prompts_cmd->add_option("--out", prompts_out, "write JSONL here instead of stdout");

    auto* run_cmd = app.add_subcommand("run", "run the full pipeline");
    flags.attach(run_cmd);

    std::string eval_dir;
    auto* eval_cmd = app.add_subcommand("eval", "recompute metrics for a finished run directory");
    eval_cmd->add_option("--run-dir", eval_dir, "run directory")->required();

    hef::JudgeConfig jc;
    std::string cand, base, judge_out, judge_mock = "judge_random", judge_endpoint, judge_model;
    auto* judge_cmd = app.add_subcommand("judge", "pairwise A/B judging of two runs");
    judge_cmd->add_option("--candidate", cand, "HEF-based run directory")->required();
    judge_cmd->add_option("--baseline", base, "baseline run directory")->required();
    judge_cmd->add_option("--samples", jc.samples, "dialogues to judge (default 100)");
    judge_cmd->add_option("--seed", jc.seed, "seed for sampling and A/B order");
    judge_cmd->add_option("--mock", judge_mock, "mock judge policy (judge_random, fixed_text)");
    judge_cmd->add_option("--endpoint", judge_endpoint, "judge endpoint; selects the http backend");
    judge_cmd->add_option("--model-name", judge_model, "judge model name");
    judge_cmd->add_option("-j,--parallelism", jc.parallelism);
    judge_cmd->add_option("--out", judge_out, "output directory")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "run the four strategy variants");
    flags.attach(ablate_cmd);

    std::string k1_grid = "1,5,10,15", k2_grid = "1,3,5,10,15,20,25";
    auto* sweep_cmd = app.add_subcommand("sweep", "vary k1 (cause only) and k2 (two-stage only)");
    flags.attach(sweep_cmd);
    sweep_cmd->add_option("--k1-grid", k1_grid, "comma-separated k1 values");
    sweep_cmd->add_option("--k2-grid", k2_grid, "comma-separated k2 values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ingest->parsed()) {
            const auto ds = hef::load_dataset(data_dir, split);
            std::size_t tokens = 0;
            for (const auto& d : ds.dialogues) tokens += hef::context_words(d).size();
            ordered_json j;
            j["split"] = split;
            j["rows"] = ds.rows;
            j["dialogues"] = ds.dialogues.size();
            j["dropped_no_listener"] = ds.dropped_no_listener;
            j["dropped_empty_context"] = ds.dropped_empty_context;
            j["context_tokens"] = tokens;
            std::cout << j.dump(2) << '\n';
        } else if (train->parsed()) {
            const auto tr = hef::load_dataset(data_dir, train_split);
            const auto va = hef::load_dataset(data_dir, valid_split);
            hef::TrainOptions opts;
            opts.hyper = hp;
            opts.on_epoch = [](const hef::EpochLog& log) {
                std::fprintf(stderr, "epoch %zu  loss %.4f  valid_acc %.4f  lr %.4g\n", log.epoch, log.train_loss,
                             log.valid_accuracy, log.learning_rate);
            };
            const auto model = hef::train_sem(tr.dialogues, va.dialogues, opts);
            hef::save_model(model, model_out);
            const auto te = hef::load_dataset(data_dir, test_split);
            std::vector<hef::SemAnnotation> anns;
            std::vector<hef::EmotionLabel> golds;
            for (const auto& d : te.dialogues) {
                anns.push_back(hef::annotate(model, d));
                golds.push_back(d.gold_emotion);
            }
            ordered_json j;
            j["checkpoint"] = model_out;
            j["vocab_size"] = model.vocab.size();
            j["test_samples"] = te.dialogues.size();
            for (std::size_t k : {1, 3, 10, 20, 32})
                j["test_acc" + std::to_string(k)] = hef::topk_accuracy(anns, golds, k);
            std::cout << j.dump(2) << '\n';
        } else if (annotate_cmd->parsed()) {
            const auto model = hef::load_model(model_path);
            const auto ds = hef::load_dataset(data_dir, split);
            std::vector<hef::SemAnnotation> anns;
            for (const auto& d : ds.dialogues) anns.push_back(hef::annotate(model, d));
            hef::write_annotations(out, anns);
            std::cerr << "wrote " << anns.size() << " annotations to " << out << '\n';
        } else if (cause_cmd->parsed()) {
            auto cfg = flags.resolve();
            cfg.strategy.use_cause = true;
            const auto pc = hef::prepare_corpus(cfg);
            const auto report = hef::compute_cause_report(pc, cfg.strategy.k1);
            emit(report.to_json(examples).dump(2) + "\n", cause_out);
        } else if (prompts_cmd->parsed()) {
            const auto cfg = flags.resolve();
            const auto pc = hef::prepare_corpus(cfg);
            std::optional<hef::CauseReport> causes;
            if (cfg.strategy.use_cause) causes = hef::compute_cause_report(pc, cfg.strategy.k1);
            const auto tpl = cfg.prompt_template.empty() ? hef::PromptTemplate::builtin()
                                                         : hef::PromptTemplate::load(cfg.prompt_template);
            std::string text;
            for (const auto& ins : hef::build_instructions(cfg, pc, causes ? &*causes : nullptr, tpl))
                text += ordered_json{{"dialogue_id", ins.dialogue_id},
                                     {"two_stage", ins.sections.two_stage},
                                     {"cause", ins.sections.cause},
                                     {"text", ins.text}}
                            .dump() +
                        "\n";
            emit(text, prompts_out);
        } else if (run_cmd->parsed()) {
            const auto cfg = flags.resolve();
            const auto dir = flags.target_dir(cfg);
            const auto ro = hef::run_pipeline(cfg, dir);
            std::cerr << "run directory: " << dir.string() << " (cache hits " << ro.cache_hits << ")\n";
            print_report(ro.report);
        } else if (eval_cmd->parsed()) {
            const auto r = hef::evaluate_run_dir(eval_dir);
            std::cout << r.to_json();
        } else if (judge_cmd->parsed()) {
            jc.candidate_run = cand;
            jc.baseline_run = base;
            if (!judge_endpoint.empty()) {
                jc.judge.kind = hef::LlmBackendConfig::Kind::http;
                jc.judge.endpoint = judge_endpoint;
                if (judge_model.empty()) throw hef::Error(hef::ErrorKind::config, "the http judge needs --model-name");
            } else {
                const auto p = hef::mock_policy_from_name(judge_mock);
                if (!p) throw hef::Error(hef::ErrorKind::config, "unknown mock policy '" + judge_mock + "'");
                jc.judge.policy = *p;
            }
            jc.judge.model_name = judge_model;
            const auto jo = hef::run_judge(jc, judge_out);
            std::cout << "aspect\twin\tlose\ttie\tunparsed\n";
            for (const auto& t : jo.tallies)
                std::cout << hef::to_string(t.aspect) << '\t' << t.wins << '\t' << t.loses << '\t' << t.ties << '\t'
                          << t.unparsed << '\n';
        } else if (ablate_cmd->parsed()) {
            const auto cfg = flags.resolve();
            const auto dir = flags.target_dir(cfg);
            const auto results = hef::run_variants(cfg, hef::ablation_variants(cfg.strategy), dir);
            std::cerr << "run directory: " << dir.string() << '\n';
            std::cout << hef::MetricsReport::tsv_header() << '\n';
            for (const auto& r : results) std::cout << r.report.to_tsv_row() << '\n';
        } else if (sweep_cmd->parsed()) {
            const auto cfg = flags.resolve();
            const auto dir = flags.target_dir(cfg);
            std::vector<hef::StrategyConfig> variants;
            for (std::size_t k1 : parse_grid(k1_grid))
                variants.push_back({.use_two_stage = false, .use_cause = true, .k1 = k1, .k2 = cfg.strategy.k2});
            for (std::size_t k2 : parse_grid(k2_grid))
                variants.push_back({.use_two_stage = true, .use_cause = false, .k1 = cfg.strategy.k1, .k2 = k2});
            const auto results = hef::run_variants(cfg, variants, dir);
            std::cerr << "run directory: " << dir.string() << '\n';
            std::cout << hef::MetricsReport::tsv_header() << '\n';
            for (const auto& r : results) std::cout << r.report.to_tsv_row() << '\n';
        }
    } catch (const hef::Error& e) {
        std::cerr << "hef: " << hef::to_string(e.kind()) << " error: " << e.what() << '\n';
        return e.kind() == hef::ErrorKind::config ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "hef: error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
