#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hef/error.hpp"
#include "hef/pipeline.hpp"
#include "support.hpp"

using namespace hef;
using hef::testing::read_file;
using hef::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::size_t count_lines(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HEF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("hef-pipeline");
        const Dataset train = load_dataset(hef::testing::mini_ed(), "train");
        const Dataset valid = load_dataset(hef::testing::mini_ed(), "valid");
        TrainOptions opts;
        opts.hyper.dim = 16;
        opts.hyper.epochs = 8;
        opts.hyper.learning_rate = 0.5;
        save_model(train_sem(train.dialogues, valid.dialogues, opts), *dir_ / "sem.json");
    }
    static void TearDownTestSuite() { delete dir_; }

    RunConfig config(const std::string& policy = "first_priority") const {
        RunConfig c;
        c.data_dir = hef::testing::mini_ed();
        c.lexicon = hef::testing::mini_vad();
        c.sem.path = *dir_ / "sem.json";
        c.llm.policy = *mock_policy_from_name(policy);
        c.output_dir = out_.path();
        c.parallelism = 3;
        return c;
    }

    static TempDir* dir_;
    TempDir out_{"hef-run"};
};

TempDir* Pipeline::dir_ = nullptr;

}  // namespace

TEST(RunConfigJson, RejectsUnknownKeysAndKeys) {
    EXPECT_THROW(RunConfig::from_json({{"data_dir", "x"}, {"bogus", 1}}), Error);
    EXPECT_THROW(RunConfig::from_json({{"llm", {{"backend", "http"}, {"api_key", "sk"}}}}), Error);
    EXPECT_THROW(RunConfig::from_json({{"sem", {{"model", "a"}, {"annotations", "b"}}}}), Error);
    EXPECT_THROW(RunConfig::from_json({{"llm", {{"backend", "mock"}, {"policy", "psychic"}}}}), Error);
    try {
        RunConfig::from_json({{"parallelism", "many"}});
        FAIL() << "no error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(RunConfigJson, RoundTripAndRelativePaths) {
    TempDir dir;
    hef::testing::write_file(dir / "run.json", R"({
        "data_dir": "data", "lexicon": "vad.tsv", "sem": {"annotations": "ann.jsonl"},
        "strategy": {"two_stage": true, "cause": false, "k2": 5},
        "llm": {"backend": "mock", "policy": "uniform_random"}, "seed": 7, "max_samples": 12})");
    const RunConfig c = RunConfig::load(dir / "run.json");
    EXPECT_EQ(c.data_dir, dir / "data");
    EXPECT_EQ(c.sem.kind, SemSource::Kind::annotations);
    EXPECT_EQ(c.sem.path, dir / "ann.jsonl");
    EXPECT_EQ(c.strategy.tag(), "c5");
    EXPECT_EQ(c.llm.policy, MockPolicy::uniform_random);
    EXPECT_EQ(c.seed, 7u);
    const RunConfig again = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    EXPECT_EQ(again.to_json().dump(), c.to_json().dump());
}

TEST(RunConfigJson, ValidateNeedsSources) {
    RunConfig c;
    EXPECT_THROW(c.validate(), Error);
    c.data_dir = hef::testing::mini_ed();
    c.sem.path = "/nonexistent/sem.json";
    EXPECT_THROW(c.validate(), Error);
}

TEST_F(Pipeline, EchoGoldIsPerfect) {
    const RunOutput ro = run_pipeline(config("echo_gold"), out_ / "gold");
    EXPECT_EQ(ro.report.n_samples, 161u);
    EXPECT_EQ(ro.report.accuracy, 1.0);
    EXPECT_EQ(ro.report.unparsed_emotion_rate, 0.0);
}

TEST_F(Pipeline, FirstPriorityEqualsTop1) {
    const RunConfig cfg = config();
    const PreparedCorpus pc = prepare_corpus(cfg);
    std::vector<EmotionLabel> golds;
    for (const auto& d : pc.eval.dialogues) golds.push_back(d.gold_emotion);
    const double top1 = topk_accuracy(pc.annotations, golds, 1);
    const RunOutput ro = run_pipeline(cfg, out_ / "fp");
    EXPECT_NEAR(ro.report.accuracy, top1, 1e-12);
    EXPECT_NEAR(ro.report.topk_accuracy.at(1), top1, 1e-12);
    EXPECT_GT(top1, 0.0);
}

TEST_F(Pipeline, WritesArtifacts) {
    const fs::path run = out_ / "artifacts";
    run_pipeline(config(), run);
    for (const char* f : {"config.json", "annotations.jsonl", "cause_stats.json", "prompts.jsonl", "raw_outputs.jsonl",
                          "parsed.jsonl", "report.json", "report.tsv"})
        EXPECT_TRUE(fs::exists(run / f)) << f;
    EXPECT_EQ(count_lines(run / "prompts.jsonl"), 161u);
    EXPECT_EQ(count_lines(run / "parsed.jsonl"), 161u);
    EXPECT_TRUE(fs::exists(out_ / "cache.jsonl"));
    const auto stats = nlohmann::json::parse(read_file(run / "cause_stats.json"));
    EXPECT_EQ(stats["k1"], 1);
    EXPECT_GT(stats["cause_set_size"].get<int>(), 0);
    EXPECT_LE(stats["cause_set_size"].get<int>(), 161);
}

TEST_F(Pipeline, MaxSamplesSubset) {
    RunConfig cfg = config();
    cfg.max_samples = 25;
    const RunOutput ro = run_pipeline(cfg, out_ / "subset");
    EXPECT_EQ(ro.report.n_samples, 25u);
    const PreparedCorpus a = prepare_corpus(cfg);
    const PreparedCorpus b = prepare_corpus(cfg);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_TRUE(std::is_sorted(a.selected.begin(), a.selected.end()));
}

TEST_F(Pipeline, RerunIsByteIdenticalFromCache) {
    const RunConfig cfg = config();
    const RunOutput first = run_pipeline(cfg, out_ / "r1");
    EXPECT_EQ(first.cache_hits, 0u);
    const RunOutput second = run_pipeline(cfg, out_ / "r2");
    EXPECT_EQ(second.cache_hits, 161u);
    EXPECT_EQ(read_file(out_ / "r1" / "report.json"), read_file(out_ / "r2" / "report.json"));
    EXPECT_EQ(read_file(out_ / "r1" / "raw_outputs.jsonl"), read_file(out_ / "r2" / "raw_outputs.jsonl"));
}

TEST_F(Pipeline, EvaluateRunDirReproducesReport) {
    const fs::path run = out_ / "ev";
    run_pipeline(config(), run);
    const std::string before = read_file(run / "report.json");
    evaluate_run_dir(run);
    EXPECT_EQ(read_file(run / "report.json"), before);
}

TEST_F(Pipeline, ExternalAnnotationsDriveTheSameRun) {
    const fs::path run = out_ / "model";
    run_pipeline(config(), run);
    RunConfig ext = config();
    ext.sem = {SemSource::Kind::annotations, run / "annotations.jsonl"};
    ext.cache = out_ / "ext-cache.jsonl";
    run_pipeline(ext, out_ / "ext");
    EXPECT_EQ(read_file(run / "report.json"), read_file(out_ / "ext" / "report.json"));
    EXPECT_EQ(read_file(run / "prompts.jsonl"), read_file(out_ / "ext" / "prompts.jsonl"));
}

TEST_F(Pipeline, MisalignedAnnotationsNameStage) {
    const PreparedCorpus pc = prepare_corpus(config());
    auto anns = pc.annotations;
    anns[3].attention.pop_back();
    anns[3].attention.back().weight += 1.0 - [&] {
        double s = 0;
        for (const auto& e : anns[3].attention) s += e.weight;
        return s;
    }();
    write_annotations(out_ / "bad.jsonl", anns);
    RunConfig cfg = config();
    cfg.sem = {SemSource::Kind::annotations, out_ / "bad.jsonl"};
    try {
        prepare_corpus(cfg);
        FAIL() << "no error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_EQ(msg.rfind("stage annotate:", 0), 0u) << msg;
        EXPECT_NE(msg.find(pc.eval.dialogues[3].id), std::string::npos) << msg;
    }
}

TEST_F(Pipeline, AblationProducesFourVariants) {
    const RunConfig cfg = config();
    const auto variants = ablation_variants(cfg.strategy);
    ASSERT_EQ(variants.size(), 4u);
    const auto results = run_variants(cfg, variants, out_ / "ablate");
    ASSERT_EQ(results.size(), 4u);
    EXPECT_EQ(results[0].report.system, "c20+w1");
    EXPECT_EQ(results[1].report.system, "c20");
    EXPECT_EQ(results[2].report.system, "w1");
    EXPECT_EQ(results[3].report.system, "vanilla");
    for (const auto& r : results) EXPECT_TRUE(fs::exists(out_ / "ablate" / r.report.system / "report.json"));
    EXPECT_EQ(count_lines(out_ / "ablate" / "summary.tsv"), 5u);
    // first_priority ignores the cause section, so both two-stage runs agree
    EXPECT_EQ(results[0].report.accuracy, results[1].report.accuracy);
}

TEST_F(Pipeline, JudgeTalliesCoverSamples) {
    run_pipeline(config(), out_ / "cand");
    RunConfig base = config("uniform_random");
    base.strategy.use_two_stage = base.strategy.use_cause = false;
    run_pipeline(base, out_ / "base");
    JudgeConfig jc;
    jc.candidate_run = out_ / "cand";
    jc.baseline_run = out_ / "base";
    jc.samples = 100;
    jc.judge.policy = MockPolicy::judge_random;
    const JudgeOutput jo = run_judge(jc, out_ / "judge");
    EXPECT_EQ(jo.samples, 100u);
    ASSERT_EQ(jo.tallies.size(), 3u);
    for (const auto& t : jo.tallies) EXPECT_EQ(t.total(), 100u);
    EXPECT_EQ(count_lines(out_ / "judge" / "verdicts.jsonl"), 300u);
    EXPECT_TRUE(fs::exists(out_ / "judge" / "judge_report.json"));
}

TEST_F(Pipeline, CustomTemplate) {
    hef::testing::write_file(out_ / "tpl.txt",
                             "=== base\nCTX {context}\nLABELS {all_labels}\nEmotion: Response:\n"
                             "=== two_stage\nP {priority_labels} O {other_labels}\n"
                             "=== cause\nH {high_words} L {low_words}\n");
    RunConfig cfg = config();
    cfg.prompt_template = out_ / "tpl.txt";
    run_pipeline(cfg, out_ / "tpl");
    std::istringstream in(read_file(out_ / "tpl" / "prompts.jsonl"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(nlohmann::json::parse(line)["text"].get<std::string>().rfind("CTX Speaker: ", 0), 0u);
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    EXPECT_EQ(run_cli("ingest --data " + hef::testing::mini_ed().string() + " --split test"), 0);
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 1);
    hef::testing::write_file(dir / "bad.json", R"({"data_dir": "x", "api_key": "sk"})");
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(run_cli("ingest --data " + dir.path().string() + " --split test"), 2);
    EXPECT_NE(run_cli("no-such-command"), 0);
}

TEST(Cli, HttpWithoutKeyIsConfigError) {
    TempDir dir;
    const std::string cmd = "env -u HEF_API_KEY " + std::string(HEF_CLI_PATH) + " run --data " +
                            hef::testing::mini_ed().string() + " --lexicon " + hef::testing::mini_vad().string() +
                            " --annotations " + (dir / "none.jsonl").string() +
                            " --endpoint http://127.0.0.1:1/v1 --model-name m --run-dir " + (dir / "r").string() +
                            " >/dev/null 2>&1";
    hef::testing::write_file(dir / "none.jsonl", "");
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 1);
}
