#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/emotion.hpp"
#include "hef/random.hpp"
#include "hef/sem.hpp"

namespace hef::testing {

inline std::filesystem::path data_dir() { return HEF_TEST_DATA_DIR; }
inline std::filesystem::path mini_ed() { return data_dir() / "mini_ed"; }
inline std::filesystem::path mini_vad() { return data_dir() / "mini_vad.tsv"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "hef") {
        std::string pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
        if (::mkdtemp(pattern.data()) == nullptr) std::abort();
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Dialogue whose context utterances alternate speaker/listener.
inline Dialogue make_dialogue(std::string id, std::vector<std::string> context, std::string_view label = "sad",
                              std::string response = "i am sorry") {
    Dialogue d;
    d.id = std::move(id);
    for (std::size_t i = 0; i < context.size(); ++i) {
        Utterance u;
        u.role = i % 2 == 0 ? Role::speaker : Role::listener;
        u.words = tokenize(context[i]);
        u.text = std::move(context[i]);
        d.context.push_back(std::move(u));
    }
    d.gold_emotion = EmotionLabel::parse(label);
    d.gold_response_text = response;
    d.gold_response = tokenize(response);
    return d;
}

/// Annotation with explicit attention over the given words and a flat
/// emotion distribution except for a bump on `top`.
inline SemAnnotation make_annotation(std::string id, const std::vector<std::pair<std::string, double>>& attention,
                                     std::string_view top = "sad") {
    SemAnnotation a;
    a.dialogue_id = std::move(id);
    a.emotion_probs.fill(0.5 / 31.0);
    a.emotion_probs[EmotionLabel::parse(top).index()] = 0.5;
    for (const auto& [w, x] : attention) a.attention.push_back({w, x});
    return a;
}

/// Small random model with every parameter group perturbed away from zero.
inline SemModel random_small_model(std::uint64_t seed, std::size_t vocab_size, std::size_t dim) {
    std::vector<std::string> tokens = {Vocabulary::kUnknownToken};
    for (std::size_t i = 1; i < vocab_size; ++i) tokens.push_back("w" + std::to_string(i));
    SemHyperparams h;
    h.dim = dim;
    h.seed = seed;
    h.init_scale = 0.5;
    SemModel m = init_model(Vocabulary::from_tokens(tokens), h);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto g : m.params.groups())
        for (double& x : g) x += rng.uniform(-0.5, 0.5);
    return m;
}

inline std::vector<EncodedExample> random_batch(std::uint64_t seed, std::size_t vocab_size, std::size_t n,
                                                std::size_t max_len) {
    Rng rng(seed);
    std::vector<EncodedExample> batch(n);
    for (auto& ex : batch) {
        const std::size_t len = 1 + rng.below(max_len);
        for (std::size_t i = 0; i < len; ++i) ex.token_ids.push_back(rng.below(vocab_size));
        ex.label = EmotionLabel::from_index(rng.below(kNumEmotions));
    }
    return batch;
}

/// Hand-built corpus for cause-word checks: five dialogues with fixed
/// attention (ties and repeated words included) and a small VAD lexicon.
struct CauseFixture {
    std::vector<Dialogue> dialogues;
    std::vector<SemAnnotation> annotations;
    std::vector<std::tuple<std::string, double, double>> vad;  // word, valence, arousal
};

inline CauseFixture cause_fixture() {
    CauseFixture f;
    const std::vector<std::pair<std::string, std::vector<std::string>>> ctx = {
        {"d1", {"my dog died yesterday", "oh no that is awful"}},
        {"d2", {"i won the lottery", "wow congratulations"}},
        {"d3", {"the exam went great", "you must be proud", "i am so proud"}},
        {"d4", {"my dog ran away"}},
        {"d5", {"nobody came to my party", "that is lonely"}},
    };
    const std::vector<std::vector<double>> weights = {
        {0.05, 0.20, 0.40, 0.05, 0.05, 0.05, 0.05, 0.05, 0.10},
        {0.10, 0.30, 0.10, 0.30, 0.10, 0.10},
        {0.05, 0.20, 0.05, 0.20, 0.05, 0.05, 0.05, 0.15, 0.05, 0.05, 0.05, 0.05},
        {0.25, 0.25, 0.25, 0.25},
        {0.30, 0.05, 0.05, 0.05, 0.25, 0.05, 0.05, 0.20},
    };
    const char* tops[] = {"sad", "excited", "proud", "sad", "lonely"};
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        f.dialogues.push_back(make_dialogue(ctx[i].first, ctx[i].second, tops[i]));
        const Tokens words = context_words(f.dialogues.back());
        std::vector<std::pair<std::string, double>> att;
        for (std::size_t k = 0; k < words.size(); ++k) att.emplace_back(words[k], weights[i].at(k));
        if (weights[i].size() != words.size()) std::abort();
        f.annotations.push_back(make_annotation(ctx[i].first, att, tops[i]));
    }
    f.vad = {{"died", 0.05, 0.7},   {"awful", 0.1, 0.8},   {"lottery", 0.8, 0.7}, {"won", 0.9, 0.6},
             {"great", 0.9, 0.7},   {"exam", 0.4, 0.6},    {"proud", 0.9, 0.6},   {"dog", 0.7, 0.4},
             {"nobody", 0.3, 0.3},  {"party", 0.85, 0.75}, {"lonely", 0.1, 0.4},  {"the", 0.5, 0.1},
             {"my", 0.5, 0.2},      {"ran", 0.55, 0.5}};
    return f;
}

struct GradCheck {
    std::size_t coordinates = 0;
    double max_relative_error = 0.0;
    std::string worst;  // "group[index]"
};

/// Central finite differences on `per_group` sampled coordinates of every
/// parameter group. Embedding samples are drawn from rows the batch uses.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradient(const SemModel& model, std::span<const EncodedExample> batch, std::size_t per_group,
                                std::uint64_t seed, double eps = 1e-5, double floor = 1e-6) {
    const LossAndGrad lg = loss_and_grad(model, batch);
    SemModel probe = model;
    auto groups = probe.params.groups();
    const auto grads = lg.grad.groups();
    std::vector<std::size_t> used_rows;
    for (const auto& ex : batch) used_rows.insert(used_rows.end(), ex.token_ids.begin(), ex.token_ids.end());
    const std::size_t dim = model.params.embeddings.cols();

    Rng rng(seed);
    GradCheck out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t s = 0; s < per_group; ++s) {
            const std::size_t i = g == 0 ? used_rows[rng.below(used_rows.size())] * dim + rng.below(dim)
                                         : rng.below(groups[g].size());
            const double saved = groups[g][i];
            groups[g][i] = saved + eps;
            const double up = mean_loss(probe, batch);
            groups[g][i] = saved - eps;
            const double down = mean_loss(probe, batch);
            groups[g][i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double analytic = grads[g][i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), floor});
            ++out.coordinates;
            if (out.worst.empty() || rel > out.max_relative_error) {
                out.max_relative_error = rel;
                out.worst = std::string(SemParams::kGroupNames[g]) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return out;
}

}  // namespace hef::testing
