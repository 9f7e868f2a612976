#include "hef/eval.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hef/error.hpp"
#include "hef/random.hpp"

namespace hef {
namespace {

// Own paraphrase of each aspect's meaning for the judge.
std::string_view aspect_definition(JudgeAspect a) {
    switch (a) {
        case JudgeAspect::empathy:
            return "Empathy: does the response react to the speaker's feelings in a fitting way?";
        case JudgeAspect::relevance:
            return "Relevance: does the response stay on the content and topic of the conversation?";
        case JudgeAspect::fluency:
            return "Fluency: does the response read naturally, the way a person would say it?";
    }
    return "";
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["system"] = system;
    j["n_samples"] = n_samples;
    j["accuracy"] = accuracy;
    nlohmann::ordered_json topk = nlohmann::ordered_json::object();
    for (const auto& [k, v] : topk_accuracy) topk[std::to_string(k)] = v;
    j["topk_accuracy"] = topk;
    j["distinct1"] = distinct1;
    j["distinct2"] = distinct2;
    j["unparsed_emotion_rate"] = unparsed_emotion_rate;
    return j.dump(2) + "\n";
}

std::string MetricsReport::tsv_header() {
    return "system\tn_samples\taccuracy\tdistinct1\tdistinct2\tunparsed_emotion_rate\tsem_acc1\tsem_acc3\tsem_acc10\tsem_acc20";
}

std::string MetricsReport::to_tsv_row() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << system << '\t' << n_samples << '\t' << accuracy << '\t' << distinct1 << '\t' << distinct2 << '\t'
        << unparsed_emotion_rate;
    for (std::size_t k : {1, 3, 10, 20}) {
        out << '\t';
        if (auto it = topk_accuracy.find(k); it != topk_accuracy.end()) out << it->second;
        else out << "NA";
    }
    return out.str();
}

double emotion_accuracy(std::span<const ParsedOutput> preds, std::span<const EmotionLabel> golds) {
    if (preds.size() != golds.size())
        throw Error(ErrorKind::data, "emotion_accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                                         std::to_string(golds.size()) + " gold labels");
    if (preds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].predicted_emotion && *preds[i].predicted_emotion == golds[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double topk_accuracy(std::span<const SemAnnotation> annotations, std::span<const EmotionLabel> golds, std::size_t k) {
    if (k < 1 || k > kNumEmotions) throw Error(ErrorKind::config, "k must lie in [1, 32], got " + std::to_string(k));
    if (annotations.size() != golds.size()) throw Error(ErrorKind::data, "topk_accuracy: length mismatch");
    if (annotations.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto top = top_k_emotions(annotations[i], k);
        if (std::find(top.begin(), top.end(), golds[i]) != top.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(annotations.size());
}

double distinct_n(std::span<const Tokens> responses, std::size_t n) {
    if (n == 0) throw Error(ErrorKind::config, "distinct_n needs n >= 1");
    std::set<std::vector<std::string>> unique;
    std::size_t total = 0;
    for (const auto& r : responses) {
        if (r.size() < n) continue;
        for (std::size_t i = 0; i + n <= r.size(); ++i) {
            unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n));
            ++total;
        }
    }
    if (total == 0) throw Error(ErrorKind::data, "distinct-" + std::to_string(n) + ": no n-grams in the responses");
    return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(total);
}

std::string_view to_string(JudgeAspect a) {
    switch (a) {
        case JudgeAspect::empathy: return "Empathy";
        case JudgeAspect::relevance: return "Relevance";
        case JudgeAspect::fluency: return "Fluency";
    }
    return "";
}

std::string_view to_string(JudgeOutcome o) {
    switch (o) {
        case JudgeOutcome::win: return "Win";
        case JudgeOutcome::lose: return "Lose";
        case JudgeOutcome::tie: return "Tie";
    }
    return "";
}

JudgePrompt build_judge_prompt(const Dialogue& d, const std::string& candidate, const std::string& baseline,
                               JudgeAspect aspect, std::uint64_t seed) {
    JudgePrompt jp;
    const std::uint64_t h = fnv1a(to_string(aspect), fnv1a(d.id, fnv1a(std::to_string(seed))));
    jp.swapped = (Rng(h).next() & 1U) != 0;
    const std::string& first = jp.swapped ? baseline : candidate;
    const std::string& second = jp.swapped ? candidate : baseline;

    std::string text;
    text += "You are comparing two replies a Listener could give in the conversation below.\n\n";
    text += transcript(d);
    text += "\nReference reply: " + d.gold_response_text + "\n\n";
    text += "Response 1: " + first + "\n";
    text += "Response 2: " + second + "\n\n";
    text += "Judge only this aspect.\n";
    text += aspect_definition(aspect);
    text += "\n\nAnswer with exactly one word: Win if Response 1 is better, Lose if Response 2 is better, "
            "Tie if they are equally good.\n";
    jp.instruction.dialogue_id = d.id;
    jp.instruction.text = std::move(text);
    return jp;
}

JudgeVerdict parse_judge_verdict(std::string_view text, JudgeAspect aspect) {
    JudgeVerdict v;
    v.aspect = aspect;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
        std::string word;
        while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i])))
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++]))));
        if (word == "win") {
            v.outcome = JudgeOutcome::win;
            return v;
        }
        if (word == "lose") {
            v.outcome = JudgeOutcome::lose;
            return v;
        }
        if (word == "tie") {
            v.outcome = JudgeOutcome::tie;
            return v;
        }
    }
    v.outcome = JudgeOutcome::tie;
    v.unparsed = true;
    return v;
}

JudgeOutcome resolve_for_candidate(JudgeOutcome about_first, bool swapped) {
    if (!swapped || about_first == JudgeOutcome::tie) return about_first;
    return about_first == JudgeOutcome::win ? JudgeOutcome::lose : JudgeOutcome::win;
}

void JudgeTally::add(JudgeOutcome candidate_outcome, bool was_unparsed) {
    switch (candidate_outcome) {
        case JudgeOutcome::win: ++wins; break;
        case JudgeOutcome::lose: ++loses; break;
        case JudgeOutcome::tie: ++ties; break;
    }
    if (was_unparsed) ++unparsed;
}

}  // namespace hef
