#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hef/cause.hpp"
#include "hef/corpus.hpp"
#include "hef/emotion.hpp"

namespace hef {

/// Which strategies go into the instruction and their knobs.
/// `k1` is the number of cause words per dialogue, `k2` the number of
/// priority emotions.
struct StrategyConfig {
    bool use_two_stage = true;
    bool use_cause = true;
    std::size_t k1 = 1;
    std::size_t k2 = 20;

    void validate() const;  // throws hef::Error(config)
    /// Short tag in the c<k2>,w<k1> notation, e.g. "c20+w1" or "vanilla".
    std::string tag() const;
};

struct PromptSections {
    bool two_stage = false;
    bool cause = false;
};

struct Instruction {
    std::string dialogue_id;
    std::string text;
    PromptSections sections;
    std::vector<EmotionLabel> priority;  // empty unless the two-stage section was emitted
    std::vector<std::string> high_words;
    std::vector<std::string> low_words;
};

/// Parsed instruction template: a base section plus optional strategy
/// sections, each with {placeholder} slots.
class PromptTemplate {
public:
    static PromptTemplate builtin();
    static PromptTemplate parse(std::string_view text);  // throws hef::Error(data)
    static PromptTemplate load(const std::filesystem::path& path);

    const std::string& base() const { return base_; }
    const std::string& two_stage() const { return two_stage_; }
    const std::string& cause() const { return cause_; }

private:
    std::string base_, two_stage_, cause_;
};

/// Fills the template. Strategy sections are appended after the base, so the
/// vanilla prompt is always a prefix of any strategy prompt for the same
/// dialogue. Throws if `priority.size() != cfg.k2` under two-stage, or if the
/// partition belongs to another dialogue.
Instruction build_instruction(const Dialogue& d, const std::vector<EmotionLabel>& priority,
                              const CausePartition& part, const StrategyConfig& cfg,
                              const PromptTemplate& tpl = PromptTemplate::builtin());

struct ParsedOutput {
    std::optional<EmotionLabel> predicted_emotion;
    std::string raw_emotion_text;
    std::string response;
    bool well_formed = false;  // both markers found
};

/// Lowercase, punctuation to spaces, drop articles, collapse whitespace.
std::string normalize_emotion_text(std::string_view text);

/// Reads "Emotion: <label>" and the following "Response: <text>". Labels
/// must match exactly after normalization; anything else leaves the
/// prediction empty. Never throws.
ParsedOutput parse_model_output(std::string_view text);

/// Comma-separated label names.
std::string join_labels(const std::vector<EmotionLabel>& labels);

}  // namespace hef
