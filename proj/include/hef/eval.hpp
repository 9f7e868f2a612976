#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/emotion.hpp"
#include "hef/prompt.hpp"
#include "hef/sem.hpp"

namespace hef {

struct MetricsReport {
    std::string system;  // strategy tag or run label
    std::size_t n_samples = 0;
    double accuracy = 0.0;
    std::map<std::size_t, double> topk_accuracy;  // SEM top-k, when annotations are available
    double distinct1 = 0.0;                       // x100
    double distinct2 = 0.0;                       // x100
    double unparsed_emotion_rate = 0.0;

    std::string to_json() const;  // pretty, stable key order
    static std::string tsv_header();
    std::string to_tsv_row() const;
};

/// Fraction of predictions that parsed to the gold label; missing or invalid
/// predictions count as wrong.
double emotion_accuracy(std::span<const ParsedOutput> preds, std::span<const EmotionLabel> golds);

/// Fraction of samples whose gold label is among the annotation's top `k`.
double topk_accuracy(std::span<const SemAnnotation> annotations, std::span<const EmotionLabel> golds, std::size_t k);

/// Corpus-level distinct-n x 100. N-grams never span two responses.
double distinct_n(std::span<const Tokens> responses, std::size_t n);

// ---------------------------------------------------------------------------
// Pairwise A/B judging
// ---------------------------------------------------------------------------

enum class JudgeAspect { empathy, relevance, fluency };
enum class JudgeOutcome { win, lose, tie };

inline constexpr JudgeAspect kJudgeAspects[] = {JudgeAspect::empathy, JudgeAspect::relevance, JudgeAspect::fluency};

std::string_view to_string(JudgeAspect a);
std::string_view to_string(JudgeOutcome o);

struct JudgeVerdict {
    JudgeAspect aspect = JudgeAspect::empathy;
    JudgeOutcome outcome = JudgeOutcome::tie;
    bool unparsed = false;
};

struct JudgePrompt {
    Instruction instruction;
    /// True when the candidate system's response is shown second. Verdicts
    /// refer to "Response 1", so they must be flipped back via
    /// resolve_for_candidate().
    bool swapped = false;
};

/// Shows context, gold reply, and the two responses in a seeded order.
JudgePrompt build_judge_prompt(const Dialogue& d, const std::string& candidate, const std::string& baseline,
                               JudgeAspect aspect, std::uint64_t seed);

/// First Win/Lose/Tie word, case-insensitive. Text with none of them is a
/// Tie flagged as unparsed.
JudgeVerdict parse_judge_verdict(std::string_view text, JudgeAspect aspect);

/// Maps a verdict about "Response 1" back to the candidate system.
JudgeOutcome resolve_for_candidate(JudgeOutcome about_first, bool swapped);

struct JudgeTally {
    JudgeAspect aspect = JudgeAspect::empathy;
    std::size_t wins = 0;
    std::size_t loses = 0;
    std::size_t ties = 0;
    std::size_t unparsed = 0;  // subset of ties

    void add(JudgeOutcome candidate_outcome, bool was_unparsed);
    std::size_t total() const { return wins + loses + ties; }
};

}  // namespace hef
