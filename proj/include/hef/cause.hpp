#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/lexicon.hpp"
#include "hef/sem.hpp"

namespace hef {

/// Corpus-wide cause-word set with its mean intensity and mean IDF.
struct GlobalCauseStats {
    std::set<std::string> cause_set;
    double avg_intensity = 0.0;
    double avg_idf = 0.0;
    std::size_t k1 = 1;
};

/// High-weight words clear both averages strictly; every other context word
/// found in the cause set is low-weight. Order is first occurrence.
struct CausePartition {
    std::string dialogue_id;
    std::vector<std::string> high;
    std::vector<std::string> low;

    bool empty() const { return high.empty() && low.empty(); }
    friend bool operator==(const CausePartition&, const CausePartition&) = default;
};

/// The `k1` distinct words with the highest attention in one annotation.
/// Equal weights keep the earlier position. A context with fewer than `k1`
/// distinct words contributes all of them.
std::vector<std::string> top_attention_words(const SemAnnotation& a, std::size_t k1);

/// Union of every annotation's top-`k1` attention words.
std::set<std::string> collect_global_cause_set(std::span<const SemAnnotation> annotations, std::size_t k1);

/// Unweighted means over the distinct words of `cause_set`.
GlobalCauseStats compute_cause_stats(std::set<std::string> cause_set, const IntensityLexicon& lex,
                                     const IdfTable& idf, std::size_t k1);

CausePartition partition_dialogue(const Dialogue& d, const GlobalCauseStats& stats, const IntensityLexicon& lex,
                                  const IdfTable& idf);

}  // namespace hef
