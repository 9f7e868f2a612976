#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>

#include "hef/corpus.hpp"

namespace hef {

/// Word-level emotion intensity in [0,1] derived from valence/arousal:
/// min-max normalized ||(V - 0.5, A / 2)||_2 over the whole lexicon.
class IntensityLexicon {
public:
    IntensityLexicon() = default;

    /// Raw entries are (word, valence, arousal); normalization happens here.
    struct RawEntry {
        std::string word;
        double valence = 0.5;
        double arousal = 0.0;
    };
    explicit IntensityLexicon(std::span<const RawEntry> raw);

    static double raw_intensity(double valence, double arousal);

    /// Words absent from the lexicon have intensity 0.
    double intensity(const std::string& word) const;
    bool contains(const std::string& word) const { return entries_.contains(word); }
    std::size_t size() const { return entries_.size(); }
    const std::unordered_map<std::string, double>& entries() const { return entries_; }

private:
    std::unordered_map<std::string, double> entries_;
};

/// Reads `word<TAB>valence<TAB>arousal<TAB>dominance` rows. A leading header
/// row whose numeric columns do not parse is skipped.
IntensityLexicon load_intensity_lexicon(const std::filesystem::path& path);

/// Document frequencies over token lists; idf(w) = ln(n_docs / df(w)).
class IdfTable {
public:
    explicit IdfTable(std::span<const Tokens> docs);

    std::size_t n_docs() const { return n_docs_; }
    std::size_t df(const std::string& word) const;  // 0 when unseen
    /// Unseen words behave as df = 1.
    double idf(const std::string& word) const;
    const std::unordered_map<std::string, std::size_t>& frequencies() const { return df_; }

private:
    std::size_t n_docs_ = 0;
    std::unordered_map<std::string, std::size_t> df_;
};

inline IdfTable build_idf(std::span<const Tokens> docs) { return IdfTable(docs); }

}  // namespace hef
