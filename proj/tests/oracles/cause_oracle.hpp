#pragma once

// Brute-force re-derivation of cause-word extraction, kept deliberately
// naive and free of the library's cause module.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/sem.hpp"

namespace hef::oracle {

struct WordScore {
    double intensity = 0.0;
    double idf = 0.0;
};

/// Per word: its best weight and the first position holding that weight.
/// Words are ranked by weight, then by that position.
inline std::vector<std::string> top_words(const SemAnnotation& a, std::size_t k) {
    struct Best {
        double weight;
        std::size_t pos;
    };
    std::map<std::string, Best> best;
    for (std::size_t i = 0; i < a.attention.size(); ++i) {
        const auto& e = a.attention[i];
        auto it = best.find(e.word);
        if (it == best.end() || e.weight > it->second.weight) best[e.word] = {e.weight, i};
    }
    std::vector<std::pair<std::string, Best>> ranked(best.begin(), best.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.second.weight != y.second.weight) return x.second.weight > y.second.weight;
        return x.second.pos < y.second.pos;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
    return out;
}

/// Min-max normalized VAD intensity and ln(n/df) over the dialogues'
/// contexts, computed with plain loops. Words missing from `vad` score 0.
inline std::map<std::string, WordScore> scores(const std::vector<Dialogue>& dialogues,
                                               const std::vector<std::tuple<std::string, double, double>>& vad) {
    double lo = 1e9, hi = -1e9;
    std::map<std::string, double> raw;
    for (const auto& [w, v, a] : vad) {
        raw[w] = std::sqrt((v - 0.5) * (v - 0.5) + (a / 2) * (a / 2));
        lo = std::min(lo, raw[w]);
        hi = std::max(hi, raw[w]);
    }
    std::vector<std::vector<std::string>> docs;
    for (const auto& d : dialogues) {
        docs.emplace_back();
        for (const auto& u : d.context) docs.back().insert(docs.back().end(), u.words.begin(), u.words.end());
    }
    std::map<std::string, WordScore> out;
    const double n = static_cast<double>(docs.size());
    for (const auto& doc : docs)
        for (const auto& w : doc) {
            if (out.contains(w)) continue;
            double df = 0;
            for (const auto& other : docs) df += std::find(other.begin(), other.end(), w) != other.end() ? 1 : 0;
            out[w] = {raw.contains(w) ? (raw[w] - lo) / (hi - lo) : 0.0, std::log(n / df)};
        }
    return out;
}

struct Result {
    std::vector<std::string> cause_set;  // sorted, unique
    double avg_intensity = 0.0;
    double avg_idf = 0.0;
    std::vector<std::vector<std::string>> high, low;  // per dialogue
};

/// `score` must cover every word that can appear in the cause set.
inline Result run(const std::vector<Dialogue>& dialogues, const std::vector<SemAnnotation>& anns, std::size_t k1,
                  const std::map<std::string, WordScore>& score) {
    Result r;
    for (const auto& a : anns)
        for (const auto& w : top_words(a, k1))
            if (std::find(r.cause_set.begin(), r.cause_set.end(), w) == r.cause_set.end()) r.cause_set.push_back(w);
    std::sort(r.cause_set.begin(), r.cause_set.end());

    for (const auto& w : r.cause_set) {
        r.avg_intensity += score.at(w).intensity;
        r.avg_idf += score.at(w).idf;
    }
    r.avg_intensity /= static_cast<double>(r.cause_set.size());
    r.avg_idf /= static_cast<double>(r.cause_set.size());

    for (const auto& d : dialogues) {
        std::vector<std::string> words;
        for (const auto& u : d.context) words.insert(words.end(), u.words.begin(), u.words.end());
        std::vector<std::string> high, low;
        for (std::size_t i = 0; i < words.size(); ++i) {
            const std::string& w = words[i];
            bool earlier = false;
            for (std::size_t j = 0; j < i; ++j) earlier = earlier || words[j] == w;
            const bool in_set = std::binary_search(r.cause_set.begin(), r.cause_set.end(), w);
            if (earlier || !in_set) continue;
            const WordScore s = score.at(w);
            (s.intensity > r.avg_intensity && s.idf > r.avg_idf ? high : low).push_back(w);
        }
        r.high.push_back(high);
        r.low.push_back(low);
    }
    return r;
}

}  // namespace hef::oracle
