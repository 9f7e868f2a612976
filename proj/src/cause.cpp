#include "hef/cause.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "hef/error.hpp"

namespace hef {

std::vector<std::string> top_attention_words(const SemAnnotation& a, std::size_t k1) {
    if (k1 == 0) throw Error(ErrorKind::config, "k1 must be at least 1");
    std::vector<std::size_t> idx(a.attention.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return a.attention[x].weight > a.attention[y].weight; });
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    for (std::size_t i : idx) {
        if (words.size() == k1) break;
        if (seen.insert(a.attention[i].word).second) words.push_back(a.attention[i].word);
    }
    return words;
}

std::set<std::string> collect_global_cause_set(std::span<const SemAnnotation> annotations, std::size_t k1) {
    if (annotations.empty()) throw Error(ErrorKind::data, "cause extraction needs at least one annotation");
    std::set<std::string> s;
    for (const auto& a : annotations)
        for (auto& w : top_attention_words(a, k1)) s.insert(std::move(w));
    return s;
}

GlobalCauseStats compute_cause_stats(std::set<std::string> cause_set, const IntensityLexicon& lex,
                                     const IdfTable& idf, std::size_t k1) {
    if (cause_set.empty()) throw Error(ErrorKind::data, "cause set is empty");
    GlobalCauseStats st;
    st.k1 = k1;
    double sum_int = 0.0, sum_idf = 0.0;
    for (const auto& w : cause_set) {
        sum_int += lex.intensity(w);
        sum_idf += idf.idf(w);
    }
    const auto n = static_cast<double>(cause_set.size());
    st.avg_intensity = sum_int / n;
    st.avg_idf = sum_idf / n;
    st.cause_set = std::move(cause_set);
    return st;
}

CausePartition partition_dialogue(const Dialogue& d, const GlobalCauseStats& stats, const IntensityLexicon& lex,
                                  const IdfTable& idf) {
    CausePartition part;
    part.dialogue_id = d.id;
    std::unordered_set<std::string> placed;
    for (const auto& w : context_words(d)) {
        if (!stats.cause_set.contains(w) || !placed.insert(w).second) continue;
        if (lex.intensity(w) > stats.avg_intensity && idf.idf(w) > stats.avg_idf)
            part.high.push_back(w);
        else
            part.low.push_back(w);
    }
    return part;
}

}  // namespace hef
