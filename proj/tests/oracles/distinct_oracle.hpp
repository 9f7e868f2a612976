#pragma once

// Brute-force distinct-n: materialize every n-gram as a string and count
// unique ones by pairwise comparison.

#include <string>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/random.hpp"

namespace hef::oracle {

inline double distinct(const std::vector<Tokens>& responses, std::size_t n) {
    std::vector<std::string> grams;
    for (const auto& r : responses)
        for (std::size_t i = 0; i + n <= r.size(); ++i) {
            std::string g;
            for (std::size_t k = 0; k < n; ++k) g += r[i + k] + '\x1f';
            grams.push_back(g);
        }
    std::size_t unique = 0;
    for (std::size_t i = 0; i < grams.size(); ++i) {
        bool repeat = false;
        for (std::size_t j = 0; j < i && !repeat; ++j) repeat = grams[j] == grams[i];
        unique += repeat ? 0 : 1;
    }
    return 100.0 * static_cast<double>(unique) / static_cast<double>(grams.size());
}

/// Up to 5 responses of up to 6 tokens from a 4-word alphabet, with at
/// least one bigram somewhere so both n = 1 and n = 2 are defined.
inline std::vector<Tokens> random_tiny_corpus(Rng& rng) {
    static const char* alphabet[] = {"a", "b", "c", "d"};
    while (true) {
        std::vector<Tokens> out(1 + rng.below(5));
        bool has_bigram = false;
        for (auto& r : out) {
            const std::size_t len = rng.below(7);
            for (std::size_t i = 0; i < len; ++i) r.push_back(alphabet[rng.below(4)]);
            has_bigram = has_bigram || r.size() >= 2;
        }
        if (has_bigram) return out;
    }
}

}  // namespace hef::oracle
