#include "hef/lexicon.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_set>
#include <vector>

#include "hef/error.hpp"

namespace hef {
namespace {

bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

double IntensityLexicon::raw_intensity(double valence, double arousal) {
    return std::hypot(valence - 0.5, arousal / 2.0);
}

IntensityLexicon::IntensityLexicon(std::span<const RawEntry> raw) {
    std::vector<double> values;
    values.reserve(raw.size());
    for (const auto& e : raw) values.push_back(raw_intensity(e.valence, e.arousal));
    if (values.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        // a lexicon without spread carries no intensity signal
        const double v = span > 0.0 ? (values[i] - lo) / span : 0.0;
        entries_[raw[i].word] = std::clamp(v, 0.0, 1.0);
    }
}

double IntensityLexicon::intensity(const std::string& word) const {
    const auto it = entries_.find(word);
    return it == entries_.end() ? 0.0 : it->second;
}

IntensityLexicon load_intensity_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::data, "cannot open lexicon " + path.string());
    std::vector<IntensityLexicon::RawEntry> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        while (true) {
            const auto tab = rest.find('\t');
            cols.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (cols.size() != 4) throw Error(ErrorKind::data, where + ": expected 4 tab-separated columns");
        double v = 0, a = 0, d = 0;
        const bool ok = parse_double(cols[1], v) && parse_double(cols[2], a) && parse_double(cols[3], d);
        if (!ok) {
            if (line_no == 1 && raw.empty()) continue;  // header row
            throw Error(ErrorKind::data, where + ": non-numeric value");
        }
        if (v < 0 || v > 1 || a < 0 || a > 1 || d < 0 || d > 1)
            throw Error(ErrorKind::data, where + ": values must lie in [0,1]");
        std::string word(cols[0]);
        std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) {
            return c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
        });
        raw.push_back({std::move(word), v, a});
    }
    if (raw.empty()) throw Error(ErrorKind::data, "lexicon " + path.string() + " has no entries");
    return IntensityLexicon(raw);
}

IdfTable::IdfTable(std::span<const Tokens> docs) : n_docs_(docs.size()) {
    if (docs.empty()) throw Error(ErrorKind::data, "IDF needs at least one document");
    for (const auto& doc : docs) {
        std::unordered_set<std::string_view> seen;
        for (const auto& w : doc)
            if (seen.insert(w).second) ++df_[w];
    }
}

std::size_t IdfTable::df(const std::string& word) const {
    const auto it = df_.find(word);
    return it == df_.end() ? 0 : it->second;
}

double IdfTable::idf(const std::string& word) const {
    const std::size_t f = std::max<std::size_t>(df(word), 1);
    return std::log(static_cast<double>(n_docs_) / static_cast<double>(f));
}

}  // namespace hef
