#include "hef/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>

#include "hef/error.hpp"

namespace hef {
namespace {

bool is_ascii_punct(char c) {
    return static_cast<unsigned char>(c) < 128 && std::ispunct(static_cast<unsigned char>(c));
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

struct Row {
    int utterance_idx = 0;
    std::string text;
};

struct Conversation {
    std::string context_label;
    std::map<int, std::string> turns;  // utterance_idx -> text; first occurrence wins
    std::size_t first_line = 0;
};

}  // namespace

Tokens tokenize(std::string_view text) {
    Tokens tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        std::size_t b = i, e = j;
        while (b < e && is_ascii_punct(text[b])) ++b;
        while (e > b && is_ascii_punct(text[e - 1])) --e;
        if (b < e) {
            std::string tok(text.substr(b, e - b));
            for (char& c : tok)
                if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            tokens.push_back(std::move(tok));
        }
        i = j;
    }
    return tokens;
}

std::string unescape_ed(std::string_view text) {
    static constexpr std::string_view kComma = "_comma_";
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, kComma.size(), kComma) == 0) {
            out.push_back(',');
            i += kComma.size();
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path, std::string_view split) {
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(path)) file = path / (std::string(split) + ".csv");
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::data, "cannot open dataset file " + file.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::data, "empty dataset file " + file.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_commas(line);
    auto column = [&](std::string_view name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw Error(ErrorKind::data, file.string() + ": missing required column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_conv = column("conv_id");
    const std::size_t c_idx = column("utterance_idx");
    const std::size_t c_ctx = column("context");
    column("prompt");
    column("speaker_idx");
    const std::size_t c_utt = column("utterance");
    const std::size_t needed = std::max({c_conv, c_idx, c_ctx, c_utt}) + 1;

    Dataset ds;
    std::vector<std::string> order;
    std::unordered_map<std::string, Conversation> convs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() < needed)
            throw Error(ErrorKind::data, file.string() + ":" + std::to_string(line_no) + ": expected at least " +
                                             std::to_string(needed) + " fields");
        int idx = 0;
        try {
            idx = std::stoi(std::string(fields[c_idx]));
        } catch (const std::exception&) {
            throw Error(ErrorKind::data, file.string() + ":" + std::to_string(line_no) + ": bad utterance_idx '" +
                                             std::string(fields[c_idx]) + "'");
        }
        ++ds.rows;
        std::string id(fields[c_conv]);
        auto [it, inserted] = convs.try_emplace(id);
        if (inserted) {
            order.push_back(id);
            it->second.context_label = std::string(fields[c_ctx]);
            it->second.first_line = line_no;
        }
        it->second.turns.try_emplace(idx, unescape_ed(fields[c_utt]));
    }
    if (ds.rows == 0) throw Error(ErrorKind::data, "empty split '" + std::string(split) + "' in " + file.string());

    for (const auto& id : order) {
        const Conversation& conv = convs.at(id);
        std::vector<Utterance> utts;
        for (const auto& [idx, text] : conv.turns) {
            Utterance u;
            u.role = utts.size() % 2 == 0 ? Role::speaker : Role::listener;
            u.text = text;
            u.words = tokenize(text);
            utts.push_back(std::move(u));
        }
        // last listener turn with a nonempty context becomes the gold response
        std::size_t gold = utts.size();
        for (std::size_t i = utts.size(); i-- > 1;) {
            if (utts[i].role == Role::listener) {
                gold = i;
                break;
            }
        }
        if (gold == utts.size()) {
            ++ds.dropped_no_listener;
            continue;
        }
        const bool has_words = std::any_of(utts.begin(), utts.begin() + static_cast<std::ptrdiff_t>(gold),
                                           [](const Utterance& u) { return !u.words.empty(); });
        if (!has_words) {
            ++ds.dropped_empty_context;
            continue;
        }
        const auto label = EmotionLabel::from_name(conv.context_label);
        if (!label)
            throw Error(ErrorKind::data, file.string() + ":" + std::to_string(conv.first_line) +
                                             ": unknown emotion label '" + conv.context_label + "'");
        Dialogue d;
        d.id = id;
        d.gold_emotion = *label;
        d.gold_response = utts[gold].words;
        d.gold_response_text = utts[gold].text;
        d.context.assign(std::make_move_iterator(utts.begin()),
                         std::make_move_iterator(utts.begin() + static_cast<std::ptrdiff_t>(gold)));
        ds.dialogues.push_back(std::move(d));
    }
    if (ds.dialogues.empty())
        throw Error(ErrorKind::data, "split '" + std::string(split) + "' in " + file.string() + " has no usable dialogues");
    return ds;
}

Tokens context_words(const Dialogue& d) {
    Tokens out;
    for (const auto& u : d.context) out.insert(out.end(), u.words.begin(), u.words.end());
    return out;
}

std::string transcript(const Dialogue& d) {
    std::string out;
    for (const auto& u : d.context) {
        out += u.role == Role::speaker ? "Speaker: " : "Listener: ";
        out += u.text;
        out += '\n';
    }
    return out;
}

}  // namespace hef
