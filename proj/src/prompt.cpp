#include "hef/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "hef/default_template.hpp"
#include "hef/error.hpp"

namespace hef {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view rtrim_newlines(std::string_view s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string substitute(std::string_view tpl, std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
    std::string out;
    out.reserve(tpl.size() + 256);
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            const auto close = tpl.find('}', i);
            if (close != std::string_view::npos) {
                const auto name = tpl.substr(i + 1, close - i - 1);
                const auto it = std::find_if(vars.begin(), vars.end(), [&](const auto& v) { return v.first == name; });
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tpl[i++]);
    }
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    if (words.empty()) return "(none)";
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ", ";
        out += w;
    }
    return out;
}

void require_placeholder(std::string_view section, std::string_view name, std::string_view placeholder) {
    if (section.find(placeholder) == std::string_view::npos)
        throw Error(ErrorKind::data, "prompt template section '" + std::string(name) + "' lacks " + std::string(placeholder));
}

// "Emotion:" style marker at the start of a line, tolerating leading markdown
// emphasis. Returns the text after the marker.
std::optional<std::string_view> after_marker(std::string_view line, std::string_view marker) {
    std::size_t i = 0;
    while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == '*' || line[i] == '#'))
        ++i;
    if (line.size() - i < marker.size()) return std::nullopt;
    for (std::size_t k = 0; k < marker.size(); ++k)
        if (std::tolower(static_cast<unsigned char>(line[i + k])) != marker[k]) return std::nullopt;
    auto rest = line.substr(i + marker.size());
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    return rest;
}

}  // namespace

void StrategyConfig::validate() const {
    if (use_cause && k1 < 1) throw Error(ErrorKind::config, "k1 must be at least 1");
    if (use_two_stage && (k2 < 1 || k2 > kNumEmotions)) throw Error(ErrorKind::config, "k2 must lie in [1, 32]");
}

std::string StrategyConfig::tag() const {
    std::string t;
    if (use_two_stage) t += "c" + std::to_string(k2);
    if (use_cause) t += (t.empty() ? "w" : "+w") + std::to_string(k1);
    return t.empty() ? "vanilla" : t;
}

PromptTemplate PromptTemplate::builtin() {
    static const PromptTemplate tpl = parse(detail::kDefaultTemplateText);
    return tpl;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
    PromptTemplate t;
    std::string* current = nullptr;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("=== ", 0) == 0) {
            const auto name = trim(std::string_view(line).substr(4));
            if (name == "base") current = &t.base_;
            else if (name == "two_stage") current = &t.two_stage_;
            else if (name == "cause") current = &t.cause_;
            else throw Error(ErrorKind::data, "unknown prompt template section '" + std::string(name) + "'");
            continue;
        }
        if (current == nullptr) continue;  // preamble comments
        *current += line;
        *current += '\n';
    }
    for (std::string* s : {&t.base_, &t.two_stage_, &t.cause_}) *s = std::string(rtrim_newlines(*s));
    require_placeholder(t.base_, "base", "{context}");
    require_placeholder(t.base_, "base", "{all_labels}");
    require_placeholder(t.base_, "base", "Emotion:");
    require_placeholder(t.base_, "base", "Response:");
    require_placeholder(t.two_stage_, "two_stage", "{priority_labels}");
    require_placeholder(t.two_stage_, "two_stage", "{other_labels}");
    require_placeholder(t.cause_, "cause", "{high_words}");
    require_placeholder(t.cause_, "cause", "{low_words}");
    return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string join_labels(const std::vector<EmotionLabel>& labels) {
    std::string out;
    for (const auto& l : labels) {
        if (!out.empty()) out += ", ";
        out += l.name();
    }
    return out;
}

Instruction build_instruction(const Dialogue& d, const std::vector<EmotionLabel>& priority,
                              const CausePartition& part, const StrategyConfig& cfg, const PromptTemplate& tpl) {
    cfg.validate();
    std::vector<EmotionLabel> all;
    for (std::size_t i = 0; i < kNumEmotions; ++i) all.push_back(EmotionLabel::from_index(i));
    const std::string all_labels = join_labels(all);
    const std::string context(rtrim_newlines(transcript(d)));

    Instruction ins;
    ins.dialogue_id = d.id;
    ins.text = substitute(tpl.base(), {{"context", context}, {"all_labels", all_labels}});

    if (cfg.use_two_stage) {
        if (priority.size() != cfg.k2)
            throw Error(ErrorKind::data, "dialogue " + d.id + ": expected " + std::to_string(cfg.k2) +
                                             " priority emotions, got " + std::to_string(priority.size()));
        std::vector<EmotionLabel> others;
        for (const auto& l : all)
            if (std::find(priority.begin(), priority.end(), l) == priority.end()) others.push_back(l);
        const std::string prio = join_labels(priority);
        const std::string rest = others.empty() ? "(none)" : join_labels(others);
        ins.text += "\n\n";
        ins.text += substitute(tpl.two_stage(), {{"priority_labels", prio}, {"other_labels", rest}});
        ins.sections.two_stage = true;
        ins.priority = priority;
    }
    if (cfg.use_cause) {
        if (part.dialogue_id != d.id)
            throw Error(ErrorKind::data, "cause partition for '" + part.dialogue_id + "' used with dialogue '" + d.id + "'");
        if (!part.empty()) {
            const std::string high = join_words(part.high);
            const std::string low = join_words(part.low);
            ins.text += "\n\n";
            ins.text += substitute(tpl.cause(), {{"high_words", high}, {"low_words", low}});
            ins.sections.cause = true;
            ins.high_words = part.high;
            ins.low_words = part.low;
        }
    }
    ins.text += '\n';
    return ins;
}

std::string normalize_emotion_text(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (c < 128 && std::ispunct(c)) cleaned.push_back(' ');
        else cleaned.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    std::istringstream in(cleaned);
    std::string word, out;
    while (in >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

ParsedOutput parse_model_output(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    auto join_from = [&](std::size_t first, std::string_view head) {
        std::string out(head);
        for (std::size_t i = first; i < lines.size(); ++i) {
            out += '\n';
            out += lines[i];
        }
        return std::string(trim(out));
    };

    ParsedOutput out;
    std::optional<std::size_t> emotion_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (auto rest = after_marker(lines[i], "emotion:")) {
            emotion_line = i;
            out.raw_emotion_text = std::string(trim(*rest));
            const auto norm = normalize_emotion_text(*rest);
            out.predicted_emotion = EmotionLabel::from_name(norm);
            break;
        }
    }
    const std::size_t search_from = emotion_line ? *emotion_line + 1 : 0;
    for (std::size_t i = search_from; i < lines.size(); ++i) {
        if (auto rest = after_marker(lines[i], "response:")) {
            out.response = join_from(i + 1, trim(*rest));
            out.well_formed = emotion_line.has_value();
            return out;
        }
    }
    out.response = emotion_line ? join_from(*emotion_line + 1, "") : std::string(trim(text));
    return out;
}

}  // namespace hef
