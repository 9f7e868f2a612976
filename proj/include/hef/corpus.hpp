#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hef/emotion.hpp"

namespace hef {

using Tokens = std::vector<std::string>;

enum class Role { speaker, listener };

struct Utterance {
    Role role = Role::speaker;
    std::string text;  // unescaped source text
    Tokens words;
};

/// A multi-turn conversation split into context and the gold listener reply.
/// Roles alternate starting with the speaker.
struct Dialogue {
    std::string id;
    std::vector<Utterance> context;
    EmotionLabel gold_emotion = EmotionLabel::from_index(0);
    Tokens gold_response;
    std::string gold_response_text;
};

struct Dataset {
    std::vector<Dialogue> dialogues;
    std::size_t dropped_no_listener = 0;  // conversations without a usable listener turn
    std::size_t dropped_empty_context = 0;
    std::size_t rows = 0;
};

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation. Inner apostrophes survive ("it's").
Tokens tokenize(std::string_view text);

/// Replaces the dataset's `_comma_` escape with a literal comma.
std::string unescape_ed(std::string_view text);

/// Loads one split of the ED CSV. `path` is either the CSV file itself or a
/// directory holding `<split>.csv`. Throws hef::Error naming the missing
/// file or column.
Dataset load_dataset(const std::filesystem::path& path, std::string_view split);

/// All context tokens in order, excluding the gold response.
Tokens context_words(const Dialogue& d);

/// Speaker:/Listener: transcript of the context, one utterance per line.
std::string transcript(const Dialogue& d);

}  // namespace hef
