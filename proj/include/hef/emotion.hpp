#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace hef {

inline constexpr std::size_t kNumEmotions = 32;

/// Canonical Empathetic-Dialogues label order. Index positions are used as
/// the classifier's output rows and as the tie-break order for rankings.
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "surprised",    "excited",   "angry",     "proud",        "sad",
    "annoyed",      "grateful",  "lonely",    "afraid",       "terrified",
    "guilty",       "impressed", "disgusted", "hopeful",      "confident",
    "furious",      "anxious",   "anticipating", "joyful",    "nostalgic",
    "disappointed", "prepared",  "jealous",   "content",      "devastated",
    "embarrassed",  "caring",    "sentimental", "trusting",   "ashamed",
    "apprehensive", "faithful",
};

/// One of the 32 emotion labels. Can only be obtained from a valid name or
/// an index in range, so holding one is proof of membership.
class EmotionLabel {
public:
    static std::optional<EmotionLabel> from_name(std::string_view name);
    static EmotionLabel from_index(std::size_t index);  // throws on range
    static EmotionLabel parse(std::string_view name);   // throws on unknown

    std::size_t index() const noexcept { return index_; }
    std::string_view name() const noexcept { return kEmotionNames[index_]; }
    std::string str() const { return std::string(name()); }

    friend auto operator<=>(const EmotionLabel&, const EmotionLabel&) = default;

private:
    explicit EmotionLabel(std::size_t index) : index_(index) {}
    std::size_t index_;
};

}  // namespace hef
