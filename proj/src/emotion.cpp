#include "hef/emotion.hpp"

#include <algorithm>

#include "hef/error.hpp"

namespace hef {

std::optional<EmotionLabel> EmotionLabel::from_name(std::string_view name) {
    const auto it = std::find(kEmotionNames.begin(), kEmotionNames.end(), name);
    if (it == kEmotionNames.end()) return std::nullopt;
    return EmotionLabel(static_cast<std::size_t>(it - kEmotionNames.begin()));
}

EmotionLabel EmotionLabel::from_index(std::size_t index) {
    if (index >= kNumEmotions)
        throw Error(ErrorKind::data, "emotion index out of range: " + std::to_string(index));
    return EmotionLabel(index);
}

EmotionLabel EmotionLabel::parse(std::string_view name) {
    if (auto label = from_name(name)) return *label;
    throw Error(ErrorKind::data, "unknown emotion label '" + std::string(name) + "'");
}

}  // namespace hef
