#include <gtest/gtest.h>

#include "hef/error.hpp"
#include "hef/prompt.hpp"
#include "support.hpp"

using namespace hef;
using hef::testing::make_dialogue;

namespace {

std::vector<EmotionLabel> labels(std::initializer_list<std::string_view> names) {
    std::vector<EmotionLabel> out;
    for (auto n : names) out.push_back(EmotionLabel::parse(n));
    return out;
}

std::vector<EmotionLabel> first_k(std::size_t k) {
    std::vector<EmotionLabel> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(EmotionLabel::from_index(i));
    return out;
}

StrategyConfig strategy(bool two_stage, bool cause, std::size_t k2 = 3) {
    StrategyConfig c;
    c.use_two_stage = two_stage;
    c.use_cause = cause;
    c.k2 = k2;
    return c;
}

const Dialogue kDialogue = make_dialogue("d1", {"My dog died yesterday.", "Oh no, that is awful."});

CausePartition partition(std::vector<std::string> high, std::vector<std::string> low) {
    return {"d1", std::move(high), std::move(low)};
}

}  // namespace

TEST(Strategy, Tags) {
    EXPECT_EQ(strategy(true, true, 20).tag(), "c20+w1");
    EXPECT_EQ(strategy(true, false, 5).tag(), "c5");
    EXPECT_EQ(strategy(false, true).tag(), "w1");
    EXPECT_EQ(strategy(false, false).tag(), "vanilla");
}

TEST(Strategy, Validation) {
    EXPECT_THROW(strategy(true, false, 0).validate(), Error);
    EXPECT_THROW(strategy(true, false, 33).validate(), Error);
    StrategyConfig c = strategy(false, true);
    c.k1 = 0;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_NO_THROW(strategy(false, false, 0).validate());
}

TEST(Instruction, PriorityListVerbatim) {
    const auto prio = labels({"sad", "lonely", "devastated"});
    const Instruction ins = build_instruction(kDialogue, prio, partition({}, {}), strategy(true, false));
    const auto at = ins.text.find("sad, lonely, devastated");
    ASSERT_NE(at, std::string::npos);
    const auto rest = ins.text.find("remaining labels", at);
    EXPECT_NE(rest, std::string::npos);
    // the remaining clause lists the other 29 labels and none of the priority ones
    const std::string tail = ins.text.substr(rest);
    EXPECT_EQ(tail.find("lonely"), std::string::npos);
    EXPECT_NE(tail.find("surprised"), std::string::npos);
    EXPECT_EQ(std::count(tail.begin(), tail.end(), ','), 28);
    EXPECT_EQ(ins.priority, prio);
    EXPECT_TRUE(ins.sections.two_stage);
}

TEST(Instruction, PriorityLengthMismatch) {
    EXPECT_THROW(build_instruction(kDialogue, labels({"sad"}), partition({}, {}), strategy(true, false)), Error);
}

TEST(Instruction, EmptyPartitionOmitsCauseSection) {
    const Instruction vanilla = build_instruction(kDialogue, {}, partition({}, {}), strategy(false, false));
    const Instruction cause = build_instruction(kDialogue, {}, partition({}, {}), strategy(false, true));
    EXPECT_FALSE(cause.sections.cause);
    EXPECT_EQ(cause.text, vanilla.text);
}

TEST(Instruction, CauseWords) {
    const Instruction ins = build_instruction(kDialogue, {}, partition({"died"}, {"dog", "awful"}), strategy(false, true));
    EXPECT_TRUE(ins.sections.cause);
    EXPECT_NE(ins.text.find("High-weight words: died\n"), std::string::npos);
    EXPECT_NE(ins.text.find("Low-weight words: dog, awful\n"), std::string::npos);
    const Instruction only_low = build_instruction(kDialogue, {}, partition({}, {"dog"}), strategy(false, true));
    EXPECT_NE(only_low.text.find("High-weight words: (none)"), std::string::npos);
}

TEST(Instruction, PartitionMustMatchDialogue) {
    EXPECT_THROW(build_instruction(kDialogue, {}, {"other", {"x"}, {}}, strategy(false, true)), Error);
}

TEST(Instruction, ContainsTranscriptAndFormat) {
    const Instruction ins = build_instruction(kDialogue, {}, partition({}, {}), strategy(false, false));
    EXPECT_NE(ins.text.find("Speaker: My dog died yesterday.\nListener: Oh no, that is awful."), std::string::npos);
    EXPECT_NE(ins.text.find("Emotion: <label>\nResponse: <response>"), std::string::npos);
    for (auto name : kEmotionNames) EXPECT_NE(ins.text.find(name), std::string::npos) << name;
}

TEST(Instruction, SectionsAreAdditive) {
    const auto prio = first_k(3);
    const auto part = partition({"died"}, {"dog"});
    const std::string vanilla = build_instruction(kDialogue, prio, part, strategy(false, false)).text;
    const std::string two = build_instruction(kDialogue, prio, part, strategy(true, false)).text;
    const std::string cause = build_instruction(kDialogue, prio, part, strategy(false, true)).text;
    const std::string both = build_instruction(kDialogue, prio, part, strategy(true, true)).text;
    const std::string base = vanilla.substr(0, vanilla.size() - 1);
    for (const auto* t : {&two, &cause, &both}) EXPECT_EQ(t->rfind(vanilla, 0), 0u);
    // both = base + two-stage section + cause section
    const std::string two_section = two.substr(base.size(), two.size() - base.size() - 1);
    const std::string cause_section = cause.substr(base.size(), cause.size() - base.size() - 1);
    EXPECT_EQ(both, base + two_section + cause_section + "\n");
}

TEST(Instruction, Deterministic) {
    const auto a = build_instruction(kDialogue, first_k(20), partition({"died"}, {}), strategy(true, true, 20));
    const auto b = build_instruction(kDialogue, first_k(20), partition({"died"}, {}), strategy(true, true, 20));
    EXPECT_EQ(a.text, b.text);
}

TEST(Template, ParseRequiresPlaceholders) {
    EXPECT_THROW(PromptTemplate::parse("=== base\nno slots\n=== two_stage\n{priority_labels} {other_labels}\n"
                                       "=== cause\n{high_words} {low_words}\n"),
                 Error);
    EXPECT_THROW(PromptTemplate::parse("=== bogus\n"), Error);
    const auto t = PromptTemplate::parse(
        "# comment\n=== base\n{context} {all_labels}\nEmotion: x\nResponse: y\n=== two_stage\n{priority_labels} "
        "{other_labels}\n=== cause\n{high_words} {low_words}\n");
    EXPECT_EQ(t.two_stage(), "{priority_labels} {other_labels}");
    const auto ins = build_instruction(kDialogue, first_k(2), partition({"a"}, {}), strategy(true, true, 2), t);
    EXPECT_EQ(ins.text.substr(0, 9), "Speaker: ");
    EXPECT_NE(ins.text.find("surprised, excited angry"), std::string::npos);
}

TEST(Template, BuiltinParses) {
    const auto t = PromptTemplate::builtin();
    EXPECT_NE(t.base().find("{context}"), std::string::npos);
    EXPECT_FALSE(t.cause().empty());
}

TEST(ParseOutput, Conformant) {
    const auto p = parse_model_output("Emotion: Sad\nResponse: I'm here for you.");
    ASSERT_TRUE(p.predicted_emotion);
    EXPECT_EQ(p.predicted_emotion->name(), "sad");
    EXPECT_EQ(p.response, "I'm here for you.");
    EXPECT_TRUE(p.well_formed);
}

TEST(ParseOutput, NonMemberLabel) {
    const auto p = parse_model_output("Emotion: melancholy\nResponse: ...");
    EXPECT_FALSE(p.predicted_emotion);
    EXPECT_EQ(p.raw_emotion_text, "melancholy");
    EXPECT_EQ(p.response, "...");
}

TEST(ParseOutput, FreeForm) {
    const auto p = parse_model_output("  That sounds really hard. I'm sorry.\n");
    EXPECT_FALSE(p.predicted_emotion);
    EXPECT_EQ(p.response, "That sounds really hard. I'm sorry.");
    EXPECT_FALSE(p.well_formed);
}

TEST(ParseOutput, Tolerant) {
    const auto p = parse_model_output("**Emotion:** The Proud.\r\n\r\n**Response:** Well done!\nReally.");
    ASSERT_TRUE(p.predicted_emotion);
    EXPECT_EQ(p.predicted_emotion->name(), "proud");
    EXPECT_EQ(p.response, "Well done!\nReally.");
    const auto q = parse_model_output("emotion: anxious\nI hope it goes well.");
    ASSERT_TRUE(q.predicted_emotion);
    EXPECT_EQ(q.response, "I hope it goes well.");
    EXPECT_FALSE(q.well_formed);
}

TEST(ParseOutput, AllLabelsRoundTrip) {
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
        const auto label = EmotionLabel::from_index(i);
        const auto p = parse_model_output("Emotion: " + label.str() + "\nResponse: ok");
        ASSERT_TRUE(p.predicted_emotion) << label.name();
        EXPECT_EQ(*p.predicted_emotion, label);
    }
}

TEST(Normalize, Examples) {
    EXPECT_EQ(normalize_emotion_text("  The  SAD!! "), "sad");
    EXPECT_EQ(normalize_emotion_text("an apprehensive."), "apprehensive");
    EXPECT_EQ(normalize_emotion_text(""), "");
}

TEST(Labels, Join) {
    EXPECT_EQ(join_labels(labels({"sad", "proud"})), "sad, proud");
    EXPECT_EQ(join_labels({}), "");
}
