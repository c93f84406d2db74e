#include <map>
#include <sstream>

#include "support.hpp"

#include "modsteer/error.hpp"

using namespace modsteer;

namespace {

std::string line(const std::string & id, const std::string & task, const std::string & av, const std::string & at) {
    return R"({"id":")" + id + R"(","task_type":")" + task + R"(","image":"images/)" + id +
           R"(.jpg","caption":null,"text_context":"It was )" + at + R"(.","question":"Which?","answer_vision":")" + av +
           R"(","answer_text":")" + at + "\"}\n";
}

} // namespace

TEST_CASE("three-line file gives counts per task") {
    const auto ds = parse_dataset(line("a", "counting", "three", "four") + line("b", "color", "red", "blue") +
                                  line("c", "color", "green", "white"));
    CHECK(ds.samples.size() == 3);
    CHECK(ds.manifest.sample_count == 3);
    CHECK(ds.manifest.per_task_counts.at(TaskType::Counting) == 1);
    CHECK(ds.manifest.per_task_counts.at(TaskType::Color) == 2);
    CHECK(ds.manifest.per_task_counts.size() == 2);
}

TEST_CASE("equal answers rejected naming the conflict invariant") {
    try {
        parse_dataset(line("a", "color", "red", "blue") + line("dup", "color", "Red ", "red"));
        FAIL("expected a validation error");
    } catch (const ValidationError & e) {
        const std::string msg = e.what();
        CHECK(msg.find("conflict invariant") != std::string::npos);
        CHECK(msg.find("dup") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("malformed line reports its number") {
    try {
        parse_dataset(line("a", "color", "red", "blue") + "\n{not json\n");
        FAIL("expected a dataset error");
    } catch (const DatasetError & e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("unknown keys: strict rejects, lenient keeps and writes back") {
    const std::string text = R"({"id":"x","task_type":"object","image":"i.jpg","caption":"c","text_context":"t",)"
                             R"("question":"q","answer_vision":"cup","answer_text":"pen","source":"web"})"
                             "\n";
    CHECK_THROWS_AS(parse_dataset(text), DatasetError);
    LoadOptions lenient;
    lenient.strict = false;
    const auto ds = parse_dataset(text, lenient);
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.samples[0].extra.at("source") == "web");
    CHECK(to_json(ds.samples[0]).at("source") == "web");
}

TEST_CASE("one sample per task: manifest matches a brute-force count") {
    std::string text;
    int i = 0;
    for (auto t : kAllTaskTypes) {
        text += line("s" + std::to_string(i++), std::string(to_string(t)), "alpha", "beta");
    }
    const auto ds = parse_dataset(text);
    std::map<TaskType, size_t> brute;
    for (const auto & s : ds.samples) ++brute[s.task_type];
    size_t sum = 0;
    for (auto t : kAllTaskTypes) {
        CHECK(ds.manifest.per_task_counts.at(t) == 1);
        CHECK(brute.at(t) == 1);
        sum += ds.manifest.per_task_counts.at(t);
    }
    CHECK(sum == 8);
    CHECK(ds.manifest.sample_count == sum);
}

TEST_CASE("mean text-context words per task") {
    const auto ds = parse_dataset(line("a", "color", "red", "blue") + line("b", "color", "green", "dark white"));
    // "It was blue." = 3 words, "It was dark white." = 4 words
    CHECK(ds.manifest.mean_text_context_words.at(TaskType::Color) == doctest::Approx(3.5));
}

TEST_CASE("save then load is identity on the fixture") {
    const auto samples = testing::fixture();
    const auto dir = testing::scratch_dir("dataset_roundtrip");
    save_dataset(dir / "rt.jsonl", samples);
    CHECK(load_dataset(dir / "rt.jsonl").samples == samples);
}

TEST_CASE("wicker/wood sample renders both orderings") {
    auto s = testing::make_sample("attr", TaskType::Attribute, "wicker", "wood");
    const auto [p1, p2] = render_choice_prompts(s, PromptMode::Neutral);
    CHECK(p1.option_a == "wicker");
    CHECK(p1.option_b == "wood");
    CHECK(p2.option_a == "wood");
    CHECK(p2.option_b == "wicker");
    CHECK(p1.rendered_text.find("A. wicker\nB. wood\n") != std::string::npos);
    CHECK(p1.rendered_text.find(s.text_context) != std::string::npos);
    CHECK(p1.rendered_text.find(s.question) != std::string::npos);
    CHECK(p1.image_ref == s.image_ref);
}

TEST_CASE("instruction modes prepend the instruction verbatim") {
    auto s = testing::make_sample("attr", TaskType::Attribute, "wicker", "wood");
    const auto t = render_choice_prompts(s, PromptMode::InstText).first.rendered_text;
    CHECK(t.rfind(std::string(kInstText), 0) == 0);
    CHECK(t.find("Answer the question based on the text context.") != std::string::npos);
    const auto v = render_choice_prompts(s, PromptMode::InstVision).first.rendered_text;
    CHECK(v.find("Answer the question based on the vision context.") == 0);
}

TEST_CASE("option swap is an involution and maps one ordering onto the other") {
    for (const auto & s : testing::fixture()) {
        for (auto mode : {PromptMode::Neutral, PromptMode::InstText, PromptMode::CoT, PromptMode::FewShot}) {
            const auto [p1, p2] = render_choice_prompts(s, mode);
            CHECK(swap_options(swap_options(p1)) == p1);
            CHECK(swap_options(p1) == p2);
        }
    }
}

TEST_CASE("context selection drops the image or the text block") {
    auto s = testing::fixture().front();
    RenderOptions o;
    o.contexts = ContextSelection::TextOnly;
    const auto t = render_choice_prompt(s, Ordering::VisionFirst, o);
    CHECK_FALSE(t.image_ref.has_value());
    CHECK(t.rendered_text.find(std::string(kImagePlaceholder)) == std::string::npos);
    o.contexts = ContextSelection::VisionOnly;
    const auto v = render_choice_prompt(s, Ordering::VisionFirst, o);
    CHECK(v.image_ref.has_value());
    CHECK(v.rendered_text.find(s.text_context) == std::string::npos);
}

TEST_CASE("text block placement follows text_after_image") {
    auto s = testing::fixture().front();
    RenderOptions o;
    const auto after = render_choice_prompt(s, Ordering::VisionFirst, o).rendered_text;
    CHECK(after.find("<image>") < after.find("Text Context:"));
    o.text_after_image = false;
    const auto before = render_choice_prompt(s, Ordering::VisionFirst, o).rendered_text;
    CHECK(before.find("Text Context:") < before.find("<image>"));
}
