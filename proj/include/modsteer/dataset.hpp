#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace modsteer {

enum class TaskType { Sport, Attribute, Sentiment, Positional, Counting, Color, Activity, Object };

inline constexpr std::array<TaskType, 8> kAllTaskTypes = {
    TaskType::Sport,    TaskType::Attribute, TaskType::Sentiment, TaskType::Positional,
    TaskType::Counting, TaskType::Color,     TaskType::Activity,  TaskType::Object,
};

std::string_view to_string(TaskType t);
std::optional<TaskType> parse_task_type(std::string_view s);

// One vision/text conflict item. The image is only ever referenced, never decoded here.
struct ConflictSample {
    std::string id;
    TaskType task_type = TaskType::Object;
    std::string image_ref;
    std::optional<std::string> caption;
    std::string text_context;
    std::string question;
    std::string answer_vision;
    std::string answer_text;
    // Unknown keys kept by lenient loading, written back verbatim on save.
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    bool operator==(const ConflictSample &) const = default;
};

// Case-insensitive, whitespace-trimmed comparison used for every answer match.
std::string normalize_answer(std::string_view s);
bool same_answer(std::string_view a, std::string_view b);

// Throws ValidationError naming the sample id and the violated rule.
void validate(const ConflictSample & s);

enum class Ordering { VisionFirst, TextFirst };
enum class PromptMode { Neutral, InstVision, InstText, CoT, FewShot };
enum class ContextSelection { Both, TextOnly, VisionOnly };

std::string_view to_string(Ordering o);
std::string_view to_string(PromptMode m);
std::optional<PromptMode> parse_prompt_mode(std::string_view s);

inline constexpr std::string_view kInstVision = "Answer the question based on the vision context.";
inline constexpr std::string_view kInstText = "Answer the question based on the text context.";
inline constexpr std::string_view kCoTSuffix =
    "Think step by step about both contexts, then give the final answer as A or B.";
inline constexpr std::string_view kImagePlaceholder = "<image>";

struct RenderOptions {
    PromptMode mode = PromptMode::Neutral;
    ContextSelection contexts = ContextSelection::Both;
    // Layout "<image> Text Context: ..." when true, text block before the image otherwise.
    bool text_after_image = true;
};

struct ChoicePrompt {
    std::string sample_id;
    Ordering ordering = Ordering::VisionFirst;
    std::string option_a;
    std::string option_b;
    std::string rendered_text;
    PromptMode prompt_mode = PromptMode::Neutral;
    // Empty when the image is left out of the prompt.
    std::optional<std::string> image_ref;

    bool operator==(const ChoicePrompt &) const = default;
};

ChoicePrompt render_choice_prompt(const ConflictSample & s, Ordering ordering,
                                  const RenderOptions & opts = {});

// Both orderings: first has (answer_vision, answer_text), second the swap.
std::pair<ChoicePrompt, ChoicePrompt> render_choice_prompts(const ConflictSample & s,
                                                            const RenderOptions & opts = {});
std::pair<ChoicePrompt, ChoicePrompt> render_choice_prompts(const ConflictSample & s, PromptMode mode);

// Exchanges the option lines of a rendered prompt in place; an involution.
ChoicePrompt swap_options(const ChoicePrompt & p);

struct DatasetManifest {
    std::string name;
    std::string version;
    size_t sample_count = 0;
    std::map<TaskType, size_t> per_task_counts;
    std::map<TaskType, double> mean_text_context_words;
};

size_t whitespace_word_count(std::string_view s);
DatasetManifest make_manifest(const std::vector<ConflictSample> & samples, std::string name = "dataset",
                              std::string version = "1");

struct LoadOptions {
    // Strict rejects unknown keys; lenient keeps them in ConflictSample::extra.
    bool strict = true;
    std::string name;
    std::string version = "1";
};

struct Dataset {
    std::vector<ConflictSample> samples;
    DatasetManifest manifest;
};

Dataset load_dataset(const std::filesystem::path & path, const LoadOptions & opts = {});
Dataset parse_dataset(std::string_view jsonl, const LoadOptions & opts = {});
void save_dataset(const std::filesystem::path & path, const std::vector<ConflictSample> & samples);

nlohmann::ordered_json to_json(const ConflictSample & s);
// Parses one JSONL object; `strict` as in LoadOptions. Throws DatasetError/ValidationError.
ConflictSample sample_from_json(const nlohmann::ordered_json & j, bool strict);

} // namespace modsteer
