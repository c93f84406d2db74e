#pragma once

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modsteer/backend.hpp"
#include "modsteer/dataset.hpp"

namespace modsteer {

enum class Choice { A, B, Unparsed };
enum class ParsedAnswer { VisionChoice, TextChoice, Unparsed };
enum class Category { Vision, Text, Others };

std::string_view to_string(Choice c);
std::string_view to_string(ParsedAnswer p);
std::string_view to_string(Category c);

// Rule cascade: leading "A"/"B" letter, then a unique case-insensitive option
// substring, else Unparsed.
Choice parse_choice(std::string_view raw_text, std::string_view option_a, std::string_view option_b);

struct ResponseRecord {
    std::string sample_id;
    Ordering ordering = Ordering::VisionFirst;
    std::string raw_text;
    ParsedAnswer parsed = ParsedAnswer::Unparsed;
    // Set when the backend call failed; the response then counts as Unparsed.
    std::optional<std::string> error;
};

ResponseRecord make_response(const ConflictSample & s, const ChoicePrompt & p, std::string raw_text);

struct CategorizedOutcome {
    std::string sample_id;
    TaskType task_type = TaskType::Object;
    bool consistent = false;
    Category category = Category::Others;

    bool operator==(const CategorizedOutcome &) const = default;
};

CategorizedOutcome categorize(const ConflictSample & s, const ResponseRecord & r1, const ResponseRecord & r2);

// vision / (vision + text); nullopt when the denominator is zero.
std::optional<double> vision_ratio(double s_vision, double s_text);

struct ScoreTuple {
    size_t n = 0;
    size_t n_vision = 0;
    size_t n_text = 0;
    size_t n_others = 0;
    double s_vision = 0.0;
    double s_text = 0.0;
    double s_others = 0.0;
    std::optional<double> vision_ratio;

    bool operator==(const ScoreTuple &) const = default;
};

ScoreTuple make_scores(size_t n_vision, size_t n_text, size_t n_others);

struct PreferenceScores {
    ScoreTuple overall;
    std::map<TaskType, ScoreTuple> per_task;

    bool operator==(const PreferenceScores &) const = default;
};

PreferenceScores aggregate(const std::vector<CategorizedOutcome> & outcomes);

// Average ranks for ties; nullopt when either input is constant.
std::optional<double> spearman_rho(const std::vector<double> & xs, const std::vector<double> & ys);

// Produces one generation; lets the steer module reuse the evaluation protocol.
using Generator = std::function<GenerationResult(const GenerationRequest &)>;

struct EvalOptions {
    RenderOptions render;
    DecodeOptions decode;
    // 0 means BackendInfo::max_parallel_sessions.
    size_t max_parallel = 0;
};

struct EvalRun {
    std::vector<ResponseRecord> responses; // two per sample, sample order then ordering
    std::vector<CategorizedOutcome> outcomes;
    PreferenceScores scores;
    size_t failures = 0;
};

EvalRun evaluate(const std::vector<ConflictSample> & samples, const Backend & backend, const EvalOptions & opts = {});
EvalRun evaluate_with(const std::vector<ConflictSample> & samples, const Generator & gen, size_t parallel,
                      const EvalOptions & opts);

struct SingleModalityResult {
    double accuracy = 0.0;
    size_t n = 0;
    size_t correct = 0;
    size_t failures = 0;
};

// Renders prompts with only one context (TextOnly or VisionOnly); a sample counts as
// correct only when both orderings pick that modality's answer.
SingleModalityResult single_modality_accuracy(const std::vector<ConflictSample> & samples, const Backend & backend,
                                              ContextSelection modality, const EvalOptions & opts = {});

// Runs fn(i) for i in [0, n) on up to `parallel` threads. fn must write to disjoint slots.
void parallel_for(size_t n, size_t parallel, const std::function<void(size_t)> & fn);

struct ReportRow {
    std::string model_id;
    PromptMode prompt_mode = PromptMode::Neutral;
    PreferenceScores scores;
    std::optional<double> lambda;
    std::optional<uint32_t> layer;
    std::optional<bool> inject_prefill;
    std::optional<bool> degenerate;
};

std::string format_ratio(const std::optional<double> & r);

// One line for "all" plus one per task present.
void write_report_csv(std::ostream & os, const std::vector<ReportRow> & rows);
nlohmann::ordered_json report_json(const ReportRow & row, const EvalRun & run);

} // namespace modsteer
