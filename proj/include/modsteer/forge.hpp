#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modsteer/backend.hpp"
#include "modsteer/dataset.hpp"
#include "modsteer/eval.hpp"

namespace modsteer {

enum class TemplateId { CountingStyleA, OtherStyleA, CountingStyleB, OtherStyleB };

std::string_view to_string(TemplateId t);
std::optional<TemplateId> parse_template_id(std::string_view s);

// Raw body with {caption}, {question}, {answer} and {task_type} slots.
std::string_view template_body(TemplateId t);

struct TemplateSlots {
    std::string caption;
    std::string question;
    std::string answer;
    std::string task_type;
};

// Throws ValidationError naming the first required slot that is empty.
std::string render_template(TemplateId t, const TemplateSlots & slots);

TemplateId template_for(TaskType task, bool style_b = false);
TemplateId alternate_style(TemplateId t);

struct TaggedOutput {
    std::string answer;
    std::string context;
};

// First <answer>...</answer> and <context>...</context>, in any order, trimmed.
TaggedOutput parse_tagged_output(std::string_view text);

// A sample before its conflicting text exists.
struct SeedSample {
    std::string id;
    TaskType task_type = TaskType::Object;
    std::string image_ref;
    std::string caption;
    std::string question;
    std::string answer_vision;
};

std::vector<SeedSample> load_seeds(const std::filesystem::path & path);

struct CandidateContext {
    std::string sample_id;
    std::string distractor_answer;
    std::string context;
    TemplateId template_id = TemplateId::OtherStyleA;
    std::string client_id;
};

ConflictSample make_conflict(const SeedSample & seed, const CandidateContext & c);

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    virtual std::string id() const = 0;
    virtual std::string send(const std::string & prompt) = 0;
};

// POSTs {"prompt": ...} as JSON and reads the "text" field of the reply.
class HttpGenerationClient : public GenerationClient {
public:
    HttpGenerationClient(std::string endpoint, std::string client_id, double timeout_s = 60.0);
    std::string id() const override { return client_id_; }
    std::string send(const std::string & prompt) override;

private:
    std::string endpoint_;
    std::string client_id_;
    double timeout_s_;
};

struct RetryPolicy {
    size_t attempts = 3;
    std::chrono::milliseconds initial_delay{200};
    double multiplier = 2.0;
    std::function<void(std::chrono::milliseconds)> sleep; // defaults to std::this_thread::sleep_for
};

std::string send_with_retry(GenerationClient & client, const std::string & prompt, const RetryPolicy & policy = {});

struct GenerateOptions {
    RetryPolicy retry;
    size_t max_restyles = 2;
};

struct CandidateAttempt {
    TemplateId template_id;
    std::optional<CandidateContext> candidate;
    std::string error;
};

// Tries the style-A template for the task, then alternates styles on failure.
std::vector<CandidateAttempt> generate_candidate(const SeedSample & seed, GenerationClient & client,
                                                 const GenerateOptions & opts = {});

enum class JudgeStatus { Pass, Fail, Deferred };
std::string_view to_string(JudgeStatus s);

struct JudgeVerdict {
    std::string judge_id;
    bool text_correct = false;
    bool vision_correct = false;
    std::optional<std::string> error;
};

// Unanimity: Pass iff every judge is right from both single-modality views;
// any judge error defers the decision.
JudgeStatus combine_verdicts(const std::vector<JudgeVerdict> & verdicts);

struct JudgeResult {
    JudgeStatus status = JudgeStatus::Fail;
    std::vector<JudgeVerdict> verdicts;
    std::string reason;
};

JudgeResult judge_filter(const CandidateContext & candidate, const SeedSample & seed,
                         const std::vector<const Backend *> & judges, const EvalOptions & opts = {});

enum class Verdict { Accept, Revise, Discard };

struct ReviewItem {
    ConflictSample sample;
    std::optional<TemplateId> template_id;
    std::string client_id;
};

// Review queue: sample fields plus candidate_context, candidate_answer and three empty verdict slots.
void export_verification(const std::filesystem::path & path, const std::vector<ReviewItem> & items);
std::string export_verification(const std::vector<ReviewItem> & items);

// Keeps rows where at least two verdicts are accept or revise; a revise verdict's
// revised_context replaces the context (first one wins).
std::vector<ConflictSample> import_verification(const std::filesystem::path & path);
std::vector<ConflictSample> import_verification_text(std::string_view jsonl);

} // namespace modsteer
