#include "modsteer/forge.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"
#include "modsteer/io.hpp"

namespace modsteer {

namespace {

constexpr std::string_view kOutputLine =
    "Output the new answer enclosed in <answer> </answer> and the context enclosed in <context> </context> tags.";

constexpr std::string_view kCountingA =
    "Instruction:\n"
    "# Given a description of an image and a corresponding counting type question with its answer, now you are "
    "required to generate a text context that points to an answer that fluctuates by 1 or 2 from the original answer. "
    "The context explicitly supports the new answer, providing clear evidence that aligns logically with the counting "
    "question. Only one alternative answer should be generated.\n"
    "Caption: {caption}\n"
    "Question: {question}\n"
    "Answer: {answer}\n";

constexpr std::string_view kOtherA =
    "Instruction:\n"
    "# Given the caption of an image and a corresponding {task_type} type question with its answer, now you are "
    "required to generate a text context as a premise that supports a new distractor answer for the question. The "
    "context should mimic the environment described in the caption but should not include {answer}, while maintaining "
    "logical consistency within the context. Only one alternative answer should be generated.\n"
    "Caption: {caption}\n"
    "Question: {question}\n";

constexpr std::string_view kCountingB =
    "Instruction:\n"
    "# Given a caption of an image and a corresponding counting question with its answer, you are required to generate "
    "a single text context that provides an indirect premise leading to a new answer that fluctuates by 1 or 2 from the "
    "original answer. The context should build an indirect premise to the new answer. Carefully design this context. "
    "For this task, I want you to first describe the scene with a certain quantity and then introduce an increase or "
    "decrease in that quantity to imply the final answer and don't include the final answer. Only one alternative "
    "answer should be generated.\n"
    "Caption: {caption}\n"
    "Question: {question}\n"
    "Answer: {answer}\n"
    "Task-type: {task_type}\n";

constexpr std::string_view kOtherB =
    "Instruction:\n"
    "# Given the caption of an image and a corresponding question with its answer, now you are required to generate a "
    "text context as the indirect premise of a new answer for the question, which belongs to the same category as the "
    "original answer. The context should support the new answer, include the caption while maintaining logical "
    "consistency within the context and don't include the final answer.  Only one alternative answer should be "
    "generated.\n"
    "Caption: {caption}\n"
    "Question: {question}\n"
    "Answer: {answer}\n"
    "Task-type: {task_type}\n";

constexpr std::array<std::string_view, 4> kTemplateNames = {"counting_a", "other_a", "counting_b", "other_b"};
constexpr std::array<std::string_view, 4> kSlotNames = {"caption", "question", "answer", "task_type"};
constexpr std::array<std::string_view, 4> kQueueKeys = {"candidate_context", "candidate_answer", "verdicts",
                                                        "provenance"};

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::optional<std::string> extract_tag(std::string_view text, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const size_t b = text.find(open);
    if (b == std::string_view::npos) return std::nullopt;
    const size_t e = text.find(close, b + open.size());
    if (e == std::string_view::npos) {
        throw ParseError("unclosed <" + std::string(tag) + "> tag");
    }
    return trim(text.substr(b + open.size(), e - b - open.size()));
}

Verdict parse_verdict(const nlohmann::ordered_json & v, size_t line) {
    if (!v.is_object() || !v.contains("verdict") || !v["verdict"].is_string()) {
        throw ParseError("line " + std::to_string(line) + ": malformed verdict entry");
    }
    const auto & s = v["verdict"].get_ref<const std::string &>();
    if (s == "accept") return Verdict::Accept;
    if (s == "revise") return Verdict::Revise;
    if (s == "discard") return Verdict::Discard;
    throw ParseError("line " + std::to_string(line) + ": malformed verdict '" + s + "'");
}

} // namespace

std::string_view to_string(TemplateId t) {
    return kTemplateNames[static_cast<size_t>(t)];
}

std::optional<TemplateId> parse_template_id(std::string_view s) {
    for (size_t i = 0; i < kTemplateNames.size(); ++i) {
        if (kTemplateNames[i] == s) return static_cast<TemplateId>(i);
    }
    return std::nullopt;
}

std::string_view template_body(TemplateId t) {
    switch (t) {
    case TemplateId::CountingStyleA: return kCountingA;
    case TemplateId::OtherStyleA: return kOtherA;
    case TemplateId::CountingStyleB: return kCountingB;
    case TemplateId::OtherStyleB: return kOtherB;
    }
    return kOtherA;
}

std::string render_template(TemplateId t, const TemplateSlots & slots) {
    const std::array<const std::string *, 4> values = {&slots.caption, &slots.question, &slots.answer,
                                                       &slots.task_type};
    std::string out(template_body(t));
    for (size_t i = 0; i < kSlotNames.size(); ++i) {
        const std::string key = "{" + std::string(kSlotNames[i]) + "}";
        if (out.find(key) == std::string::npos) continue;
        if (trim(*values[i]).empty()) {
            throw ValidationError("template '" + std::string(to_string(t)) + "' is missing slot '" +
                                  std::string(kSlotNames[i]) + "'");
        }
        for (size_t at = out.find(key); at != std::string::npos; at = out.find(key, at + values[i]->size())) {
            out.replace(at, key.size(), *values[i]);
        }
    }
    out += kOutputLine;
    return out;
}

TemplateId template_for(TaskType task, bool style_b) {
    if (task == TaskType::Counting) return style_b ? TemplateId::CountingStyleB : TemplateId::CountingStyleA;
    return style_b ? TemplateId::OtherStyleB : TemplateId::OtherStyleA;
}

TemplateId alternate_style(TemplateId t) {
    switch (t) {
    case TemplateId::CountingStyleA: return TemplateId::CountingStyleB;
    case TemplateId::CountingStyleB: return TemplateId::CountingStyleA;
    case TemplateId::OtherStyleA: return TemplateId::OtherStyleB;
    case TemplateId::OtherStyleB: return TemplateId::OtherStyleA;
    }
    return t;
}

TaggedOutput parse_tagged_output(std::string_view text) {
    auto answer = extract_tag(text, "answer");
    auto context = extract_tag(text, "context");
    if (!answer) throw ParseError("missing <answer> tag");
    if (!context) throw ParseError("missing <context> tag");
    return {std::move(*answer), std::move(*context)};
}

std::vector<SeedSample> load_seeds(const std::filesystem::path & path) {
    std::vector<SeedSample> out;
    std::istringstream in(read_file(path));
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            SeedSample s;
            s.id = j.at("id").get<std::string>();
            const auto task = parse_task_type(j.at("task_type").get<std::string>());
            if (!task) throw DatasetError("unknown task_type");
            s.task_type = *task;
            s.image_ref = j.at("image").get<std::string>();
            s.caption = j.at("caption").is_null() ? "" : j.at("caption").get<std::string>();
            s.question = j.at("question").get<std::string>();
            s.answer_vision = j.at("answer_vision").get<std::string>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception & e) {
            throw DatasetError("line " + std::to_string(n) + ": " + e.what());
        } catch (const DatasetError & e) {
            throw DatasetError("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

ConflictSample make_conflict(const SeedSample & seed, const CandidateContext & c) {
    ConflictSample s;
    s.id = seed.id;
    s.task_type = seed.task_type;
    s.image_ref = seed.image_ref;
    if (!seed.caption.empty()) s.caption = seed.caption;
    s.question = seed.question;
    s.answer_vision = seed.answer_vision;
    s.answer_text = c.distractor_answer;
    s.text_context = c.context;
    return s;
}

HttpGenerationClient::HttpGenerationClient(std::string endpoint, std::string client_id, double timeout_s)
    : endpoint_(std::move(endpoint)), client_id_(std::move(client_id)), timeout_s_(timeout_s) {}

std::string HttpGenerationClient::send(const std::string & prompt) {
    const size_t scheme = endpoint_.find("://");
    const size_t path_at = endpoint_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    const std::string host = endpoint_.substr(0, path_at);
    const std::string path = path_at == std::string::npos ? "/" : endpoint_.substr(path_at);
    httplib::Client cli(host);
    const auto secs = static_cast<time_t>(timeout_s_);
    cli.set_read_timeout(secs, 0);
    cli.set_connection_timeout(secs, 0);
    nlohmann::json body;
    body["prompt"] = prompt;
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res) throw BackendError("generation client '" + client_id_ + "': " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw BackendError("generation client '" + client_id_ + "': HTTP " + std::to_string(res->status));
    }
    try {
        return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception & e) {
        throw BackendError("generation client '" + client_id_ + "': malformed reply: " + e.what());
    }
}

std::string send_with_retry(GenerationClient & client, const std::string & prompt, const RetryPolicy & policy) {
    if (policy.attempts == 0) throw ValidationError("retry policy needs at least one attempt");
    auto delay = policy.initial_delay;
    for (size_t attempt = 1;; ++attempt) {
        try {
            return client.send(prompt);
        } catch (const std::exception & e) {
            if (attempt >= policy.attempts) {
                throw BackendError("client '" + client.id() + "' failed after " + std::to_string(attempt) +
                                   " attempts: " + e.what());
            }
            spdlog::warn("client '{}' attempt {} failed: {}", client.id(), attempt, e.what());
            if (policy.sleep) {
                policy.sleep(delay);
            } else {
                std::this_thread::sleep_for(delay);
            }
            delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
        }
    }
}

std::vector<CandidateAttempt> generate_candidate(const SeedSample & seed, GenerationClient & client,
                                                 const GenerateOptions & opts) {
    std::vector<CandidateAttempt> attempts;
    TemplateId t = template_for(seed.task_type);
    const TemplateSlots slots{seed.caption, seed.question, seed.answer_vision, std::string(to_string(seed.task_type))};
    for (size_t round = 0; round <= opts.max_restyles; ++round, t = alternate_style(t)) {
        CandidateAttempt a{t, std::nullopt, {}};
        try {
            const auto out = parse_tagged_output(send_with_retry(client, render_template(t, slots), opts.retry));
            if (out.answer.empty() || out.context.empty()) throw ParseError("empty answer or context");
            if (same_answer(out.answer, seed.answer_vision)) {
                throw ValidationError("distractor equals the vision answer");
            }
            a.candidate = CandidateContext{seed.id, out.answer, out.context, t, client.id()};
        } catch (const ValidationError & e) {
            if (round == 0 && std::string_view(e.what()).find("missing slot") != std::string_view::npos) throw;
            a.error = e.what();
        } catch (const Error & e) {
            a.error = e.what();
        }
        const bool ok = a.candidate.has_value();
        attempts.push_back(std::move(a));
        if (ok) break;
    }
    return attempts;
}

std::string_view to_string(JudgeStatus s) {
    switch (s) {
    case JudgeStatus::Pass: return "pass";
    case JudgeStatus::Fail: return "fail";
    case JudgeStatus::Deferred: return "deferred";
    }
    return "fail";
}

JudgeStatus combine_verdicts(const std::vector<JudgeVerdict> & verdicts) {
    if (verdicts.empty()) throw ValidationError("no judge verdicts");
    bool all = true;
    for (const auto & v : verdicts) {
        if (v.error) return JudgeStatus::Deferred;
        all = all && v.text_correct && v.vision_correct;
    }
    return all ? JudgeStatus::Pass : JudgeStatus::Fail;
}

JudgeResult judge_filter(const CandidateContext & candidate, const SeedSample & seed,
                         const std::vector<const Backend *> & judges, const EvalOptions & opts) {
    if (judges.empty()) throw ValidationError("judge_filter needs at least one judge");
    JudgeResult r;
    if (same_answer(candidate.distractor_answer, seed.answer_vision)) {
        r.status = JudgeStatus::Fail;
        r.reason = "distractor equals the vision answer";
        return r;
    }
    const ConflictSample s = make_conflict(seed, candidate);
    validate(s);
    for (const Backend * judge : judges) {
        JudgeVerdict v;
        v.judge_id = judge->info().model_id;
        EvalOptions o = opts;
        o.max_parallel = 1;
        o.render.contexts = ContextSelection::TextOnly;
        const EvalRun text = evaluate({s}, *judge, o);
        o.render.contexts = ContextSelection::VisionOnly;
        const EvalRun vision = evaluate({s}, *judge, o);
        if (text.failures + vision.failures > 0) {
            for (const auto & resp : text.responses) {
                if (resp.error) v.error = *resp.error;
            }
            for (const auto & resp : vision.responses) {
                if (resp.error) v.error = *resp.error;
            }
        }
        v.text_correct = text.outcomes.front().category == Category::Text;
        v.vision_correct = vision.outcomes.front().category == Category::Vision;
        r.verdicts.push_back(std::move(v));
    }
    r.status = combine_verdicts(r.verdicts);
    if (r.status == JudgeStatus::Deferred) r.reason = "judge failure";
    return r;
}

std::string export_verification(const std::vector<ReviewItem> & items) {
    std::string out;
    for (const auto & item : items) {
        nlohmann::ordered_json j = to_json(item.sample);
        j["candidate_context"] = item.sample.text_context;
        j["candidate_answer"] = item.sample.answer_text;
        nlohmann::ordered_json verdicts = nlohmann::ordered_json::array();
        for (int a = 1; a <= 3; ++a) {
            nlohmann::ordered_json v;
            v["annotator"] = "annotator_" + std::to_string(a);
            v["verdict"] = "";
            v["revised_context"] = nullptr;
            verdicts.push_back(v);
        }
        j["verdicts"] = verdicts;
        if (item.template_id || !item.client_id.empty()) {
            nlohmann::ordered_json p;
            if (item.template_id) p["template_id"] = to_string(*item.template_id);
            p["client_id"] = item.client_id;
            j["provenance"] = p;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

void export_verification(const std::filesystem::path & path, const std::vector<ReviewItem> & items) {
    write_file(path, export_verification(items));
}

std::vector<ConflictSample> import_verification_text(std::string_view jsonl) {
    std::vector<ConflictSample> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error & e) {
            throw ParseError("line " + std::to_string(n) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("verdicts") || !j["verdicts"].is_array()) {
            throw ParseError("line " + std::to_string(n) + ": missing verdicts array");
        }
        const auto & verdicts = j["verdicts"];
        if (verdicts.size() < 3) {
            throw ParseError("line " + std::to_string(n) + ": expected 3 verdict slots, found " +
                             std::to_string(verdicts.size()));
        }
        size_t keep = 0;
        std::optional<std::string> revised;
        for (const auto & v : verdicts) {
            const Verdict verdict = parse_verdict(v, n);
            if (verdict == Verdict::Discard) continue;
            ++keep;
            if (verdict == Verdict::Revise && !revised && v.contains("revised_context") &&
                v["revised_context"].is_string()) {
                revised = v["revised_context"].get<std::string>();
            }
        }
        if (2 * keep <= verdicts.size()) continue;

        nlohmann::ordered_json base = j;
        for (auto key : kQueueKeys) base.erase(std::string(key));
        if (j.contains("candidate_answer") && j["candidate_answer"].is_string()) {
            base["answer_text"] = j["candidate_answer"];
        }
        if (revised) {
            base["text_context"] = *revised;
        } else if (j.contains("candidate_context")) {
            base["text_context"] = j["candidate_context"];
        }
        try {
            out.push_back(sample_from_json(base, false));
        } catch (const Error & e) {
            throw ParseError("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ConflictSample> import_verification(const std::filesystem::path & path) {
    return import_verification_text(read_file(path));
}

} // namespace modsteer
