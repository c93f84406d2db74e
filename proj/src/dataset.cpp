#include "modsteer/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "modsteer/error.hpp"

namespace modsteer {

namespace {

constexpr std::array<std::string_view, 8> kTaskNames = {
    "sport", "attribute", "sentiment", "positional", "counting", "color", "activity", "object",
};

constexpr std::array<std::string_view, 8> kSchemaKeys = {
    "id", "task_type", "image", "caption", "text_context", "question", "answer_vision", "answer_text",
};

// Text-only demonstrations used by PromptMode::FewShot.
constexpr std::array<std::string_view, 4> kFewShotDemos = {
    "Text Context: Two dogs are sleeping on the porch.\nQuestion: How many dogs are there?\nA. two\nB. five\nAnswer: A",
    "Text Context: The kite drifting over the beach is bright yellow.\nQuestion: What color is the kite?\nA. red\nB. yellow\nAnswer: B",
    "Text Context: A man swings his racket at the ball on a clay court.\nQuestion: What sport is being played?\nA. tennis\nB. golf\nAnswer: A",
    "Text Context: The cat is curled up under the wooden table.\nQuestion: Where is the cat?\nA. on the roof\nB. under the table\nAnswer: B",
};

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

const std::string & require_string(const nlohmann::ordered_json & j, std::string_view key) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw DatasetError("missing key '" + std::string(key) + "'");
    }
    if (!it->is_string()) {
        throw DatasetError("key '" + std::string(key) + "' must be a string");
    }
    return it->get_ref<const std::string &>();
}

} // namespace

std::string_view to_string(TaskType t) {
    return kTaskNames[static_cast<size_t>(t)];
}

std::optional<TaskType> parse_task_type(std::string_view s) {
    for (size_t i = 0; i < kTaskNames.size(); ++i) {
        if (kTaskNames[i] == s) {
            return static_cast<TaskType>(i);
        }
    }
    return std::nullopt;
}

std::string_view to_string(Ordering o) {
    return o == Ordering::VisionFirst ? "vision_first" : "text_first";
}

std::string_view to_string(PromptMode m) {
    switch (m) {
    case PromptMode::Neutral: return "neutral";
    case PromptMode::InstVision: return "inst_vision";
    case PromptMode::InstText: return "inst_text";
    case PromptMode::CoT: return "cot";
    case PromptMode::FewShot: return "few_shot";
    }
    return "neutral";
}

std::optional<PromptMode> parse_prompt_mode(std::string_view s) {
    for (auto m : {PromptMode::Neutral, PromptMode::InstVision, PromptMode::InstText, PromptMode::CoT,
                   PromptMode::FewShot}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    return std::nullopt;
}

std::string normalize_answer(std::string_view s) {
    std::string out = trim(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool same_answer(std::string_view a, std::string_view b) {
    return normalize_answer(a) == normalize_answer(b);
}

void validate(const ConflictSample & s) {
    auto fail = [&](std::string_view rule) {
        throw ValidationError("sample '" + s.id + "' violates " + std::string(rule));
    };
    if (trim(s.id).empty()) fail("non-empty invariant (id)");
    if (trim(s.text_context).empty()) fail("non-empty invariant (text_context)");
    if (trim(s.question).empty()) fail("non-empty invariant (question)");
    if (trim(s.answer_vision).empty()) fail("non-empty invariant (answer_vision)");
    if (trim(s.answer_text).empty()) fail("non-empty invariant (answer_text)");
    if (same_answer(s.answer_vision, s.answer_text)) fail("conflict invariant (answer_vision == answer_text)");
}

ChoicePrompt render_choice_prompt(const ConflictSample & s, Ordering ordering, const RenderOptions & opts) {
    validate(s);

    ChoicePrompt p;
    p.sample_id = s.id;
    p.ordering = ordering;
    p.prompt_mode = opts.mode;
    if (ordering == Ordering::VisionFirst) {
        p.option_a = s.answer_vision;
        p.option_b = s.answer_text;
    } else {
        p.option_a = s.answer_text;
        p.option_b = s.answer_vision;
    }

    const bool with_image = opts.contexts != ContextSelection::TextOnly;
    const bool with_text = opts.contexts != ContextSelection::VisionOnly;

    std::ostringstream out;
    if (opts.mode == PromptMode::FewShot) {
        for (auto demo : kFewShotDemos) {
            out << demo << "\n\n";
        }
    }
    if (opts.mode == PromptMode::InstVision) out << kInstVision << "\n";
    if (opts.mode == PromptMode::InstText) out << kInstText << "\n";

    const std::string text_block = "Text Context: " + s.text_context + "\n";
    if (with_text && !opts.text_after_image) out << text_block;
    if (with_image) out << kImagePlaceholder << "\n";
    if (with_text && opts.text_after_image) out << text_block;

    out << "Question: " << s.question << "\n";
    out << "A. " << p.option_a << "\n";
    out << "B. " << p.option_b << "\n";
    if (opts.mode == PromptMode::CoT) out << kCoTSuffix << "\n";
    out << "Answer:";

    p.rendered_text = out.str();
    if (with_image) {
        p.image_ref = s.image_ref;
    }
    return p;
}

std::pair<ChoicePrompt, ChoicePrompt> render_choice_prompts(const ConflictSample & s, const RenderOptions & opts) {
    return {render_choice_prompt(s, Ordering::VisionFirst, opts), render_choice_prompt(s, Ordering::TextFirst, opts)};
}

std::pair<ChoicePrompt, ChoicePrompt> render_choice_prompts(const ConflictSample & s, PromptMode mode) {
    RenderOptions opts;
    opts.mode = mode;
    return render_choice_prompts(s, opts);
}

ChoicePrompt swap_options(const ChoicePrompt & p) {
    const std::string line_a = "\nA. " + p.option_a + "\n";
    const std::string line_b = "B. " + p.option_b + "\n";
    const size_t pos = p.rendered_text.rfind(line_a + line_b);
    if (pos == std::string::npos) {
        throw ValidationError("prompt '" + p.sample_id + "' has no option block to swap");
    }
    ChoicePrompt q = p;
    std::swap(q.option_a, q.option_b);
    q.ordering = p.ordering == Ordering::VisionFirst ? Ordering::TextFirst : Ordering::VisionFirst;
    q.rendered_text.replace(pos, line_a.size() + line_b.size(),
                            "\nA. " + q.option_a + "\nB. " + q.option_b + "\n");
    return q;
}

size_t whitespace_word_count(std::string_view s) {
    size_t n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

DatasetManifest make_manifest(const std::vector<ConflictSample> & samples, std::string name, std::string version) {
    DatasetManifest m;
    m.name = std::move(name);
    m.version = std::move(version);
    m.sample_count = samples.size();
    std::map<TaskType, size_t> words;
    for (const auto & s : samples) {
        ++m.per_task_counts[s.task_type];
        words[s.task_type] += whitespace_word_count(s.text_context);
    }
    for (const auto & [task, count] : m.per_task_counts) {
        m.mean_text_context_words[task] = static_cast<double>(words[task]) / static_cast<double>(count);
    }
    return m;
}

nlohmann::ordered_json to_json(const ConflictSample & s) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["task_type"] = std::string(to_string(s.task_type));
    j["image"] = s.image_ref;
    j["caption"] = s.caption ? nlohmann::ordered_json(*s.caption) : nlohmann::ordered_json(nullptr);
    j["text_context"] = s.text_context;
    j["question"] = s.question;
    j["answer_vision"] = s.answer_vision;
    j["answer_text"] = s.answer_text;
    for (const auto & [k, v] : s.extra.items()) {
        j[k] = v;
    }
    return j;
}

ConflictSample sample_from_json(const nlohmann::ordered_json & j, bool strict) {
    if (!j.is_object()) {
        throw DatasetError("line is not a JSON object");
    }
    ConflictSample s;
    s.id = require_string(j, "id");
    const auto & task = require_string(j, "task_type");
    auto t = parse_task_type(task);
    if (!t) {
        throw ValidationError("sample '" + s.id + "' violates task_type invariant (unknown '" + task + "')");
    }
    s.task_type = *t;
    s.image_ref = require_string(j, "image");
    auto cap = j.find("caption");
    if (cap == j.end()) {
        throw DatasetError("missing key 'caption'");
    }
    if (!cap->is_null()) {
        if (!cap->is_string()) throw DatasetError("key 'caption' must be a string or null");
        s.caption = cap->get<std::string>();
    }
    s.text_context = require_string(j, "text_context");
    s.question = require_string(j, "question");
    s.answer_vision = require_string(j, "answer_vision");
    s.answer_text = require_string(j, "answer_text");

    for (const auto & [k, v] : j.items()) {
        if (std::find(kSchemaKeys.begin(), kSchemaKeys.end(), k) != kSchemaKeys.end()) continue;
        if (strict) {
            throw DatasetError("unknown key '" + k + "' (strict mode)");
        }
        s.extra[k] = v;
    }
    validate(s);
    return s;
}

Dataset parse_dataset(std::string_view jsonl, const LoadOptions & opts) {
    Dataset ds;
    size_t line_no = 0;
    size_t start = 0;
    while (start <= jsonl.size()) {
        size_t end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        std::string_view line = jsonl.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (trim(line).empty()) {
            if (end == jsonl.size()) break;
            continue;
        }
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error & e) {
            throw DatasetError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        try {
            ds.samples.push_back(sample_from_json(j, opts.strict));
        } catch (const ValidationError & e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DatasetError & e) {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (end == jsonl.size()) break;
    }
    ds.manifest = make_manifest(ds.samples, opts.name.empty() ? "dataset" : opts.name, opts.version);
    return ds;
}

Dataset load_dataset(const std::filesystem::path & path, const LoadOptions & opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DatasetError("cannot open dataset file '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    LoadOptions o = opts;
    if (o.name.empty()) o.name = path.stem().string();
    return parse_dataset(buf.str(), o);
}

void save_dataset(const std::filesystem::path & path, const std::vector<ConflictSample> & samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DatasetError("cannot write dataset file '" + path.string() + "'");
    }
    for (const auto & s : samples) {
        out << to_json(s).dump() << "\n";
    }
}

} // namespace modsteer
