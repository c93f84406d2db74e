#include "modsteer/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"

namespace modsteer {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim_view(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

ParsedAnswer to_parsed(const ConflictSample & s, const ChoicePrompt & p, Choice c) {
    if (c == Choice::Unparsed) return ParsedAnswer::Unparsed;
    const std::string & content = c == Choice::A ? p.option_a : p.option_b;
    if (same_answer(content, s.answer_vision)) return ParsedAnswer::VisionChoice;
    if (same_answer(content, s.answer_text)) return ParsedAnswer::TextChoice;
    return ParsedAnswer::Unparsed;
}

std::vector<double> average_ranks(const std::vector<double> & v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

void append_csv_row(std::ostream & os, const ReportRow & row, std::string_view task, const ScoreTuple & t) {
    os << row.model_id << ',' << to_string(row.prompt_mode) << ',' << task << ',' << t.n << ','
       << fmt::format("{:.6f},{:.6f},{:.6f}", t.s_vision, t.s_text, t.s_others) << ','
       << format_ratio(t.vision_ratio);
    const bool steered = row.lambda.has_value();
    if (steered) {
        os << ',' << fmt::format("{:g}", *row.lambda) << ',' << (row.layer ? std::to_string(*row.layer) : "")
           << ',' << (row.inject_prefill.value_or(true) ? "true" : "false") << ','
           << (row.degenerate.value_or(false) ? "true" : "false");
    }
    os << '\n';
}

nlohmann::ordered_json tuple_json(const ScoreTuple & t) {
    nlohmann::ordered_json j;
    j["n"] = t.n;
    j["n_vision"] = t.n_vision;
    j["n_text"] = t.n_text;
    j["n_others"] = t.n_others;
    j["s_vision"] = t.s_vision;
    j["s_text"] = t.s_text;
    j["s_others"] = t.s_others;
    j["vision_ratio"] = t.vision_ratio ? nlohmann::ordered_json(*t.vision_ratio) : nlohmann::ordered_json(nullptr);
    return j;
}

} // namespace

std::string_view to_string(Choice c) {
    switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::Unparsed: return "unparsed";
    }
    return "unparsed";
}

std::string_view to_string(ParsedAnswer p) {
    switch (p) {
    case ParsedAnswer::VisionChoice: return "vision";
    case ParsedAnswer::TextChoice: return "text";
    case ParsedAnswer::Unparsed: return "unparsed";
    }
    return "unparsed";
}

std::string_view to_string(Category c) {
    switch (c) {
    case Category::Vision: return "vision";
    case Category::Text: return "text";
    case Category::Others: return "others";
    }
    return "others";
}

Choice parse_choice(std::string_view raw_text, std::string_view option_a, std::string_view option_b) {
    const std::string_view t = trim_view(raw_text);
    if (!t.empty() && (t[0] == 'A' || t[0] == 'B')) {
        const bool bare = t.size() == 1;
        const char next = bare ? '\0' : t[1];
        if (bare || next == '.' || next == ')' || next == ':' || std::isspace(static_cast<unsigned char>(next))) {
            return t[0] == 'A' ? Choice::A : Choice::B;
        }
    }
    const std::string hay = lower(t);
    const std::string a = lower(trim_view(option_a));
    const std::string b = lower(trim_view(option_b));
    const bool has_a = !a.empty() && hay.find(a) != std::string::npos;
    const bool has_b = !b.empty() && hay.find(b) != std::string::npos;
    if (has_a && !has_b) return Choice::A;
    if (has_b && !has_a) return Choice::B;
    return Choice::Unparsed;
}

ResponseRecord make_response(const ConflictSample & s, const ChoicePrompt & p, std::string raw_text) {
    ResponseRecord r;
    r.sample_id = s.id;
    r.ordering = p.ordering;
    r.parsed = to_parsed(s, p, parse_choice(raw_text, p.option_a, p.option_b));
    r.raw_text = std::move(raw_text);
    return r;
}

CategorizedOutcome categorize(const ConflictSample & s, const ResponseRecord & r1, const ResponseRecord & r2) {
    if (r1.sample_id != s.id || r2.sample_id != s.id) {
        throw ValidationError("responses '" + r1.sample_id + "' and '" + r2.sample_id + "' do not belong to sample '" +
                              s.id + "'");
    }
    CategorizedOutcome o;
    o.sample_id = s.id;
    o.task_type = s.task_type;
    o.consistent = r1.parsed != ParsedAnswer::Unparsed && r1.parsed == r2.parsed;
    if (o.consistent) {
        o.category = r1.parsed == ParsedAnswer::VisionChoice ? Category::Vision : Category::Text;
    }
    return o;
}

std::optional<double> vision_ratio(double s_vision, double s_text) {
    const double denom = s_vision + s_text;
    if (!(denom > 0.0)) return std::nullopt;
    return s_vision / denom;
}

ScoreTuple make_scores(size_t n_vision, size_t n_text, size_t n_others) {
    ScoreTuple t;
    t.n_vision = n_vision;
    t.n_text = n_text;
    t.n_others = n_others;
    t.n = n_vision + n_text + n_others;
    if (t.n == 0) return t;
    const double n = static_cast<double>(t.n);
    t.s_vision = static_cast<double>(n_vision) / n;
    t.s_text = static_cast<double>(n_text) / n;
    t.s_others = static_cast<double>(n_others) / n;
    // Integer counts make the ratio exact; no rounding from the fractions.
    if (n_vision + n_text > 0) {
        t.vision_ratio = static_cast<double>(n_vision) / static_cast<double>(n_vision + n_text);
    }
    return t;
}

PreferenceScores aggregate(const std::vector<CategorizedOutcome> & outcomes) {
    if (outcomes.empty()) {
        throw ValidationError("cannot aggregate an empty outcome list");
    }
    struct Counts {
        size_t v = 0, t = 0, o = 0;
    };
    Counts all;
    std::map<TaskType, Counts> per;
    for (const auto & oc : outcomes) {
        Counts & c = per[oc.task_type];
        switch (oc.category) {
        case Category::Vision:
            ++all.v;
            ++c.v;
            break;
        case Category::Text:
            ++all.t;
            ++c.t;
            break;
        case Category::Others:
            ++all.o;
            ++c.o;
            break;
        }
    }
    PreferenceScores ps;
    ps.overall = make_scores(all.v, all.t, all.o);
    for (const auto & [task, c] : per) ps.per_task[task] = make_scores(c.v, c.t, c.o);
    return ps;
}

std::optional<double> spearman_rho(const std::vector<double> & xs, const std::vector<double> & ys) {
    if (xs.size() != ys.size()) {
        throw ValidationError("spearman inputs differ in length");
    }
    if (xs.size() < 3) {
        throw ValidationError("spearman needs at least 3 pairs");
    }
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void parallel_for(size_t n, size_t parallel, const std::function<void(size_t)> & fn) {
    const size_t workers = std::max<size_t>(1, std::min(parallel, n));
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto & t : threads) t.join();
    for (auto & e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

EvalRun evaluate_with(const std::vector<ConflictSample> & samples, const Generator & gen, size_t parallel,
                      const EvalOptions & opts) {
    if (samples.empty()) {
        throw ValidationError("cannot evaluate an empty sample list");
    }
    EvalRun run;
    run.responses.resize(samples.size() * 2);
    parallel_for(samples.size() * 2, parallel, [&](size_t i) {
        const ConflictSample & s = samples[i / 2];
        const Ordering ord = i % 2 == 0 ? Ordering::VisionFirst : Ordering::TextFirst;
        const ChoicePrompt p = render_choice_prompt(s, ord, opts.render);
        try {
            run.responses[i] = make_response(s, p, gen(make_request(p, opts.decode)).text);
        } catch (const std::exception & e) {
            ResponseRecord r;
            r.sample_id = s.id;
            r.ordering = ord;
            r.error = e.what();
            run.responses[i] = std::move(r);
        }
    });
    run.outcomes.reserve(samples.size());
    for (size_t k = 0; k < samples.size(); ++k) {
        for (size_t o = 0; o < 2; ++o) {
            if (const auto & r = run.responses[2 * k + o]; r.error) {
                ++run.failures;
                spdlog::warn("sample '{}' ({}): {}", r.sample_id, to_string(r.ordering), *r.error);
            }
        }
        run.outcomes.push_back(categorize(samples[k], run.responses[2 * k], run.responses[2 * k + 1]));
    }
    run.scores = aggregate(run.outcomes);
    return run;
}

EvalRun evaluate(const std::vector<ConflictSample> & samples, const Backend & backend, const EvalOptions & opts) {
    const size_t parallel = opts.max_parallel ? opts.max_parallel : backend.info().max_parallel_sessions;
    return evaluate_with(
        samples, [&](const GenerationRequest & r) { return backend.generate(r); }, parallel, opts);
}

SingleModalityResult single_modality_accuracy(const std::vector<ConflictSample> & samples, const Backend & backend,
                                              ContextSelection modality, const EvalOptions & opts) {
    if (modality == ContextSelection::Both) {
        throw ValidationError("single-modality accuracy needs TextOnly or VisionOnly");
    }
    EvalOptions o = opts;
    o.render.contexts = modality;
    const EvalRun run = evaluate(samples, backend, o);
    SingleModalityResult res;
    res.n = samples.size();
    res.failures = run.failures;
    const Category want = modality == ContextSelection::TextOnly ? Category::Text : Category::Vision;
    for (const auto & oc : run.outcomes) {
        if (oc.category == want) ++res.correct;
    }
    res.accuracy = static_cast<double>(res.correct) / static_cast<double>(res.n);
    return res;
}

std::string format_ratio(const std::optional<double> & r) {
    return r ? fmt::format("{:.6f}", *r) : std::string("NA");
}

void write_report_csv(std::ostream & os, const std::vector<ReportRow> & rows) {
    const bool steered = std::any_of(rows.begin(), rows.end(), [](const ReportRow & r) { return r.lambda.has_value(); });
    os << "model_id,prompt_mode,task_type,n,s_vision,s_text,s_others,vision_ratio";
    if (steered) os << ",lambda,layer,inject_prefill,degenerate";
    os << '\n';
    for (const auto & row : rows) {
        append_csv_row(os, row, "all", row.scores.overall);
        for (const auto & [task, t] : row.scores.per_task) append_csv_row(os, row, to_string(task), t);
    }
}

nlohmann::ordered_json report_json(const ReportRow & row, const EvalRun & run) {
    nlohmann::ordered_json j;
    j["model_id"] = row.model_id;
    j["prompt_mode"] = to_string(row.prompt_mode);
    if (row.lambda) {
        j["lambda"] = *row.lambda;
        j["layer"] = row.layer ? nlohmann::ordered_json(*row.layer) : nlohmann::ordered_json(nullptr);
        j["inject_prefill"] = row.inject_prefill.value_or(true);
        j["degenerate"] = row.degenerate.value_or(false);
    }
    j["overall"] = tuple_json(row.scores.overall);
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto & [task, t] : row.scores.per_task) per[std::string(to_string(task))] = tuple_json(t);
    j["per_task"] = per;
    j["failures"] = run.failures;

    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (size_t k = 0; k < run.outcomes.size(); ++k) {
        const auto & oc = run.outcomes[k];
        nlohmann::ordered_json s;
        s["id"] = oc.sample_id;
        s["task_type"] = to_string(oc.task_type);
        s["consistent"] = oc.consistent;
        s["category"] = to_string(oc.category);
        nlohmann::ordered_json resp = nlohmann::ordered_json::array();
        for (size_t o = 0; o < 2 && 2 * k + o < run.responses.size(); ++o) {
            const auto & r = run.responses[2 * k + o];
            nlohmann::ordered_json rj;
            rj["ordering"] = to_string(r.ordering);
            rj["raw_text"] = r.raw_text;
            rj["parsed"] = to_string(r.parsed);
            if (r.error) rj["error"] = *r.error;
            resp.push_back(rj);
        }
        s["responses"] = resp;
        samples.push_back(s);
    }
    j["samples"] = samples;
    return j;
}

} // namespace modsteer
