#include <algorithm>
#include <random>
#include <sstream>

#include "stub_backend.hpp"
#include "support.hpp"

#include "modsteer/error.hpp"
#include "modsteer/eval.hpp"
#include "modsteer/report.hpp"

using namespace modsteer;

namespace {

ResponseRecord resp(const ConflictSample & s, Ordering o, const std::string & text) {
    const auto p = render_choice_prompt(s, o);
    return make_response(s, p, text);
}

CategorizedOutcome outcome(TaskType t, Category c, int i) {
    return {"s" + std::to_string(i), t, c != Category::Others, c};
}

} // namespace

TEST_CASE("parse_choice rule cascade") {
    CHECK(parse_choice("B. wood", "wicker", "wood") == Choice::B);
    CHECK(parse_choice("A", "wicker", "wood") == Choice::A);
    CHECK(parse_choice("A) wicker", "wicker", "wood") == Choice::A);
    CHECK(parse_choice("B: wood", "wicker", "wood") == Choice::B);
    CHECK(parse_choice("The answer is wicker.", "wicker", "wood") == Choice::A);
    CHECK(parse_choice("I think WOOD", "wicker", "wood") == Choice::B);
    CHECK(parse_choice("Both seem plausible", "wicker", "wood") == Choice::Unparsed);
    CHECK(parse_choice("wicker or wood", "wicker", "wood") == Choice::Unparsed);
    CHECK(parse_choice("", "wicker", "wood") == Choice::Unparsed);
    // a leading word starting with A is not a letter answer
    CHECK(parse_choice("Apparently wood", "wicker", "wood") == Choice::B);
}

TEST_CASE("categorize definitions") {
    const auto s = testing::make_sample("x", TaskType::Attribute, "wicker", "wood");
    SUBCASE("both orderings pick the vision answer") {
        const auto o = categorize(s, resp(s, Ordering::VisionFirst, "A"), resp(s, Ordering::TextFirst, "B"));
        CHECK(o.consistent);
        CHECK(o.category == Category::Vision);
    }
    SUBCASE("both pick the text answer") {
        const auto o = categorize(s, resp(s, Ordering::VisionFirst, "wood"), resp(s, Ordering::TextFirst, "A. wood"));
        CHECK(o.consistent);
        CHECK(o.category == Category::Text);
    }
    SUBCASE("letter A in both orderings is inconsistent") {
        const auto o = categorize(s, resp(s, Ordering::VisionFirst, "A"), resp(s, Ordering::TextFirst, "A"));
        CHECK_FALSE(o.consistent);
        CHECK(o.category == Category::Others);
    }
    SUBCASE("one unparsed response") {
        const auto o = categorize(s, resp(s, Ordering::VisionFirst, "A"), resp(s, Ordering::TextFirst, "no idea"));
        CHECK_FALSE(o.consistent);
        CHECK(o.category == Category::Others);
    }
    SUBCASE("mismatched ids") {
        auto other = s;
        other.id = "y";
        CHECK_THROWS_AS(categorize(s, resp(other, Ordering::VisionFirst, "A"), resp(s, Ordering::TextFirst, "B")),
                        ValidationError);
    }
}

TEST_CASE("categorize is swap invariant") {
    const auto s = testing::make_sample("x", TaskType::Color, "red", "blue");
    const std::vector<std::string> texts = {"A", "B", "red", "blue", "???", "A. red", "B) blue"};
    for (const auto & t1 : texts) {
        for (const auto & t2 : texts) {
            const auto r1 = resp(s, Ordering::VisionFirst, t1);
            const auto r2 = resp(s, Ordering::TextFirst, t2);
            CHECK(categorize(s, r1, r2) == categorize(s, r2, r1));
        }
    }
}

TEST_CASE("vision ratio arithmetic") {
    CHECK(std::abs(*vision_ratio(0.119, 0.772) - 0.1335) <= 0.0005);
    CHECK(std::abs(*vision_ratio(0.522, 0.354) - 0.5959) <= 0.0005);
    CHECK_FALSE(vision_ratio(0.0, 0.0).has_value());
    CHECK(*vision_ratio(1.0, 0.0) == 1.0);
}

TEST_CASE("aggregate: all Others gives the undefined ratio") {
    std::vector<CategorizedOutcome> v;
    for (int i = 0; i < 5; ++i) v.push_back(outcome(TaskType::Color, Category::Others, i));
    const auto s = aggregate(v);
    CHECK(s.overall.s_others == 1.0);
    CHECK_FALSE(s.overall.vision_ratio.has_value());
    CHECK(format_ratio(s.overall.vision_ratio) == "NA");
    CHECK_THROWS_AS(aggregate({}), ValidationError);
}

TEST_CASE("aggregate properties on random multisets") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 60);
        std::vector<CategorizedOutcome> v;
        size_t nv = 0, nt = 0, no = 0;
        for (int i = 0; i < n; ++i) {
            const auto c = static_cast<Category>(rng() % 3);
            (c == Category::Vision ? nv : c == Category::Text ? nt : no)++;
            v.push_back(outcome(kAllTaskTypes[rng() % 8], c, i));
        }
        const auto a = aggregate(v);
        CHECK(a.overall.n_vision == nv);
        CHECK(a.overall.n_text == nt);
        CHECK(a.overall.n_others == no);
        CHECK(std::abs(a.overall.s_vision + a.overall.s_text + a.overall.s_others - 1.0) <= 1e-9);

        auto shuffled = v;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(aggregate(shuffled) == a);

        auto more = v;
        more.push_back(outcome(TaskType::Sport, Category::Vision, 999));
        const auto b = aggregate(more);
        CHECK(b.overall.s_vision > a.overall.s_vision);
        if (a.overall.vision_ratio) CHECK(*b.overall.vision_ratio >= *a.overall.vision_ratio);
    }
}

TEST_CASE("spearman examples") {
    CHECK(*spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(*spearman_rho({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_FALSE(spearman_rho({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_THROWS_AS(spearman_rho({1, 2, 3}, {1, 2}), ValidationError);
    CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2}), ValidationError);
    // average-rank ties; expected values computed offline with an independent implementation
    CHECK(*spearman_rho({1, 2, 2, 3}, {1, 2, 3, 4}) == doctest::Approx(0.9486832980505139).epsilon(1e-12));
    CHECK(*spearman_rho({3, 1, 4, 1, 5, 9, 2, 6}, {2, 7, 1, 8, 2, 8, 1, 8}) ==
          doctest::Approx(0.19885368120992467).epsilon(1e-12));
}

TEST_CASE("spearman on the ten-model fixture") {
    const auto pairs = join_columns(load_csv(testing::data_path("models_vision_ratio.csv")), "vision_ratio",
                                    load_csv(testing::data_path("models_accuracy.csv")), "avg", "model_id");
    REQUIRE(pairs.size() == 10);
    std::vector<double> xs, ys;
    for (auto [x, y] : pairs) {
        xs.push_back(x);
        ys.push_back(y);
    }
    const auto rho = spearman_rho(xs, ys);
    REQUIRE(rho);
    CHECK(std::abs(*rho - 0.964) <= 0.02);
    CHECK(*rho == doctest::Approx(0.9787279253249042).epsilon(1e-12));
}

TEST_CASE("single-modality accuracy") {
    const auto samples = testing::fixture();
    SUBCASE("a model that always answers A is never swap-consistent") {
        const auto b = testing::always("A");
        const auto r = single_modality_accuracy(samples, b, ContextSelection::TextOnly);
        CHECK(r.accuracy == 0.0);
        CHECK(r.n == samples.size());
    }
    SUBCASE("toy follows the text when only text is given") {
        const ToyBackend toy(testing::toy_config());
        CHECK(single_modality_accuracy(samples, toy, ContextSelection::TextOnly).accuracy == 1.0);
    }
    SUBCASE("empty list") {
        const auto b = testing::always("A");
        CHECK_THROWS(single_modality_accuracy({}, b, ContextSelection::TextOnly));
    }
    SUBCASE("backend failures count as wrong") {
        const testing::StubBackend b([](const GenerationRequest &) -> GenerationResult {
            throw BackendError("engine down");
        });
        const auto r = single_modality_accuracy(samples, b, ContextSelection::VisionOnly);
        CHECK(r.accuracy == 0.0);
        CHECK(r.failures == 2 * samples.size());
    }
}

TEST_CASE("evaluate records failures as Others and keeps going") {
    auto samples = testing::fixture();
    samples.resize(4);
    const testing::StubBackend b([&](const GenerationRequest & req) -> GenerationResult {
        if (req.prompt_text.find(samples[1].text_context) != std::string::npos) throw BackendError("boom");
        return {"A", 1};
    });
    const auto run = evaluate(samples, b);
    CHECK(run.failures == 2);
    CHECK(run.responses.size() == 8);
    CHECK(run.responses[2].error.has_value());
    CHECK(run.outcomes[1].category == Category::Others);
    CHECK(run.scores.overall.n == 4);
}

TEST_CASE("toy evaluation is deterministic across parallelism and matches the golden CSV") {
    const auto samples = testing::fixture();
    const ToyBackend toy(testing::toy_config());
    EvalOptions serial;
    serial.max_parallel = 1;
    EvalOptions wide;
    wide.max_parallel = 8;
    const auto a = evaluate(samples, toy, serial);
    const auto b = evaluate(samples, toy, wide);
    CHECK(a.scores == b.scores);
    for (size_t i = 0; i < a.responses.size(); ++i) CHECK(a.responses[i].raw_text == b.responses[i].raw_text);

    std::ostringstream os;
    write_report_csv(os, {{toy.info().model_id, PromptMode::Neutral, a.scores, {}, {}, {}, {}}});
    testing::check_golden("evaluate_toy_fixture.csv", os.str());
}

TEST_CASE("report CSV columns for steered rows") {
    PreferenceScores s;
    s.overall = make_scores(1, 1, 0);
    s.per_task[TaskType::Color] = make_scores(1, 1, 0);
    std::ostringstream os;
    write_report_csv(os, {{"m", PromptMode::InstText, s, 0.5, 5u, true, false}});
    CHECK(os.str() ==
          "model_id,prompt_mode,task_type,n,s_vision,s_text,s_others,vision_ratio,lambda,layer,inject_prefill,degenerate\n"
          "m,inst_text,all,2,0.500000,0.500000,0.000000,0.500000,0.5,5,true,false\n"
          "m,inst_text,color,2,0.500000,0.500000,0.000000,0.500000,0.5,5,true,false\n");
}
