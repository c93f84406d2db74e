#include <algorithm>
#include <map>
#include <random>

#include <fmt/format.h>

#include "support.hpp"

#include "modsteer/error.hpp"
#include "modsteer/probe.hpp"

using namespace modsteer;

namespace {

HiddenStateMatrix matrix(size_t L, size_t d, std::vector<double> data) {
    HiddenStateMatrix m("m", L, d);
    m.data = std::move(data);
    return m;
}

ProbePair pair(std::vector<double> xt, std::vector<double> xv, size_t L = 1, size_t d = 2) {
    ProbePair p;
    p.sample_id = "p";
    p.x_text = matrix(L, d, std::move(xt));
    p.x_vision = matrix(L, d, std::move(xv));
    return p;
}

std::vector<ProbePair> random_pairs(std::mt19937_64 & rng, size_t n, size_t L, size_t d) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<ProbePair> out;
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> a(L * d), b(L * d);
        for (auto & x : a) x = g(rng);
        for (auto & x : b) x = g(rng) + 0.5;
        out.push_back(pair(a, b, L, d));
        out.back().sample_id = "r" + std::to_string(i);
    }
    return out;
}

DirectionProfile stats(std::vector<double> mean_abs, std::vector<double> std) {
    DirectionProfile p;
    p.num_layers = mean_abs.size();
    p.mean_abs = std::move(mean_abs);
    p.std = std::move(std);
    return p;
}

std::string dump(const HiddenStateMatrix & m) {
    std::string s;
    for (size_t l = 0; l < m.num_layers; ++l) {
        for (size_t c = 0; c < m.dim; ++c) s += fmt::format("{}{:.17g}", c ? " " : "", m.row(l)[c]);
        s += "\n";
    }
    return s;
}

} // namespace

TEST_CASE("probe pair on the toy") {
    const ToyBackend toy(testing::toy_config());
    const auto s = testing::fixture()[0];
    const auto p = build_probe_pair(s, toy);
    CHECK(p.x_vision.num_layers == 8);
    CHECK(p.x_vision.dim == 32);
    CHECK(p.x_text.num_layers == 8);
    // the prompts differ only in the instruction clause
    auto swapped = p.prompt_vision;
    const auto at = swapped.find(kInstVision);
    REQUIRE(at != std::string::npos);
    swapped.replace(at, kInstVision.size(), kInstText);
    CHECK(swapped == p.prompt_text);
    CHECK(p.prompt_vision != p.prompt_text);
    testing::check_golden("probe_pair_sport-01.txt", "# x_vision\n" + dump(p.x_vision) + "# x_text\n" + dump(p.x_text));
}

TEST_CASE("identical instruction on both sides gives identical states") {
    const ToyBackend toy(testing::toy_config());
    const auto s = testing::fixture()[4];
    RenderOptions o;
    o.mode = PromptMode::InstText;
    const auto req = make_request(render_choice_prompt(s, Ordering::VisionFirst, o));
    CHECK(toy.capture_hidden_states(req) == toy.capture_hidden_states(req));
}

TEST_CASE("failed captures are skipped") {
    const ToyBackend toy(testing::toy_config());
    auto samples = testing::fixture();
    samples.resize(3);
    samples[1].image_ref = "";
    const auto pairs = collect_probe_pairs(samples, toy);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].sample_id == samples[0].id);
    CHECK(pairs[1].sample_id == samples[2].id);
}

TEST_CASE("direction arithmetic examples") {
    SUBCASE("single pair") {
        const auto p = compute_direction({pair({1, 2}, {0, 2})});
        CHECK(p.u[0] == Vector{1, 0});
        CHECK(p.n_pairs == 1);
        CHECK(p.std[0] == 0.0);
    }
    SUBCASE("two pairs") {
        const auto p = compute_direction({pair({2, 0}, {0, 0}), pair({1, 3}, {1, 1})});
        CHECK(p.u[0] == Vector{1, 1});
        CHECK(p.mean_abs[0] == 1.0);
        CHECK(p.mean_norm[0] == 2.0);
        CHECK(p.std[0] == 0.0);
        CHECK(p.pair_abs[0] == 1.0);
    }
    SUBCASE("no difference") {
        const auto p = compute_direction({pair({3, 4}, {3, 4}), pair({5, 6}, {5, 6})});
        CHECK(p.u[0] == Vector{0, 0});
    }
    SUBCASE("sample std of pair norms") {
        // diff norms 3 and 5: mean 4, sample std sqrt(2)
        const auto p = compute_direction({pair({3, 0}, {0, 0}), pair({0, 5}, {0, 0})});
        CHECK(p.std[0] == doctest::Approx(std::sqrt(2.0)));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_direction({}), ValidationError);
        CHECK_THROWS_AS(compute_direction({pair({1, 2}, {0, 2}), pair({1, 2, 3}, {0, 2, 3}, 1, 3)}), ValidationError);
    }
}

TEST_CASE("swapped sides negate the direction exactly") {
    std::mt19937_64 rng(5);
    const auto pairs = random_pairs(rng, 20, 4, 6);
    const auto a = compute_direction(pairs);
    const auto b = compute_direction(swap_sides(pairs));
    for (size_t l = 0; l < 4; ++l) {
        for (size_t c = 0; c < 6; ++c) CHECK(b.u[l][c] == -a.u[l][c]);
        CHECK(b.std[l] == a.std[l]);
    }
}

TEST_CASE("direction of a concatenation is the N-weighted average") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_pairs(rng, 1 + rng() % 10, 3, 5);
        const auto y = random_pairs(rng, 1 + rng() % 10, 3, 5);
        auto xy = x;
        xy.insert(xy.end(), y.begin(), y.end());
        const auto px = compute_direction(x), py = compute_direction(y), pxy = compute_direction(xy);
        const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
        for (size_t l = 0; l < 3; ++l) {
            for (size_t c = 0; c < 5; ++c) {
                CHECK(std::abs(pxy.u[l][c] - (nx * px.u[l][c] + ny * py.u[l][c]) / (nx + ny)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("layer selection") {
    CHECK(select_layer(stats({1, 5, 5}, {1, 0.5, 2}), {0, 3}) == 1);
    CHECK(select_layer(stats({1, 1, 4, 4}, {1, 1, 1, 1}), {0, 4}) == 2);
    CHECK(select_layer(stats({9, 1, 2}, {1, 1, 1}), {1, 3}) == 2);
    CHECK(select_layer(stats({0, 1}, {0, 0}), {0, 2}) == 1);
    CHECK_THROWS_AS(select_layer(stats({1, 2}, {1, 1}), {1, 1}), ValidationError);
    CHECK_THROWS_AS(select_layer(stats({1, 2}, {1, 1}), {0, 3}), ValidationError);
    const auto sc = layer_scores(stats({1, 5, 5}, {1, 0.5, 2}));
    CHECK(sc[1] == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("layer selection ignores pair order") {
    std::mt19937_64 rng(8);
    auto pairs = random_pairs(rng, 30, 6, 4);
    const auto layer = select_layer(compute_direction(pairs), full_window(6));
    for (int i = 0; i < 5; ++i) {
        std::shuffle(pairs.begin(), pairs.end(), rng);
        CHECK(select_layer(compute_direction(pairs), full_window(6)) == layer);
    }
}

TEST_CASE("default window") {
    CHECK(default_window(8).begin == 4);
    CHECK(default_window(8).end == 7);
    CHECK(default_window(28).begin == 14);
    CHECK(default_window(28).end == 25);
    CHECK(default_window(10).begin == 5);
    CHECK(default_window(10).end == 9);
    CHECK(full_window(5).end == 5);
}

TEST_CASE("stratified subset") {
    const auto pool = load_dataset(testing::data_path("toy_probe.jsonl")).samples;
    const auto a = stratified_subset(pool, 24, 3);
    CHECK(a.size() == 24);
    std::map<TaskType, int> counts;
    for (const auto & s : a) ++counts[s.task_type];
    for (auto t : kAllTaskTypes) CHECK(counts[t] == 3);
    CHECK(stratified_subset(pool, 24, 3) == a);
    CHECK(stratified_subset(pool, 24, 4) != a);
    CHECK(stratified_subset(pool, 1000, 3).size() == pool.size());
}

TEST_CASE("profile save and load") {
    std::mt19937_64 rng(9);
    auto p = compute_direction(random_pairs(rng, 7, 3, 4));
    p.model_id = "m";
    const auto dir = testing::scratch_dir("profile");
    save_profile(dir / "prof", p);
    const auto q = load_profile(dir / "prof");
    CHECK(q.model_id == "m");
    CHECK(q.num_layers == 3);
    CHECK(q.dim == 4);
    CHECK(q.n_pairs == 7);
    for (size_t l = 0; l < 3; ++l) {
        for (size_t c = 0; c < 4; ++c) CHECK(q.u[l][c] == static_cast<double>(static_cast<float>(p.u[l][c])));
        CHECK(q.mean_abs[l] == p.mean_abs[l]);
        CHECK(q.std[l] == p.std[l]);
    }
    CHECK(std::filesystem::file_size(dir / "prof.bin") == 3 * 4 * 4);
    write_file(dir / "prof.bin", "xx");
    CHECK_THROWS_AS(load_profile(dir / "prof"), ArtifactError);
}

TEST_CASE("toy: planted layer is selected") {
    const ToyBackend toy(testing::toy_config());
    const auto pool = load_dataset(testing::data_path("toy_probe.jsonl")).samples;
    const auto pairs = collect_probe_pairs(stratified_subset(pool, 100, 20250611), toy);
    const auto prof = compute_direction(pairs);
    CHECK(select_layer(prof, default_window(8)) == 5);
}
