#include <random>

#include "support.hpp"

#include "modsteer/error.hpp"
#include "modsteer/steer.hpp"

using namespace modsteer;

namespace {

struct Probed {
    std::vector<ProbePair> pairs;
    DirectionProfile profile;
};

const Probed & toy_probe() {
    static const Probed p = [] {
        const ToyBackend toy(testing::toy_config());
        const auto pool = load_dataset(testing::data_path("toy_probe.jsonl")).samples;
        Probed r;
        r.pairs = collect_probe_pairs(stratified_subset(pool, 100, 20250611), toy);
        r.profile = compute_direction(r.pairs);
        r.profile.created_at = "2025-01-01T00:00:00Z";
        return r;
    }();
    return p;
}

} // namespace

TEST_CASE("weight examples") {
    CHECK(compute_weight({{4.0, 0.0}}, Vector{0.0, 2.0}) == 2.0);
    CHECK(compute_weight({{3.0, 4.0}, {0.0, 5.0}}, Vector{5.0, 0.0}) == 1.0);
    try {
        compute_weight({{1.0, 1.0}}, Vector{0.0, 0.0});
        FAIL("expected an error");
    } catch (const ValidationError & e) {
        CHECK(std::string(e.what()).find("degenerate direction") != std::string::npos);
    }
    CHECK_THROWS_AS(compute_weight({}, Vector{1.0}), ValidationError);
    CHECK_THROWS_AS(compute_weight({{1.0}}, Vector{1.0, 0.0}), ValidationError);
}

TEST_CASE("vector sign and antisymmetry") {
    const auto & pr = toy_probe();
    const auto t = build_steering_vector(pr.profile, pr.pairs, Modality::Text);
    const auto v = build_steering_vector(pr.profile, pr.pairs, Modality::Vision);
    CHECK(t.layer == 5);
    CHECK(t.weight == v.weight);
    const auto ti = t.injected(), vi = v.injected();
    for (size_t c = 0; c < ti.size(); ++c) {
        CHECK(vi[c] == -ti[c]);
        CHECK(ti[c] == static_cast<double>(t.weight) * static_cast<double>(t.direction[c]));
    }
    // the weight uses the text states of the injection layer
    const auto w = compute_weight(text_states_at(pr.pairs, 6), pr.profile.u[6]);
    CHECK(build_steering_vector(pr.profile, pr.pairs, Modality::Text, 6u).weight == static_cast<float>(w));
}

TEST_CASE("artifact encode/decode") {
    const auto & pr = toy_probe();
    auto v = build_steering_vector(pr.profile, pr.pairs, Modality::Vision);
    v.created_at = "2025-01-01T00:00:00Z";
    const auto bytes = encode_steering_vector(v);
    CHECK(bytes.substr(0, 4) == "MSV1");
    CHECK(decode_steering_vector(bytes) == v);
    testing::check_golden("toy_vector_vision.msv", bytes);

    CHECK_THROWS_AS(decode_steering_vector("MSV2" + bytes.substr(4)), ArtifactError);
    CHECK_THROWS_AS(decode_steering_vector(bytes.substr(0, bytes.size() - 3)), ArtifactError);
    CHECK_THROWS_AS(decode_steering_vector(bytes + "x"), ArtifactError);
    auto bad_sign = bytes;
    bad_sign[16] = 0x02;
    CHECK_THROWS_AS(decode_steering_vector(bad_sign), ArtifactError);

    const auto dir = testing::scratch_dir("vector");
    save_steering_vector(dir / "v.msv", v);
    CHECK(load_steering_vector(dir / "v.msv") == v);
}

TEST_CASE("repeated-run detector") {
    CHECK(has_repeated_run("w1 w1 w1 w1 w1 w1 w1 w1"));
    CHECK_FALSE(has_repeated_run("w1 w1 w1 w1 w1 w1 w1 w2"));
    CHECK(has_repeated_run("A. x x x x x x x x x", 8));
    CHECK_FALSE(has_repeated_run("B."));
    CHECK(has_repeated_run("a a a", 3));
}

TEST_CASE("steered evaluation on the toy") {
    const ToyBackend toy(testing::toy_config());
    const auto samples = testing::fixture();
    const auto & pr = toy_probe();
    const auto base = evaluate(samples, toy);
    SUBCASE("lambda zero reproduces the baseline") {
        SteeringConfig c;
        c.lambda = 0.0;
        const auto r = steer_and_evaluate(samples, toy, build_steering_vector(pr.profile, pr.pairs, Modality::Text), c);
        CHECK(r.run.scores == base.scores);
        for (size_t i = 0; i < base.responses.size(); ++i) CHECK(r.run.responses[i].raw_text == base.responses[i].raw_text);
    }
    SUBCASE("text target") {
        const auto r = steer_and_evaluate(samples, toy, build_steering_vector(pr.profile, pr.pairs, Modality::Text), {});
        CHECK(r.run.scores.overall.s_text >= 0.9);
        CHECK(r.layer == 5);
        CHECK_FALSE(r.degenerate);
    }
    SUBCASE("vision target") {
        const auto r =
            steer_and_evaluate(samples, toy, build_steering_vector(pr.profile, pr.pairs, Modality::Vision), {});
        CHECK(r.run.scores.overall.s_vision >= 0.9);
    }
    SUBCASE("lambda ten over-steers into repetition") {
        SteeringConfig c;
        c.lambda = 10.0;
        const auto r = steer_and_evaluate(samples, toy, build_steering_vector(pr.profile, pr.pairs, Modality::Text), c);
        CHECK(r.degenerate);
        CHECK(has_repeated_run(r.run.responses[0].raw_text));
    }
    SUBCASE("prefill-free injection still steers") {
        SteeringConfig c;
        c.inject_prefill = false;
        const auto r = steer_and_evaluate(samples, toy, build_steering_vector(pr.profile, pr.pairs, Modality::Text), c);
        CHECK(r.config.inject_prefill == false);
    }
}

TEST_CASE("intensity sweep") {
    const ToyBackend toy(testing::toy_config());
    const auto samples = testing::fixture();
    const auto & pr = toy_probe();
    const auto v = build_steering_vector(pr.profile, pr.pairs, Modality::Text);
    SUBCASE("single zero row equals the baseline") {
        const auto rows = sweep_intensity(samples, toy, v, {0.0});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].scores == evaluate(samples, toy).scores);
    }
    SUBCASE("duplicate lambdas give identical rows") {
        const auto rows = sweep_intensity(samples, toy, v, {0.5, 0.5});
        CHECK(rows[0].scores == rows[1].scores);
    }
    SUBCASE("rise then collapse") {
        const auto rows = sweep_intensity(samples, toy, v, {0.25, 1.0, 4.0});
        CHECK(is_inverted_u({rows[0].score, rows[1].score, rows[2].score}));
        CHECK(rows[2].degenerate);
    }
    SUBCASE("bad lambda lists") {
        CHECK_THROWS_AS(sweep_intensity(samples, toy, v, {}), ValidationError);
        CHECK_THROWS_AS(sweep_intensity(samples, toy, v, {1.0, 0.5}), ValidationError);
    }
}

TEST_CASE("inverted-U shape predicate") {
    CHECK(is_inverted_u({0.2, 0.5, 0.9, 0.4, 0.1}));
    CHECK(is_inverted_u({1, 1, 1, 0.5, 0}));
    CHECK(is_inverted_u({0.9, 0.1}));
    CHECK_FALSE(is_inverted_u({0.1, 0.5, 0.9}));
    CHECK_FALSE(is_inverted_u({0.1, 0.9, 0.5, 0.5}));
    CHECK_FALSE(is_inverted_u({0.5, 0.2, 0.6, 0.1}));
    CHECK_FALSE(is_inverted_u({0.5}));
}
