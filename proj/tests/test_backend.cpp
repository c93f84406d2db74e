#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stub_backend.hpp"
#include "support.hpp"

#include "modsteer/engine_adapter.hpp"
#include "modsteer/error.hpp"
#include "modsteer/eval.hpp"

using namespace modsteer;

namespace {

GenerationRequest fixture_request(size_t i = 0, Ordering o = Ordering::VisionFirst) {
    return make_request(render_choice_prompt(testing::fixture()[i], o));
}

SteeringVector unit_vector(const ToyBackend & toy, uint32_t layer, float weight) {
    SteeringVector v;
    v.model_id = toy.info().model_id;
    v.layer = layer;
    v.weight = weight;
    v.direction.assign(toy.info().hidden_dim, 0.0f);
    for (size_t c = 0; c < v.direction.size(); ++c) v.direction[c] = static_cast<float>(toy.planted_direction()[c]);
    return v;
}

} // namespace

TEST_CASE("toy info") {
    const ToyBackend toy;
    const auto bi = toy.info();
    CHECK(bi.num_layers == 8);
    CHECK(bi.hidden_dim == 32);
    CHECK(bi.supports_injection);
    CHECK(bi.supports_attention_capture);
    CHECK(bi.supports_choice_probabilities);
}

TEST_CASE("greedy generation is deterministic and respects max_new_tokens") {
    const ToyBackend toy(testing::toy_config());
    auto req = fixture_request();
    CHECK(toy.generate(req) == toy.generate(req));
    req.decode.max_new_tokens = 1;
    CHECK(toy.generate(req).token_count == 1);
}

TEST_CASE("sampled decoding needs a seed and is reproducible with one") {
    const ToyBackend toy(testing::toy_config());
    auto req = fixture_request();
    req.decode.strategy = DecodeStrategy::Sampled;
    CHECK_THROWS_AS(toy.generate(req), ValidationError);
    req.decode.seed = 99;
    CHECK(toy.generate(req) == toy.generate(req));
}

TEST_CASE("golden generations on the fixture") {
    const ToyBackend toy(testing::toy_config());
    std::string out;
    for (const auto & s : testing::fixture()) {
        const auto [p1, p2] = render_choice_prompts(s, PromptMode::Neutral);
        out += s.id + "\t" + toy.generate(make_request(p1)).text + "\t" + toy.generate(make_request(p2)).text + "\n";
    }
    testing::check_golden("toy_generate.tsv", out);
}

TEST_CASE("hidden states: shape, determinism, sensitivity to the last token") {
    const ToyBackend toy(testing::toy_config());
    const auto req = fixture_request();
    const auto m = toy.capture_hidden_states(req);
    CHECK(m.num_layers == 8);
    CHECK(m.dim == 32);
    CHECK(m.data.size() == 8 * 32);
    CHECK(all_finite(m.data));
    CHECK(toy.capture_hidden_states(req) == m);

    auto other = req;
    other.prompt_text += " A";
    const auto m2 = toy.capture_hidden_states(other);
    bool differs = false;
    for (size_t l = 0; l < 8; ++l) {
        for (size_t c = 0; c < 32; ++c) differs = differs || m.row(l)[c] != m2.row(l)[c];
    }
    CHECK(differs);

    GenerationRequest empty;
    CHECK_THROWS_AS(toy.capture_hidden_states(empty), ValidationError);
    GenerationRequest image_last;
    image_last.prompt_text = "<image>";
    image_last.image_ref = "images/x.jpg";
    CHECK_THROWS_AS(toy.capture_hidden_states(image_last), ValidationError);
}

TEST_CASE("image_ref must be readable") {
    const ToyBackend toy;
    auto req = fixture_request();
    req.image_ref = "";
    CHECK_THROWS_AS(toy.generate(req), BackendError);
}

TEST_CASE("span location") {
    const ToyBackend toy;
    const auto s = testing::fixture()[0];
    const auto req = fixture_request();
    const auto spans = toy.locate_spans(req, s.text_context);
    CHECK(spans.vision.size() == toy.config().image_patches);
    CHECK(spans.text_context.size() > 0);
    CHECK(spans.vision.end <= spans.text_context.begin);
    CHECK(spans.input_length == toy.tokenize(req).size());
}

TEST_CASE("attention masses under uniform attention follow span sizes") {
    ToyConfig cfg = testing::toy_config();
    cfg.uniform_attention = true;
    const ToyBackend toy(cfg);
    const auto s = testing::fixture()[3];
    const auto req = fixture_request(3);
    const auto spans = toy.locate_spans(req, s.text_context);
    const auto cap = toy.capture_attention(req, spans);
    REQUIRE(cap.num_steps >= 1);
    const double expected = static_cast<double>(spans.vision.size()) / static_cast<double>(spans.text_context.size());
    for (size_t st = 0; st < cap.num_steps; ++st) {
        for (size_t l = 0; l < cap.num_layers; ++l) {
            const auto & m = cap.at(st, l);
            CHECK(m.vision / m.text == doctest::Approx(expected).epsilon(1e-9));
        }
    }
}

TEST_CASE("attention masses sum to one") {
    const ToyBackend toy(testing::toy_config());
    for (size_t i : {0u, 5u, 11u}) {
        const auto s = testing::fixture()[i];
        const auto req = fixture_request(i);
        const auto cap = toy.capture_attention(req, toy.locate_spans(req, s.text_context));
        for (const auto & m : cap.masses) CHECK(std::abs(m.vision + m.text + m.other - 1.0) <= 1e-5);
    }
}

TEST_CASE("vision-salient toy attends more to the image at every layer") {
    ToyConfig cfg = testing::toy_config();
    cfg.vision_attention_bias = 4.0;
    const ToyBackend toy(cfg);
    for (size_t i = 0; i < 16; i += 3) {
        const auto s = testing::fixture()[i];
        const auto req = fixture_request(i);
        const auto cap = toy.capture_attention(req, toy.locate_spans(req, s.text_context));
        for (const auto & m : cap.masses) CHECK(m.vision > m.text);
    }
}

TEST_CASE("capability errors from a backend without the optional calls") {
    const auto stub = testing::always("A");
    const auto req = fixture_request();
    CHECK_THROWS_AS(stub.capture_attention(req, {}), CapabilityError);
    CHECK_THROWS_AS(stub.choice_probabilities(req), CapabilityError);
    CHECK_THROWS_AS(stub.generate_with_steering(req, SteeringVector{}, {}), CapabilityError);
}

TEST_CASE("injection is exactly additive at the chosen layer") {
    const ToyBackend toy(testing::toy_config());
    const auto req = fixture_request(2);
    ToyBackend::Injection inj;
    inj.layer = 5;
    inj.delta.resize(32);
    for (size_t c = 0; c < 32; ++c) inj.delta[c] = 0.37 * toy.planted_direction()[c] + 0.01 * static_cast<double>(c);
    const auto t = toy.trace(req, inj);
    REQUIRE(t.pre_injection.size() == 8);
    for (size_t pos = 0; pos < t.pre_injection[5].size(); ++pos) {
        for (size_t c = 0; c < 32; ++c) CHECK(t.post_injection[5][pos][c] == t.pre_injection[5][pos][c] + inj.delta[c]);
    }
    for (size_t l = 0; l < 8; ++l) {
        if (l != 5) CHECK(t.post_injection[l] == t.pre_injection[l]);
    }
}

TEST_CASE("realized perturbation norm is lambda * w * |u|") {
    const ToyBackend toy(testing::toy_config());
    const auto vec = unit_vector(toy, 5, 2.5f);
    const double lambda = 0.8;
    Vector delta = vec.injected();
    for (auto & x : delta) x *= lambda;
    const auto req = fixture_request(1);
    const auto t = toy.trace(req, ToyBackend::Injection{5, delta, true});
    const auto & pre = t.pre_injection[5].back();
    const auto & post = t.post_injection[5].back();
    Vector diff(32);
    for (size_t c = 0; c < 32; ++c) diff[c] = post[c] - pre[c];
    double unorm = 0.0;
    for (float f : vec.direction) unorm += static_cast<double>(f) * f;
    CHECK(std::abs(l2_norm(diff) - lambda * 2.5 * std::sqrt(unorm)) <= 1e-6);
}

TEST_CASE("lambda zero steering is bit-identical to plain generation") {
    const ToyBackend toy(testing::toy_config());
    const auto vec = unit_vector(toy, 5, 3.0f);
    SteeringConfig cfg;
    cfg.lambda = 0.0;
    for (size_t i = 0; i < 16; ++i) {
        const auto req = fixture_request(i, i % 2 ? Ordering::TextFirst : Ordering::VisionFirst);
        CHECK(toy.generate_with_steering(req, vec, cfg) == toy.generate(req));
    }
}

TEST_CASE("steering precondition errors") {
    const ToyBackend toy(testing::toy_config());
    const auto req = fixture_request();
    auto vec = unit_vector(toy, 5, 1.0f);
    SteeringConfig cfg;
    auto bad_dim = vec;
    bad_dim.direction.resize(31);
    CHECK_THROWS_AS(toy.generate_with_steering(req, bad_dim, cfg), ValidationError);
    auto bad_layer = vec;
    bad_layer.layer = 8;
    CHECK_THROWS_AS(toy.generate_with_steering(req, bad_layer, cfg), ValidationError);
    cfg.layer_override = 9;
    CHECK_THROWS_AS(toy.generate_with_steering(req, vec, cfg), ValidationError);
    cfg.layer_override.reset();
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(toy.generate_with_steering(req, vec, cfg), ValidationError);
}

TEST_CASE("steering along the planted direction flips a vision answer to text") {
    const auto samples = testing::fixture();
    const ToyBackend toy(testing::toy_config());
    const auto vec = unit_vector(toy, 5, 8.0f);
    size_t flipped = 0, vision_before = 0;
    for (const auto & s : samples) {
        const auto [p1, p2] = render_choice_prompts(s, PromptMode::Neutral);
        const auto base = categorize(s, make_response(s, p1, toy.generate(make_request(p1)).text),
                                     make_response(s, p2, toy.generate(make_request(p2)).text));
        if (base.category != Category::Vision) continue;
        ++vision_before;
        const auto st = categorize(s, make_response(s, p1, toy.generate_with_steering(make_request(p1), vec, {}).text),
                                   make_response(s, p2, toy.generate_with_steering(make_request(p2), vec, {}).text));
        flipped += st.category == Category::Text;
    }
    CHECK(vision_before > 0);
    CHECK(flipped == vision_before);
}

TEST_CASE("choice probabilities are a sub-distribution") {
    const ToyBackend toy(testing::toy_config());
    const auto p = toy.choice_probabilities(fixture_request());
    CHECK(p.a >= 0.0);
    CHECK(p.b >= 0.0);
    CHECK(p.a + p.b <= 1.0 + 1e-12);
}

TEST_CASE("adapter against a mock engine") {
    httplib::Server srv;
    std::atomic<int> info_calls{0};
    nlohmann::json last_generate;
    std::mutex mu;
    srv.Get("/info", [&](const httplib::Request &, httplib::Response & res) {
        ++info_calls;
        res.set_content(R"({"model_id":"mock-7b","num_layers":3,"hidden_dim":2,"supports_injection":true,)"
                        R"("supports_attention_capture":false,"supports_choice_probabilities":true})",
                        "application/json");
    });
    srv.Post("/generate", [&](const httplib::Request & req, httplib::Response & res) {
        std::lock_guard lock(mu);
        last_generate = nlohmann::json::parse(req.body);
        res.set_content(R"({"text":"B. wood","token_count":3})", "application/json");
    });
    srv.Post("/hidden_states", [&](const httplib::Request &, httplib::Response & res) {
        res.set_content(R"({"layers":[[1,2],[3,4],[5,6]]})", "application/json");
    });
    srv.Post("/choice_probabilities", [&](const httplib::Request &, httplib::Response & res) {
        res.set_content(R"({"a":0.25,"b":0.5})", "application/json");
    });
    srv.Post("/spans", [&](const httplib::Request &, httplib::Response & res) {
        res.status = 500;
        res.set_content("kaput", "text/plain");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    AdapterConfig cfg;
    cfg.engine_endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.timeout_s = 5;
    const EngineAdapter a(cfg);

    const auto bi = a.info();
    CHECK(bi.model_id == "mock-7b");
    CHECK(bi.num_layers == 3);
    a.info();
    CHECK(info_calls == 1);

    auto req = fixture_request();
    CHECK(a.generate(req).text == "B. wood");
    CHECK(last_generate.at("prompt") == req.prompt_text);
    CHECK(last_generate.at("decode").at("strategy") == "greedy");

    const auto m = a.capture_hidden_states(req);
    CHECK(m.row(2)[1] == 6.0);

    SteeringVector v;
    v.layer = 1;
    v.direction = {1.0f, -2.0f};
    v.weight = 2.0f;
    v.target = Modality::Vision;
    SteeringConfig sc;
    sc.lambda = 0.5;
    a.generate_with_steering(req, v, sc);
    {
        std::lock_guard lock(mu);
        CHECK(last_generate.at("steering").at("layer") == 1);
        CHECK(last_generate.at("steering").at("vector")[0].get<double>() == doctest::Approx(-1.0));
        CHECK(last_generate.at("steering").at("vector")[1].get<double>() == doctest::Approx(2.0));
        CHECK(last_generate.at("steering").at("inject_prefill") == true);
    }

    CHECK(a.choice_probabilities(req).b == 0.5);
    CHECK_THROWS_AS(a.capture_attention(req, {}), CapabilityError);
    CHECK_THROWS_AS(a.locate_spans(req, "x"), BackendError);

    AdapterConfig wrong = cfg;
    wrong.model_id = "other";
    CHECK_THROWS_AS(EngineAdapter(wrong).info(), ConfigError);

    srv.stop();
    th.join();

    AdapterConfig dead = cfg;
    dead.timeout_s = 1;
    CHECK_THROWS_AS(EngineAdapter(dead).generate(req), BackendError);
}

TEST_CASE("adapter config validation") {
    CHECK_THROWS_AS(adapter_config_from_json(nlohmann::json::object()), ConfigError);
    CHECK_THROWS_AS(adapter_config_from_json({{"engine_endpoint", "http://x"}, {"timeout_s", 0}}), ConfigError);
    CHECK(adapter_config_from_json({{"engine_endpoint", "http://x"}}).timeout_s == 120.0);
}

TEST_CASE("real engine (set MODSTEER_ENGINE_ENDPOINT to run)") {
    const char * ep = std::getenv("MODSTEER_ENGINE_ENDPOINT");
    if (!ep || !*ep) {
        MESSAGE("MODSTEER_ENGINE_ENDPOINT not set; real-engine check skipped");
        return;
    }
    AdapterConfig cfg;
    cfg.engine_endpoint = ep;
    const EngineAdapter a(cfg);
    const auto bi = a.info();
    CHECK(bi.num_layers >= 2);
    const auto samples = testing::fixture();
    const auto req = make_request(render_choice_prompt(samples[0], Ordering::VisionFirst));
    CHECK(a.generate(req) == a.generate(req));
    const auto m = a.capture_hidden_states(req);
    CHECK(m.num_layers == bi.num_layers);
    const auto run = evaluate(samples, a);
    CHECK(run.scores.overall.n == samples.size());
}
