#include "modsteer/engine_adapter.hpp"

#include <httplib.h>

#include "modsteer/error.hpp"

namespace modsteer {

namespace {

nlohmann::json request_json(const GenerationRequest & req) {
    nlohmann::json j;
    j["prompt"] = req.prompt_text;
    j["image"] = req.image_ref ? nlohmann::json(*req.image_ref) : nlohmann::json(nullptr);
    nlohmann::json d;
    d["strategy"] = req.decode.strategy == DecodeStrategy::Greedy ? "greedy" : "sampled";
    d["max_new_tokens"] = req.decode.max_new_tokens;
    d["seed"] = req.decode.seed ? nlohmann::json(*req.decode.seed) : nlohmann::json(nullptr);
    j["decode"] = d;
    return j;
}

GenerationResult result_from(const nlohmann::json & j) {
    GenerationResult r;
    r.text = j.at("text").get<std::string>();
    r.token_count = j.at("token_count").get<size_t>();
    return r;
}

IndexRange range_from(const nlohmann::json & j) {
    return {j.at(0).get<size_t>(), j.at(1).get<size_t>()};
}

} // namespace

AdapterConfig adapter_config_from_json(const nlohmann::json & j) {
    AdapterConfig c;
    try {
        c.engine_endpoint = j.at("engine_endpoint").get<std::string>();
        c.model_id = j.value("model_id", "");
        c.timeout_s = j.value("timeout_s", 120.0);
    } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("adapter config: ") + e.what());
    }
    if (c.engine_endpoint.empty()) throw ConfigError("adapter config: engine_endpoint is empty");
    if (!(c.timeout_s > 0.0)) throw ConfigError("adapter config: timeout_s must be positive");
    return c;
}

EngineAdapter::EngineAdapter(AdapterConfig cfg) : cfg_(std::move(cfg)) {
    const size_t scheme = cfg_.engine_endpoint.find("://");
    const size_t path_at = cfg_.engine_endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = cfg_.engine_endpoint.substr(0, path_at);
    base_path_ = path_at == std::string::npos ? "" : cfg_.engine_endpoint.substr(path_at);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

nlohmann::json EngineAdapter::post(const std::string & path, const nlohmann::json & body) const {
    httplib::Client cli(host_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    auto res = cli.Post(base_path_ + path, body.dump(), "application/json");
    if (!res) throw BackendError("engine " + cfg_.engine_endpoint + " unavailable: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw BackendError("engine " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error & e) {
        throw BackendError("engine " + path + " returned malformed JSON: " + e.what());
    }
}

nlohmann::json EngineAdapter::get(const std::string & path) const {
    httplib::Client cli(host_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    auto res = cli.Get(base_path_ + path);
    if (!res) throw BackendError("engine " + cfg_.engine_endpoint + " unavailable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendError("engine " + path + " returned HTTP " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error & e) {
        throw BackendError("engine " + path + " returned malformed JSON: " + e.what());
    }
}

BackendInfo EngineAdapter::info() const {
    std::lock_guard lock(info_mutex_);
    if (info_) return *info_;
    const auto j = get("/info");
    BackendInfo bi;
    try {
        bi.model_id = j.value("model_id", cfg_.model_id);
        bi.num_layers = j.at("num_layers").get<size_t>();
        bi.hidden_dim = j.at("hidden_dim").get<size_t>();
        bi.supports_injection = j.value("supports_injection", false);
        bi.supports_attention_capture = j.value("supports_attention_capture", false);
        bi.supports_choice_probabilities = j.value("supports_choice_probabilities", false);
        bi.max_parallel_sessions = j.value("max_parallel_sessions", size_t{1});
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /info malformed: ") + e.what());
    }
    if (!cfg_.model_id.empty() && bi.model_id != cfg_.model_id) {
        throw ConfigError("engine serves '" + bi.model_id + "', config expects '" + cfg_.model_id + "'");
    }
    if (bi.num_layers < 2 || bi.hidden_dim < 2) throw BackendError("engine reports fewer than 2 layers or dims");
    info_ = bi;
    return bi;
}

GenerationResult EngineAdapter::generate(const GenerationRequest & req) const {
    try {
        return result_from(post("/generate", request_json(req)));
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /generate malformed: ") + e.what());
    }
}

HiddenStateMatrix EngineAdapter::capture_hidden_states(const GenerationRequest & req) const {
    const BackendInfo bi = info();
    const auto j = post("/hidden_states", request_json(req));
    HiddenStateMatrix m(bi.model_id, bi.num_layers, bi.hidden_dim);
    try {
        const auto & rows = j.at("layers");
        if (rows.size() != bi.num_layers) throw BackendError("engine returned wrong number of layers");
        for (size_t l = 0; l < bi.num_layers; ++l) {
            if (rows[l].size() != bi.hidden_dim) throw BackendError("engine returned wrong hidden size");
            for (size_t c = 0; c < bi.hidden_dim; ++c) m.row(l)[c] = rows[l][c].get<double>();
        }
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /hidden_states malformed: ") + e.what());
    }
    if (!all_finite(m.data)) throw BackendError("engine returned non-finite hidden states");
    return m;
}

AttentionCapture EngineAdapter::capture_attention(const GenerationRequest & req, const SpanMap & spans) const {
    const BackendInfo bi = info();
    if (!bi.supports_attention_capture) {
        throw CapabilityError("backend '" + bi.model_id + "' does not support attention capture");
    }
    auto body = request_json(req);
    body["spans"] = {{"vision", {spans.vision.begin, spans.vision.end}},
                     {"text_context", {spans.text_context.begin, spans.text_context.end}},
                     {"input_length", spans.input_length}};
    const auto j = post("/attention", body);
    AttentionCapture cap;
    try {
        cap.num_steps = j.at("num_steps").get<size_t>();
        cap.num_layers = j.at("num_layers").get<size_t>();
        for (const auto & m : j.at("masses")) {
            cap.masses.push_back({m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>()});
        }
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /attention malformed: ") + e.what());
    }
    if (cap.masses.size() != cap.num_steps * cap.num_layers) throw BackendError("engine attention shape mismatch");
    return cap;
}

GenerationResult EngineAdapter::generate_with_steering(const GenerationRequest & req, const SteeringVector & vec,
                                                       const SteeringConfig & cfg) const {
    const uint32_t layer = check_steering(vec, cfg);
    auto body = request_json(req);
    Vector delta = vec.injected();
    for (auto & x : delta) x *= cfg.lambda;
    body["steering"] = {{"layer", layer}, {"vector", delta}, {"inject_prefill", cfg.inject_prefill}};
    try {
        return result_from(post("/generate", body));
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /generate malformed: ") + e.what());
    }
}

ChoiceProbabilities EngineAdapter::choice_probabilities(const GenerationRequest & req) const {
    const BackendInfo bi = info();
    if (!bi.supports_choice_probabilities) {
        throw CapabilityError("backend '" + bi.model_id + "' does not expose answer-choice probabilities");
    }
    const auto j = post("/choice_probabilities", request_json(req));
    try {
        return {j.at("a").get<double>(), j.at("b").get<double>()};
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /choice_probabilities malformed: ") + e.what());
    }
}

SpanMap EngineAdapter::locate_spans(const GenerationRequest & req, std::string_view text_context) const {
    auto body = request_json(req);
    body["text_context"] = std::string(text_context);
    const auto j = post("/spans", body);
    try {
        SpanMap m;
        m.vision = range_from(j.at("vision"));
        m.text_context = range_from(j.at("text_context"));
        m.input_length = j.at("input_length").get<size_t>();
        return m;
    } catch (const nlohmann::json::exception & e) {
        throw BackendError(std::string("engine /spans malformed: ") + e.what());
    }
}

} // namespace modsteer
