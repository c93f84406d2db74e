#pragma once

#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "modsteer/backend.hpp"

namespace modsteer {

struct AdapterConfig {
    std::string engine_endpoint; // e.g. http://127.0.0.1:8080
    std::string model_id;
    double timeout_s = 120.0;
};

AdapterConfig adapter_config_from_json(const nlohmann::json & j);

// Thin JSON-over-HTTP shim to an inference engine that exposes
//   GET  /info
//   POST /generate, /hidden_states, /attention, /choice_probabilities, /spans
// Capability flags come from /info and gate every optional call.
class EngineAdapter : public Backend {
public:
    explicit EngineAdapter(AdapterConfig cfg);

    BackendInfo info() const override;
    GenerationResult generate(const GenerationRequest & req) const override;
    HiddenStateMatrix capture_hidden_states(const GenerationRequest & req) const override;
    AttentionCapture capture_attention(const GenerationRequest & req, const SpanMap & spans) const override;
    GenerationResult generate_with_steering(const GenerationRequest & req, const SteeringVector & vec,
                                            const SteeringConfig & cfg) const override;
    ChoiceProbabilities choice_probabilities(const GenerationRequest & req) const override;
    SpanMap locate_spans(const GenerationRequest & req, std::string_view text_context) const override;

    const AdapterConfig & config() const { return cfg_; }

private:
    nlohmann::json post(const std::string & path, const nlohmann::json & body) const;
    nlohmann::json get(const std::string & path) const;

    AdapterConfig cfg_;
    std::string host_;
    std::string base_path_;
    mutable std::mutex info_mutex_;
    mutable std::optional<BackendInfo> info_;
};

} // namespace modsteer
