#include "modsteer/backend.hpp"

#include <cmath>

#include "modsteer/error.hpp"

namespace modsteer {

std::string_view to_string(Modality m) {
    return m == Modality::Text ? "text" : "vision";
}

std::optional<Modality> parse_modality(std::string_view s) {
    if (s == "text") return Modality::Text;
    if (s == "vision") return Modality::Vision;
    return std::nullopt;
}

Vector SteeringVector::injected() const {
    Vector out(direction.size());
    const double scale = sign() * static_cast<double>(weight);
    for (size_t i = 0; i < direction.size(); ++i) {
        out[i] = scale * static_cast<double>(direction[i]);
    }
    return out;
}

GenerationRequest make_request(const ChoicePrompt & p, const DecodeOptions & decode) {
    GenerationRequest r;
    r.prompt_text = p.rendered_text;
    r.image_ref = p.image_ref;
    r.decode = decode;
    return r;
}

AttentionCapture Backend::capture_attention(const GenerationRequest &, const SpanMap &) const {
    throw CapabilityError("backend '" + info().model_id + "' does not support attention capture");
}

GenerationResult Backend::generate_with_steering(const GenerationRequest &, const SteeringVector &,
                                                 const SteeringConfig &) const {
    throw CapabilityError("backend '" + info().model_id + "' does not support residual injection");
}

ChoiceProbabilities Backend::choice_probabilities(const GenerationRequest &) const {
    throw CapabilityError("backend '" + info().model_id + "' does not expose answer-choice probabilities");
}

SpanMap Backend::locate_spans(const GenerationRequest &, std::string_view) const {
    throw CapabilityError("backend '" + info().model_id + "' cannot locate token spans");
}

uint32_t Backend::check_steering(const SteeringVector & vec, const SteeringConfig & cfg) const {
    const BackendInfo bi = info();
    if (!bi.supports_injection) {
        throw CapabilityError("backend '" + bi.model_id + "' does not support residual injection");
    }
    if (vec.dim() != bi.hidden_dim) {
        throw ValidationError("steering vector dimension " + std::to_string(vec.dim()) +
                              " does not match hidden size " + std::to_string(bi.hidden_dim));
    }
    if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0) {
        throw ValidationError("steering lambda must be finite and >= 0");
    }
    const uint32_t layer = cfg.layer_override.value_or(vec.layer);
    if (layer >= bi.num_layers) {
        throw ValidationError("steering layer " + std::to_string(layer) + " out of range [0, " +
                              std::to_string(bi.num_layers) + ")");
    }
    return layer;
}

} // namespace modsteer
