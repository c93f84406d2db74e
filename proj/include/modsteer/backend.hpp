#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modsteer/dataset.hpp"
#include "modsteer/steering_vector.hpp"
#include "modsteer/vec.hpp"

namespace modsteer {

struct BackendInfo {
    std::string model_id;
    size_t num_layers = 0;
    size_t hidden_dim = 0;
    bool supports_injection = false;
    bool supports_attention_capture = false;
    bool supports_choice_probabilities = false;
    size_t max_parallel_sessions = 1;
};

enum class DecodeStrategy { Greedy, Sampled };

struct DecodeOptions {
    DecodeStrategy strategy = DecodeStrategy::Greedy;
    size_t max_new_tokens = 16;
    std::optional<uint64_t> seed;
};

struct GenerationRequest {
    std::string prompt_text;
    std::optional<std::string> image_ref;
    DecodeOptions decode;
};

GenerationRequest make_request(const ChoicePrompt & p, const DecodeOptions & decode = {});

struct GenerationResult {
    std::string text;
    size_t token_count = 0;

    bool operator==(const GenerationResult &) const = default;
};

// Last-input-token residual stream after each block, one row per layer.
struct HiddenStateMatrix {
    std::string model_id;
    size_t num_layers = 0;
    size_t dim = 0;
    std::vector<double> data;

    HiddenStateMatrix() = default;
    HiddenStateMatrix(std::string model, size_t layers, size_t d)
        : model_id(std::move(model)), num_layers(layers), dim(d), data(layers * d, 0.0) {}

    std::span<const double> row(size_t layer) const { return {data.data() + layer * dim, dim}; }
    std::span<double> row(size_t layer) { return {data.data() + layer * dim, dim}; }

    bool operator==(const HiddenStateMatrix &) const = default;
};

// Half-open token index range.
struct IndexRange {
    size_t begin = 0;
    size_t end = 0;

    size_t size() const { return end > begin ? end - begin : 0; }
    bool contains(size_t i) const { return i >= begin && i < end; }
    bool operator==(const IndexRange &) const = default;
};

// Vision and text-context spans of a tokenized input; every other position
// (instructions, question, options, generated tokens) counts as "other".
struct SpanMap {
    IndexRange vision;
    IndexRange text_context;
    size_t input_length = 0;
};

struct SpanMasses {
    double vision = 0.0;
    double text = 0.0;
    double other = 0.0;
};

struct AttentionCapture {
    size_t num_steps = 0;
    size_t num_layers = 0;
    // step-major: masses[step * num_layers + layer]
    std::vector<SpanMasses> masses;

    const SpanMasses & at(size_t step, size_t layer) const { return masses[step * num_layers + layer]; }
};

// Probabilities of the "A" and "B" answer tokens at the first generated position.
struct ChoiceProbabilities {
    double a = 0.0;
    double b = 0.0;
};

// Narrow contract to an inference engine. Implementations must be safe to call
// concurrently up to BackendInfo::max_parallel_sessions.
class Backend {
public:
    virtual ~Backend() = default;

    virtual BackendInfo info() const = 0;
    virtual GenerationResult generate(const GenerationRequest & req) const = 0;
    virtual HiddenStateMatrix capture_hidden_states(const GenerationRequest & req) const = 0;
    virtual AttentionCapture capture_attention(const GenerationRequest & req, const SpanMap & spans) const;
    virtual GenerationResult generate_with_steering(const GenerationRequest & req, const SteeringVector & vec,
                                                    const SteeringConfig & cfg) const;
    virtual ChoiceProbabilities choice_probabilities(const GenerationRequest & req) const;
    // Locates the image block and the given text-context substring in the tokenized prompt.
    virtual SpanMap locate_spans(const GenerationRequest & req, std::string_view text_context) const;

protected:
    // Shared precondition checks for generate_with_steering; returns the layer to inject at.
    uint32_t check_steering(const SteeringVector & vec, const SteeringConfig & cfg) const;
};

} // namespace modsteer
