#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modsteer/backend.hpp"

namespace modsteer {

// Deterministic multi-modal toy transformer used for desk-scale verification.
//
// Architecture: token + sinusoidal position embeddings, `num_layers` pre-LN blocks
// (multi-head causal attention, GELU MLP), no final norm, linear unembedding.
// All weights come from `seed`. Images are symbolic: `image_patches` patch tokens
// derived from hashing the image_ref, spliced in at the "<image>" placeholder.
//
// Planted structure:
//  - The words "text" and "vision" carry a +/- cue along a reserved embedding
//    direction q that no block ever writes to.
//  - After block `planted_layer` every position receives
//    cue_gain * (running sum of cues up to that position) * p, where p is a fixed
//    unit vector. Blocks after `planted_layer` write orthogonally to p, so the
//    final projection <h_last, p> equals the one right after the planted layer.
//  - The answer head reads the option lines and the text-context segment of the
//    prompt and the scene registered for the image, and scores each option letter
//    by its grounding. The text-vs-vision trade-off is gated by
//    sigmoid(gate_sharpness * (<h_last, p> - gate_offset)), so the answer margin is a
//    monotone function of the projection on p.
//  - Word-token unembedding rows come in +/- pairs of random vectors, so word logits
//    grow with the residual norm equally for any injection sign; an oversized
//    injection makes one word token win every step (degenerate output).
struct ToyConfig {
    uint64_t seed = 20250611;
    std::string model_id = "toy-mm-l8-d32";
    size_t num_layers = 8;
    size_t hidden_dim = 32;
    size_t num_heads = 4;
    size_t mlp_dim = 64;
    size_t planted_layer = 5;
    size_t image_patches = 16;

    double embed_scale = 1.0;
    double cue_strength = 1.0;
    double cue_gain = 2.0;
    double gate_offset = 1.75;
    double gate_sharpness = 1.0;
    double letter_prior = 2.0;
    double evidence_gain = 4.0;
    double preference_gain = 4.0;
    double grammar_gain = 8.0;
    double unembed_scale = 0.1;
    // Multiplies the attention and MLP outputs of every block after `planted_layer`.
    double late_block_scale = 2.0;

    // Zero attention logits everywhere: every query attends uniformly to its prefix.
    bool uniform_attention = false;
    // Added to the attention logit of every image-patch key.
    double vision_attention_bias = 0.0;

    // image_ref -> scene description; the words an image "shows".
    std::map<std::string, std::string> scenes;
    size_t max_parallel_sessions = 8;
};

// Registers answer_vision as the scene of each sample's image (a perfect vision encoder).
void add_oracle_scenes(ToyConfig & cfg, const std::vector<ConflictSample> & samples);

class ToyBackend : public Backend {
public:
    static constexpr size_t kVocabSize = 64;
    static constexpr int kEos = 0;
    static constexpr int kLetterA = 1;
    static constexpr int kLetterB = 2;
    static constexpr int kPeriod = 3;
    static constexpr int kTextWord = 4;
    static constexpr int kVisionWord = 5;
    static constexpr int kFirstPatch = 6;
    static constexpr int kNumPatchIds = 10;
    static constexpr int kFirstWord = 16;

    struct Token {
        int id = 0;
        size_t char_begin = 0;
        size_t char_end = 0;
        bool is_patch = false;
    };

    // A fully scaled vector added after block `layer`.
    struct Injection {
        uint32_t layer = 0;
        Vector delta;
        bool prefill = true;
    };

    // Per-layer, per-position residual states of one prompt pass.
    struct Trace {
        std::vector<std::vector<Vector>> pre_injection;  // [layer][position]
        std::vector<std::vector<Vector>> post_injection; // [layer][position]
    };

    explicit ToyBackend(ToyConfig cfg = {});

    BackendInfo info() const override;
    GenerationResult generate(const GenerationRequest & req) const override;
    HiddenStateMatrix capture_hidden_states(const GenerationRequest & req) const override;
    AttentionCapture capture_attention(const GenerationRequest & req, const SpanMap & spans) const override;
    GenerationResult generate_with_steering(const GenerationRequest & req, const SteeringVector & vec,
                                            const SteeringConfig & cfg) const override;
    ChoiceProbabilities choice_probabilities(const GenerationRequest & req) const override;
    SpanMap locate_spans(const GenerationRequest & req, std::string_view text_context) const override;

    const ToyConfig & config() const { return cfg_; }
    const Vector & planted_direction() const { return planted_; }

    std::vector<Token> tokenize(const GenerationRequest & req) const;
    static std::string token_text(int id);

    // Introspection for tests.
    Trace trace(const GenerationRequest & req, const std::optional<Injection> & inj = std::nullopt) const;
    std::vector<double> first_step_logits(const GenerationRequest & req,
                                          const std::optional<Injection> & inj = std::nullopt) const;
    GenerationResult generate_injected(const GenerationRequest & req, const std::optional<Injection> & inj) const;

private:
    struct Layer {
        std::vector<double> wq, wk, wv, wo; // d x d, row-major (out x in)
        std::vector<double> w1, b1;         // mlp x d, mlp
        std::vector<double> w2;             // d x mlp
    };
    struct Grounding;
    struct Session;

    Grounding ground(const GenerationRequest & req) const;
    void step(Session & s, int token_id, bool is_patch, bool generated) const;
    std::vector<double> logits(const Session & s, const Grounding & g, int prev_generated) const;
    GenerationResult run(const GenerationRequest & req, const std::optional<Injection> & inj,
                         const SpanMap * spans, AttentionCapture * capture) const;

    ToyConfig cfg_;
    std::vector<double> embed_;   // vocab x d
    std::vector<double> unembed_; // vocab x d
    std::vector<Layer> layers_;
    Vector planted_; // p
    Vector cue_dir_; // q
};

} // namespace modsteer
