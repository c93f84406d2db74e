#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "modsteer/backend.hpp"
#include "modsteer/eval.hpp"
#include "modsteer/probe.hpp"
#include "modsteer/steering_vector.hpp"

namespace modsteer {

// mean_i ||x_i|| / ||u||. Throws ValidationError on a zero direction.
double compute_weight(const std::vector<Vector> & x_text_states, std::span<const double> u);

// Direction u[layer] from the profile, layer defaulting to select_layer(profile, window),
// weight from the text states of that same layer.
SteeringVector build_steering_vector(const DirectionProfile & profile, const std::vector<ProbePair> & pairs,
                                     Modality target, std::optional<uint32_t> layer = std::nullopt,
                                     const LayerWindow * window = nullptr);

// Binary artifact: "MSV1", u32 layer, u32 dim, f32 weight, u8 sign, dim x f32, u32 + JSON metadata.
std::string encode_steering_vector(const SteeringVector & v);
SteeringVector decode_steering_vector(std::string_view bytes);
void save_steering_vector(const std::filesystem::path & path, const SteeringVector & v);
SteeringVector load_steering_vector(const std::filesystem::path & path);

// True if some whitespace token repeats at least `run` times in a row.
bool has_repeated_run(std::string_view text, size_t run = 8);

struct SteeredRun {
    EvalRun run;
    SteeringConfig config;
    uint32_t layer = 0;
    double degenerate_fraction = 0.0;
    bool degenerate = false;
};

SteeredRun steer_and_evaluate(const std::vector<ConflictSample> & samples, const Backend & backend,
                              const SteeringVector & vec, const SteeringConfig & cfg, const EvalOptions & opts = {});

double target_score(const ScoreTuple & t, Modality target);

struct SweepRow {
    double lambda = 0.0;
    double score = 0.0;
    bool degenerate = false;
    PreferenceScores scores;
};

std::vector<SweepRow> sweep_intensity(const std::vector<ConflictSample> & samples, const Backend & backend,
                                      const SteeringVector & vec, const std::vector<double> & lambdas,
                                      const SteeringConfig & base = {}, const EvalOptions & opts = {});

// Scores rise (non-strictly) to a peak and then fall strictly after it.
bool is_inverted_u(const std::vector<double> & scores);

} // namespace modsteer
