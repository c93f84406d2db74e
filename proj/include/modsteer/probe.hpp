#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modsteer/backend.hpp"
#include "modsteer/dataset.hpp"

namespace modsteer {

struct ProbePair {
    std::string sample_id;
    std::string prompt_vision;
    std::string prompt_text;
    HiddenStateMatrix x_vision;
    HiddenStateMatrix x_text;
};

// Renders the vision- and text-instruction variants (first ordering) and captures both.
ProbePair build_probe_pair(const ConflictSample & s, const Backend & backend, const RenderOptions & base = {});

// Collects pairs in sample order; samples whose capture fails are skipped and logged.
std::vector<ProbePair> collect_probe_pairs(const std::vector<ConflictSample> & samples, const Backend & backend,
                                           const RenderOptions & base = {}, size_t max_parallel = 0);

struct DirectionProfile {
    std::string model_id;
    size_t num_layers = 0;
    size_t dim = 0;
    uint64_t n_pairs = 0;
    std::vector<Vector> u;          // [layer], mean of x_text - x_vision
    std::vector<double> mean_abs;   // mean over coordinates of |u[l]|
    std::vector<double> std;        // sample std of per-pair L2 norms of x_text - x_vision
    std::vector<double> mean_norm;  // mean of per-pair L2 norms
    std::vector<double> pair_abs;   // mean over coordinates and pairs of |x_text - x_vision|
    std::string created_at;
};

DirectionProfile compute_direction(const std::vector<ProbePair> & pairs);

// Pairs with the two sides exchanged; its profile is the exact negation.
std::vector<ProbePair> swap_sides(const std::vector<ProbePair> & pairs);

struct LayerWindow {
    size_t begin = 0;
    size_t end = 0;
};

// Drops the first 50% and the last 10% of layers (rounded up).
LayerWindow default_window(size_t num_layers);
LayerWindow full_window(size_t num_layers);

std::vector<double> layer_scores(const DirectionProfile & p);
uint32_t select_layer(const DirectionProfile & p, const LayerWindow & window);

// Round-robin over task types; order within a task shuffled by `seed`.
std::vector<ConflictSample> stratified_subset(const std::vector<ConflictSample> & samples, size_t n, uint64_t seed);

// Last-token text-instruction states at `layer`, one per pair.
std::vector<Vector> text_states_at(const std::vector<ProbePair> & pairs, size_t layer);

// <stem>.bin holds L*d little-endian f32 (row-major by layer); <stem>.json the sidecar.
void save_profile(const std::filesystem::path & stem, const DirectionProfile & p);
DirectionProfile load_profile(const std::filesystem::path & stem);

} // namespace modsteer
