#pragma once

#include <cstdint>
#include <vector>

#include "modsteer/dataset.hpp"
#include "modsteer/steering_vector.hpp"

namespace modsteer {

// Conflict samples built from per-task answer pools, spread evenly over the eight tasks.
// The text context always mentions answer_text and never answer_vision.
std::vector<ConflictSample> synthetic_conflicts(size_t n, uint64_t seed);

struct ReliabilityCase {
    ConflictSample sample;
    Modality reliable = Modality::Vision;
};

// Half the cases have a text context that names neither option (vision is reliable);
// the other half use an image with no registered scene (text is reliable). Register
// scenes with add_oracle_scenes(cfg, scene_samples) using the returned second vector.
struct ReliabilityFixture {
    std::vector<ReliabilityCase> cases;
    std::vector<ConflictSample> scene_samples;
};

ReliabilityFixture reliability_fixture(size_t n, uint64_t seed);

} // namespace modsteer
