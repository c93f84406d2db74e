#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "modsteer/backend.hpp"
#include "modsteer/dataset.hpp"
#include "modsteer/eval.hpp"
#include "modsteer/steering_vector.hpp"

namespace modsteer {

struct AttentionProfile {
    size_t num_layers = 0;
    size_t num_steps = 0;
    std::vector<SpanMasses> mean_masses;             // per layer, averaged over steps
    std::vector<std::optional<double>> ratio;        // vision / (vision + text), per layer
    std::optional<double> aggregate;                 // mean of the defined per-layer ratios
};

AttentionProfile attention_ratio(const AttentionCapture & capture);

// Long format: layer,step,span,mass.
void write_attention_csv(std::ostream & os, const AttentionCapture & capture);
// layer,vision_mass,text_mass,other_mass,attention_ratio
void write_attention_profile_csv(std::ostream & os, const AttentionProfile & p);

struct Condition {
    std::string label;
    std::vector<Vector> states;
};

struct ProjectionSet {
    std::string label;
    std::vector<Vector> points; // k coordinates each
    Vector centroid;
};

struct PcaResult {
    std::vector<Vector> components; // k unit vectors of dimension d
    std::vector<double> explained_variance;
    Vector mean;
    std::vector<ProjectionSet> sets;
};

// Fits one basis on the union of all conditions and projects each condition into it.
// Component signs: the largest-magnitude coordinate is positive.
PcaResult pca_project(const std::vector<Condition> & conditions, size_t k = 2);

// condition,x,y per point, then one "centroid:<label>" row per condition.
void write_projection_csv(std::ostream & os, const PcaResult & r);

struct ReliabilityPrediction {
    Modality modality = Modality::Vision;
    double margin = 0.0;
    double drop_vision = 0.0; // top-answer probability lost when the image is removed
    double drop_text = 0.0;   // ... when the text context is removed
    bool tie = false;
};

// Three forwards on the first ordering: full, image removed, text context removed.
ReliabilityPrediction predict_reliable_modality(const ConflictSample & s, const Backend & backend,
                                                const RenderOptions & base = {});

// Ties go to Vision, like the per-sample rule.
Modality majority_vote(const std::vector<Modality> & votes);
std::map<TaskType, Modality> majority_by_task(const std::vector<ConflictSample> & samples,
                                              const std::vector<Modality> & votes);

} // namespace modsteer
