#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modsteer/backend.hpp"
#include "modsteer/dataset.hpp"
#include "modsteer/steering_vector.hpp"

namespace modsteer {

// Every key a run config may contain, with its default.
nlohmann::ordered_json default_run_config();

// Sets a dotted path ("steer.lambda") to a value; the raw string is parsed as JSON
// when possible and kept as a string otherwise. Unknown paths throw ConfigError.
void apply_override(nlohmann::ordered_json & cfg, std::string_view dotted, std::string_view raw);

// Defaults, then the file (if any) merged key by key; unknown keys throw ConfigError.
nlohmann::ordered_json load_run_config(const std::optional<std::filesystem::path> & path);

struct RunConfig {
    std::string backend_kind = "toy";
    nlohmann::ordered_json backend_params = nlohmann::ordered_json::object();
    std::string dataset_path;
    PromptMode prompt_mode = PromptMode::Neutral;
    bool text_after_image = true;
    size_t max_new_tokens = 16;
    size_t probe_n_pairs = 100;
    std::string probe_dataset_path;
    std::optional<std::pair<size_t, size_t>> probe_window;
    Modality steer_target = Modality::Text;
    double steer_lambda = 1.0;
    std::optional<uint32_t> steer_layer_override;
    bool steer_inject_prefill = true;
    std::string steer_vector_path;
    std::vector<double> sweep_lambdas;
    std::optional<size_t> pca_layer;
    size_t pca_n_per_condition = 500;
    std::string forge_seeds;
    std::string forge_endpoint;
    std::string forge_responses;
    std::string forge_candidates;
    std::string forge_queue;
    std::vector<nlohmann::ordered_json> forge_judges;
    std::string report_vr_csv;
    std::string report_vr_column = "vision_ratio";
    std::string report_acc_csv;
    std::string report_acc_column = "avg";
    std::string report_key = "model_id";
    std::string output_dir = "out";
    uint64_t seed = 20250611;
};

RunConfig resolve_run_config(const nlohmann::ordered_json & j);

// Builds the configured backend. A toy backend gets oracle scenes for `scene_samples`.
std::unique_ptr<Backend> make_backend(const std::string & kind, const nlohmann::ordered_json & params, uint64_t seed,
                                      const std::vector<ConflictSample> & scene_samples);

} // namespace modsteer
