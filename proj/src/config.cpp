#include "modsteer/config.hpp"

#include <cmath>
#include <map>

#include "modsteer/engine_adapter.hpp"
#include "modsteer/error.hpp"
#include "modsteer/io.hpp"
#include "modsteer/toy_backend.hpp"

namespace modsteer {

namespace {

void merge_known(nlohmann::ordered_json & base, const nlohmann::ordered_json & in, const std::string & prefix) {
    for (const auto & [k, v] : in.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (!base.contains(k)) throw ConfigError("unknown config key '" + path + "'");
        // Free-form maps: backend params and per-judge objects are passed through whole.
        if (path == "backend.params" || path == "forge.judges" || !base[k].is_object() || !v.is_object()) {
            base[k] = v;
        } else {
            merge_known(base[k], v, path);
        }
    }
}

template <class T>
T get_as(const nlohmann::ordered_json & j, std::string_view path) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception &) {
        throw ConfigError("config key '" + std::string(path) + "' has the wrong type");
    }
}

std::string str_or_empty(const nlohmann::ordered_json & j, std::string_view path) {
    return j.is_null() ? std::string() : get_as<std::string>(j, path);
}

} // namespace

nlohmann::ordered_json default_run_config() {
    return nlohmann::ordered_json::parse(R"({
  "backend": {"kind": "toy", "params": {}},
  "dataset_path": "",
  "prompt_mode": "neutral",
  "text_after_image": true,
  "decode": {"max_new_tokens": 16},
  "probe": {"n_pairs": 100, "dataset_path": "", "window": null},
  "steer": {"target": "text", "lambda": 1.0, "layer_override": null, "inject_prefill": true,
            "vector_path": "", "lambdas": [0.25, 0.5, 1.0, 2.0, 4.0]},
  "pca": {"layer": null, "n_per_condition": 500},
  "forge": {"seeds": "", "endpoint": "", "responses": "", "candidates": "", "queue": "", "judges": []},
  "report": {"vr_csv": "", "vr_column": "vision_ratio", "acc_csv": "", "acc_column": "avg", "key": "model_id"},
  "output_dir": "out",
  "seed": 20250611
})");
}

void apply_override(nlohmann::ordered_json & cfg, std::string_view dotted, std::string_view raw) {
    nlohmann::ordered_json * node = &cfg;
    size_t start = 0;
    std::string path(dotted);
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) {
            // backend.params accepts arbitrary keys
            if (node->is_object() && path.rfind("backend.params.", 0) == 0) {
                (*node)[key] = nullptr;
            } else {
                throw ConfigError("unknown config key '" + path + "'");
            }
        }
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    nlohmann::ordered_json value;
    try {
        value = nlohmann::ordered_json::parse(raw);
    } catch (const nlohmann::json::parse_error &) {
        value = std::string(raw);
    }
    *node = value;
}

nlohmann::ordered_json load_run_config(const std::optional<std::filesystem::path> & path) {
    auto cfg = default_run_config();
    if (!path) return cfg;
    nlohmann::ordered_json in;
    try {
        in = nlohmann::ordered_json::parse(read_file(*path));
    } catch (const nlohmann::json::parse_error & e) {
        throw ConfigError("config '" + path->string() + "' is not valid JSON: " + e.what());
    } catch (const ArtifactError & e) {
        throw ConfigError(e.what());
    }
    if (!in.is_object()) throw ConfigError("config root must be an object");
    merge_known(cfg, in, "");
    return cfg;
}

RunConfig resolve_run_config(const nlohmann::ordered_json & j) {
    RunConfig c;
    c.backend_kind = get_as<std::string>(j["backend"]["kind"], "backend.kind");
    if (c.backend_kind != "toy" && c.backend_kind != "adapter") {
        throw ConfigError("backend.kind must be 'toy' or 'adapter'");
    }
    c.backend_params = j["backend"]["params"];
    c.dataset_path = str_or_empty(j["dataset_path"], "dataset_path");
    const auto mode = parse_prompt_mode(get_as<std::string>(j["prompt_mode"], "prompt_mode"));
    if (!mode) throw ConfigError("prompt_mode must be one of neutral, inst_vision, inst_text, cot, few_shot");
    c.prompt_mode = *mode;
    c.text_after_image = get_as<bool>(j["text_after_image"], "text_after_image");
    c.max_new_tokens = get_as<size_t>(j["decode"]["max_new_tokens"], "decode.max_new_tokens");
    if (c.max_new_tokens == 0) throw ConfigError("decode.max_new_tokens must be positive");

    c.probe_n_pairs = get_as<size_t>(j["probe"]["n_pairs"], "probe.n_pairs");
    c.probe_dataset_path = str_or_empty(j["probe"]["dataset_path"], "probe.dataset_path");
    if (!j["probe"]["window"].is_null()) {
        const auto w = get_as<std::vector<size_t>>(j["probe"]["window"], "probe.window");
        if (w.size() != 2 || w[0] >= w[1]) throw ConfigError("probe.window must be [begin, end) with begin < end");
        c.probe_window = std::make_pair(w[0], w[1]);
    }

    const auto target = parse_modality(get_as<std::string>(j["steer"]["target"], "steer.target"));
    if (!target) throw ConfigError("steer.target must be 'text' or 'vision'");
    c.steer_target = *target;
    c.steer_lambda = get_as<double>(j["steer"]["lambda"], "steer.lambda");
    if (!std::isfinite(c.steer_lambda) || c.steer_lambda < 0.0) throw ConfigError("steer.lambda must be >= 0");
    if (!j["steer"]["layer_override"].is_null()) {
        c.steer_layer_override = get_as<uint32_t>(j["steer"]["layer_override"], "steer.layer_override");
    }
    c.steer_inject_prefill = get_as<bool>(j["steer"]["inject_prefill"], "steer.inject_prefill");
    c.steer_vector_path = str_or_empty(j["steer"]["vector_path"], "steer.vector_path");
    c.sweep_lambdas = get_as<std::vector<double>>(j["steer"]["lambdas"], "steer.lambdas");

    if (!j["pca"]["layer"].is_null()) c.pca_layer = get_as<size_t>(j["pca"]["layer"], "pca.layer");
    c.pca_n_per_condition = get_as<size_t>(j["pca"]["n_per_condition"], "pca.n_per_condition");

    c.forge_seeds = str_or_empty(j["forge"]["seeds"], "forge.seeds");
    c.forge_endpoint = str_or_empty(j["forge"]["endpoint"], "forge.endpoint");
    c.forge_responses = str_or_empty(j["forge"]["responses"], "forge.responses");
    c.forge_candidates = str_or_empty(j["forge"]["candidates"], "forge.candidates");
    c.forge_queue = str_or_empty(j["forge"]["queue"], "forge.queue");
    if (!j["forge"]["judges"].is_array()) throw ConfigError("forge.judges must be an array");
    for (const auto & judge : j["forge"]["judges"]) c.forge_judges.push_back(judge);

    c.report_vr_csv = str_or_empty(j["report"]["vr_csv"], "report.vr_csv");
    c.report_vr_column = get_as<std::string>(j["report"]["vr_column"], "report.vr_column");
    c.report_acc_csv = str_or_empty(j["report"]["acc_csv"], "report.acc_csv");
    c.report_acc_column = get_as<std::string>(j["report"]["acc_column"], "report.acc_column");
    c.report_key = get_as<std::string>(j["report"]["key"], "report.key");

    c.output_dir = get_as<std::string>(j["output_dir"], "output_dir");
    c.seed = get_as<uint64_t>(j["seed"], "seed");
    return c;
}

std::unique_ptr<Backend> make_backend(const std::string & kind, const nlohmann::ordered_json & params, uint64_t seed,
                                      const std::vector<ConflictSample> & scene_samples) {
    if (kind == "adapter") {
        return std::make_unique<EngineAdapter>(adapter_config_from_json(nlohmann::json::parse(params.dump())));
    }
    if (kind != "toy") throw ConfigError("unknown backend kind '" + kind + "'");
    ToyConfig t;
    t.seed = seed;
    bool oracle = true;
    for (const auto & [k, v] : params.items()) {
        try {
            if (k == "seed") t.seed = v.get<uint64_t>();
            else if (k == "model_id") t.model_id = v.get<std::string>();
            else if (k == "gate_offset") t.gate_offset = v.get<double>();
            else if (k == "gate_sharpness") t.gate_sharpness = v.get<double>();
            else if (k == "cue_gain") t.cue_gain = v.get<double>();
            else if (k == "cue_strength") t.cue_strength = v.get<double>();
            else if (k == "letter_prior") t.letter_prior = v.get<double>();
            else if (k == "evidence_gain") t.evidence_gain = v.get<double>();
            else if (k == "preference_gain") t.preference_gain = v.get<double>();
            else if (k == "grammar_gain") t.grammar_gain = v.get<double>();
            else if (k == "unembed_scale") t.unembed_scale = v.get<double>();
            else if (k == "late_block_scale") t.late_block_scale = v.get<double>();
            else if (k == "uniform_attention") t.uniform_attention = v.get<bool>();
            else if (k == "vision_attention_bias") t.vision_attention_bias = v.get<double>();
            else if (k == "max_parallel_sessions") t.max_parallel_sessions = v.get<size_t>();
            else if (k == "oracle_scenes") oracle = v.get<bool>();
            else if (k == "scenes") t.scenes = v.get<std::map<std::string, std::string>>();
            else throw ConfigError("unknown toy backend parameter '" + k + "'");
        } catch (const nlohmann::json::exception &) {
            throw ConfigError("toy backend parameter '" + k + "' has the wrong type");
        }
    }
    if (oracle) add_oracle_scenes(t, scene_samples);
    return std::make_unique<ToyBackend>(std::move(t));
}

} // namespace modsteer
