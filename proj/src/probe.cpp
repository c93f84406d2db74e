#include "modsteer/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"
#include "modsteer/eval.hpp"
#include "modsteer/io.hpp"

namespace modsteer {

ProbePair build_probe_pair(const ConflictSample & s, const Backend & backend, const RenderOptions & base) {
    RenderOptions rv = base;
    rv.mode = PromptMode::InstVision;
    RenderOptions rt = base;
    rt.mode = PromptMode::InstText;
    const ChoicePrompt pv = render_choice_prompt(s, Ordering::VisionFirst, rv);
    const ChoicePrompt pt = render_choice_prompt(s, Ordering::VisionFirst, rt);

    ProbePair pair;
    pair.sample_id = s.id;
    pair.prompt_vision = pv.rendered_text;
    pair.prompt_text = pt.rendered_text;
    pair.x_vision = backend.capture_hidden_states(make_request(pv));
    pair.x_text = backend.capture_hidden_states(make_request(pt));
    return pair;
}

std::vector<ProbePair> collect_probe_pairs(const std::vector<ConflictSample> & samples, const Backend & backend,
                                           const RenderOptions & base, size_t max_parallel) {
    std::vector<std::optional<ProbePair>> slots(samples.size());
    const size_t parallel = max_parallel ? max_parallel : backend.info().max_parallel_sessions;
    parallel_for(samples.size(), parallel, [&](size_t i) {
        try {
            slots[i] = build_probe_pair(samples[i], backend, base);
        } catch (const std::exception & e) {
            spdlog::warn("probe pair for sample '{}' skipped: {}", samples[i].id, e.what());
        }
    });
    std::vector<ProbePair> out;
    for (auto & s : slots) {
        if (s) out.push_back(std::move(*s));
    }
    return out;
}

DirectionProfile compute_direction(const std::vector<ProbePair> & pairs) {
    if (pairs.empty()) {
        throw ValidationError("compute_direction needs at least one probe pair");
    }
    const size_t L = pairs.front().x_text.num_layers;
    const size_t d = pairs.front().x_text.dim;
    for (const auto & p : pairs) {
        if (p.x_text.num_layers != L || p.x_vision.num_layers != L || p.x_text.dim != d || p.x_vision.dim != d) {
            throw ValidationError("probe pair '" + p.sample_id + "' has mismatched hidden-state dimensions");
        }
    }
    const size_t n = pairs.size();
    if (n < 2) {
        spdlog::warn("direction computed from a single pair; layer std treated as 0");
    }

    DirectionProfile prof;
    prof.model_id = pairs.front().x_text.model_id;
    prof.num_layers = L;
    prof.dim = d;
    prof.n_pairs = n;
    prof.u.assign(L, Vector(d, 0.0));
    prof.mean_abs.assign(L, 0.0);
    prof.std.assign(L, 0.0);
    prof.mean_norm.assign(L, 0.0);
    prof.pair_abs.assign(L, 0.0);

    std::vector<double> norms(n);
    Vector diff(d);
    for (size_t l = 0; l < L; ++l) {
        double abs_sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const auto xt = pairs[i].x_text.row(l);
            const auto xv = pairs[i].x_vision.row(l);
            for (size_t c = 0; c < d; ++c) {
                diff[c] = xt[c] - xv[c];
                prof.u[l][c] += diff[c];
                abs_sum += std::abs(diff[c]);
            }
            norms[i] = l2_norm(diff);
        }
        for (auto & c : prof.u[l]) c /= static_cast<double>(n);
        double a = 0.0;
        for (double c : prof.u[l]) a += std::abs(c);
        prof.mean_abs[l] = a / static_cast<double>(d);
        prof.pair_abs[l] = abs_sum / static_cast<double>(n * d);

        double mean = 0.0;
        for (double v : norms) mean += v;
        mean /= static_cast<double>(n);
        prof.mean_norm[l] = mean;
        if (n >= 2) {
            double ss = 0.0;
            for (double v : norms) ss += (v - mean) * (v - mean);
            prof.std[l] = std::sqrt(ss / static_cast<double>(n - 1));
        }
    }
    prof.created_at = timestamp_utc();
    return prof;
}

std::vector<ProbePair> swap_sides(const std::vector<ProbePair> & pairs) {
    std::vector<ProbePair> out = pairs;
    for (auto & p : out) {
        std::swap(p.prompt_vision, p.prompt_text);
        std::swap(p.x_vision, p.x_text);
    }
    return out;
}

LayerWindow default_window(size_t num_layers) {
    const size_t skip_front = (num_layers + 1) / 2;
    const size_t skip_back = (num_layers + 9) / 10;
    LayerWindow w{skip_front, num_layers > skip_back ? num_layers - skip_back : 0};
    if (w.end <= w.begin) return full_window(num_layers);
    return w;
}

LayerWindow full_window(size_t num_layers) {
    return {0, num_layers};
}

std::vector<double> layer_scores(const DirectionProfile & p) {
    std::vector<double> s(p.num_layers);
    for (size_t l = 0; l < p.num_layers; ++l) s[l] = p.mean_abs[l] / (p.std[l] + 1e-6);
    return s;
}

uint32_t select_layer(const DirectionProfile & p, const LayerWindow & window) {
    if (window.begin >= window.end) {
        throw ValidationError("layer window is empty");
    }
    if (window.end > p.num_layers) {
        throw ValidationError("layer window [" + std::to_string(window.begin) + ", " + std::to_string(window.end) +
                              ") exceeds " + std::to_string(p.num_layers) + " layers");
    }
    const auto scores = layer_scores(p);
    size_t best = window.begin;
    for (size_t l = window.begin + 1; l < window.end; ++l) {
        if (scores[l] > scores[best]) best = l;
    }
    return static_cast<uint32_t>(best);
}

std::vector<ConflictSample> stratified_subset(const std::vector<ConflictSample> & samples, size_t n, uint64_t seed) {
    std::map<TaskType, std::vector<size_t>> by_task;
    for (size_t i = 0; i < samples.size(); ++i) by_task[samples[i].task_type].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto & [task, idx] : by_task) {
        // Fisher-Yates with explicit draws; std::shuffle's algorithm is implementation-defined.
        for (size_t i = idx.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(rng() % i);
            std::swap(idx[i - 1], idx[j]);
        }
    }
    std::vector<ConflictSample> out;
    const size_t target = std::min(n, samples.size());
    for (size_t round = 0; out.size() < target; ++round) {
        for (auto & [task, idx] : by_task) {
            if (round < idx.size() && out.size() < target) out.push_back(samples[idx[round]]);
        }
    }
    return out;
}

std::vector<Vector> text_states_at(const std::vector<ProbePair> & pairs, size_t layer) {
    std::vector<Vector> out;
    out.reserve(pairs.size());
    for (const auto & p : pairs) {
        if (layer >= p.x_text.num_layers) {
            throw ValidationError("layer " + std::to_string(layer) + " out of range for probe pair '" + p.sample_id +
                                  "'");
        }
        const auto row = p.x_text.row(layer);
        out.emplace_back(row.begin(), row.end());
    }
    return out;
}

void save_profile(const std::filesystem::path & stem, const DirectionProfile & p) {
    std::filesystem::path bin = stem;
    bin += ".bin";
    std::filesystem::path side = stem;
    side += ".json";
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write '" + bin.string() + "'");
    for (const auto & row : p.u) {
        for (double v : row) write_f32_le(out, static_cast<float>(v));
    }
    nlohmann::ordered_json j;
    j["model_id"] = p.model_id;
    j["L"] = p.num_layers;
    j["d"] = p.dim;
    j["n_pairs"] = p.n_pairs;
    j["mean_abs"] = p.mean_abs;
    j["std"] = p.std;
    j["mean_norm"] = p.mean_norm;
    j["pair_abs"] = p.pair_abs;
    j["created_at"] = p.created_at;
    write_file(side, j.dump(2) + "\n");
}

DirectionProfile load_profile(const std::filesystem::path & stem) {
    std::filesystem::path bin = stem;
    bin += ".bin";
    std::filesystem::path side = stem;
    side += ".json";
    DirectionProfile p;
    try {
        const auto j = nlohmann::json::parse(read_file(side));
        p.model_id = j.at("model_id").get<std::string>();
        p.num_layers = j.at("L").get<size_t>();
        p.dim = j.at("d").get<size_t>();
        p.n_pairs = j.at("n_pairs").get<uint64_t>();
        p.mean_abs = j.at("mean_abs").get<std::vector<double>>();
        p.std = j.at("std").get<std::vector<double>>();
        p.mean_norm = j.value("mean_norm", std::vector<double>(p.num_layers, 0.0));
        p.pair_abs = j.value("pair_abs", std::vector<double>(p.num_layers, 0.0));
        p.created_at = j.value("created_at", "");
    } catch (const nlohmann::json::exception & e) {
        throw ArtifactError("malformed profile sidecar '" + side.string() + "': " + e.what());
    }
    if (p.mean_abs.size() != p.num_layers || p.std.size() != p.num_layers) {
        throw ArtifactError("profile sidecar statistics do not have L entries");
    }
    const std::string raw = read_file(bin);
    if (raw.size() != p.num_layers * p.dim * 4) {
        throw ArtifactError("profile payload has " + std::to_string(raw.size()) + " bytes, expected " +
                            std::to_string(p.num_layers * p.dim * 4));
    }
    std::istringstream in(raw);
    p.u.assign(p.num_layers, Vector(p.dim));
    for (auto & row : p.u) {
        for (auto & v : row) v = read_f32_le(in);
    }
    return p;
}

} // namespace modsteer
