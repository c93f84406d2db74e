#include "modsteer/steer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"
#include "modsteer/io.hpp"

namespace modsteer {

namespace {

constexpr std::string_view kMagic = "MSV1";
constexpr unsigned char kSignText = 0x01;
constexpr unsigned char kSignVision = 0xFF;

} // namespace

double compute_weight(const std::vector<Vector> & x_text_states, std::span<const double> u) {
    if (x_text_states.empty()) {
        throw ValidationError("compute_weight needs at least one text state");
    }
    const double un = l2_norm(u);
    if (!(un > 0.0) || !std::isfinite(un)) {
        throw ValidationError("degenerate direction: ||u|| must be positive and finite");
    }
    double acc = 0.0;
    for (const auto & x : x_text_states) {
        if (x.size() != u.size()) {
            throw ValidationError("text state dimension " + std::to_string(x.size()) + " does not match direction " +
                                  std::to_string(u.size()));
        }
        acc += l2_norm(x);
    }
    return acc / static_cast<double>(x_text_states.size()) / un;
}

SteeringVector build_steering_vector(const DirectionProfile & profile, const std::vector<ProbePair> & pairs,
                                     Modality target, std::optional<uint32_t> layer, const LayerWindow * window) {
    const uint32_t l =
        layer ? *layer : select_layer(profile, window ? *window : default_window(profile.num_layers));
    if (l >= profile.num_layers) {
        throw ValidationError("layer " + std::to_string(l) + " out of range [0, " +
                              std::to_string(profile.num_layers) + ")");
    }
    SteeringVector v;
    v.model_id = profile.model_id;
    v.layer = l;
    v.target = target;
    v.n_pairs = profile.n_pairs;
    v.created_at = profile.created_at.empty() ? timestamp_utc() : profile.created_at;
    v.weight = static_cast<float>(compute_weight(text_states_at(pairs, l), profile.u[l]));
    v.direction.reserve(profile.dim);
    for (double c : profile.u[l]) v.direction.push_back(static_cast<float>(c));
    return v;
}

std::string encode_steering_vector(const SteeringVector & v) {
    if (!(v.weight > 0.0f) || !std::isfinite(v.weight)) {
        throw ArtifactError("steering weight must be positive and finite");
    }
    if (std::all_of(v.direction.begin(), v.direction.end(), [](float c) { return c == 0.0f; })) {
        throw ArtifactError("steering direction is the zero vector");
    }
    std::ostringstream out(std::ios::binary);
    out.write(kMagic.data(), 4);
    write_u32_le(out, v.layer);
    write_u32_le(out, static_cast<uint32_t>(v.direction.size()));
    write_f32_le(out, v.weight);
    out.put(static_cast<char>(v.target == Modality::Text ? kSignText : kSignVision));
    for (float c : v.direction) write_f32_le(out, c);
    nlohmann::ordered_json meta;
    meta["model_id"] = v.model_id;
    meta["n_pairs"] = v.n_pairs;
    meta["created_at"] = v.created_at;
    const std::string m = meta.dump();
    write_u32_le(out, static_cast<uint32_t>(m.size()));
    out << m;
    return out.str();
}

SteeringVector decode_steering_vector(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != kMagic) {
        throw ArtifactError("not a steering vector artifact (bad magic)");
    }
    std::istringstream in(std::string(bytes.substr(4)), std::ios::binary);
    SteeringVector v;
    v.layer = read_u32_le(in);
    const uint32_t dim = read_u32_le(in);
    v.weight = read_f32_le(in);
    const int sign = in.get();
    if (sign == std::char_traits<char>::eof()) throw ArtifactError("unexpected end of binary data");
    if (sign == kSignText) {
        v.target = Modality::Text;
    } else if (sign == kSignVision) {
        v.target = Modality::Vision;
    } else {
        throw ArtifactError("invalid sign byte " + std::to_string(sign));
    }
    if (static_cast<size_t>(dim) * 4 > bytes.size()) throw ArtifactError("direction length exceeds artifact size");
    v.direction.resize(dim);
    for (auto & c : v.direction) c = read_f32_le(in);
    const uint32_t len = read_u32_le(in);
    std::string meta(len, '\0');
    if (!in.read(meta.data(), len)) throw ArtifactError("truncated metadata block");
    if (in.peek() != std::char_traits<char>::eof()) throw ArtifactError("trailing bytes after metadata");
    try {
        const auto j = nlohmann::json::parse(meta);
        v.model_id = j.at("model_id").get<std::string>();
        v.n_pairs = j.at("n_pairs").get<uint64_t>();
        v.created_at = j.at("created_at").get<std::string>();
    } catch (const nlohmann::json::exception & e) {
        throw ArtifactError(std::string("malformed metadata: ") + e.what());
    }
    if (!(v.weight > 0.0f) || !std::isfinite(v.weight)) throw ArtifactError("steering weight must be positive");
    return v;
}

void save_steering_vector(const std::filesystem::path & path, const SteeringVector & v) {
    write_file(path, encode_steering_vector(v));
}

SteeringVector load_steering_vector(const std::filesystem::path & path) {
    return decode_steering_vector(read_file(path));
}

bool has_repeated_run(std::string_view text, size_t run) {
    std::string_view prev;
    size_t count = 0;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i) break;
        const std::string_view tok = text.substr(i, j - i);
        count = tok == prev ? count + 1 : 1;
        prev = tok;
        if (count >= run) return true;
        i = j;
    }
    return false;
}

SteeredRun steer_and_evaluate(const std::vector<ConflictSample> & samples, const Backend & backend,
                              const SteeringVector & vec, const SteeringConfig & cfg, const EvalOptions & opts) {
    const BackendInfo bi = backend.info();
    if (!bi.supports_injection) {
        throw CapabilityError("backend '" + bi.model_id + "' does not support residual injection");
    }
    SteeredRun out;
    out.config = cfg;
    out.layer = cfg.layer_override.value_or(vec.layer);
    const size_t parallel = opts.max_parallel ? opts.max_parallel : bi.max_parallel_sessions;
    out.run = evaluate_with(
        samples, [&](const GenerationRequest & r) { return backend.generate_with_steering(r, vec, cfg); }, parallel,
        opts);
    size_t degenerate = 0;
    for (const auto & r : out.run.responses) {
        if (has_repeated_run(r.raw_text)) ++degenerate;
    }
    out.degenerate_fraction = static_cast<double>(degenerate) / static_cast<double>(out.run.responses.size());
    out.degenerate = out.degenerate_fraction >= 0.5;
    if (out.degenerate) {
        spdlog::warn("lambda {} flagged degenerate: {:.0f}% of outputs repeat a token", cfg.lambda,
                     100.0 * out.degenerate_fraction);
    }
    return out;
}

double target_score(const ScoreTuple & t, Modality target) {
    return target == Modality::Text ? t.s_text : t.s_vision;
}

std::vector<SweepRow> sweep_intensity(const std::vector<ConflictSample> & samples, const Backend & backend,
                                      const SteeringVector & vec, const std::vector<double> & lambdas,
                                      const SteeringConfig & base, const EvalOptions & opts) {
    if (lambdas.empty()) {
        throw ValidationError("lambda list is empty");
    }
    if (!std::is_sorted(lambdas.begin(), lambdas.end())) {
        throw ValidationError("lambda list must be sorted ascending");
    }
    std::vector<SweepRow> rows;
    rows.reserve(lambdas.size());
    for (double lambda : lambdas) {
        SteeringConfig cfg = base;
        cfg.lambda = lambda;
        const SteeredRun sr = steer_and_evaluate(samples, backend, vec, cfg, opts);
        SweepRow row;
        row.lambda = lambda;
        row.scores = sr.run.scores;
        row.score = target_score(sr.run.scores.overall, vec.target);
        row.degenerate = sr.degenerate;
        rows.push_back(std::move(row));
    }
    return rows;
}

bool is_inverted_u(const std::vector<double> & scores) {
    if (scores.size() < 2) return false;
    for (size_t peak = 0; peak < scores.size(); ++peak) {
        bool ok = true;
        for (size_t i = 1; i <= peak && ok; ++i) ok = scores[i] >= scores[i - 1];
        for (size_t i = peak + 1; i < scores.size() && ok; ++i) ok = scores[i] < scores[i - 1];
        // A peak at the last point is monotone, not inverted.
        if (ok && peak + 1 < scores.size()) return true;
    }
    return false;
}

} // namespace modsteer
