#include "modsteer/toy_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "modsteer/error.hpp"

namespace modsteer {

namespace {

// Box-Muller over mt19937_64; std::normal_distribution is not portable bit-for-bit.
class Gaussian {
public:
    explicit Gaussian(uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::vector<double> gaussian_matrix(Gaussian & g, size_t n, double scale) {
    std::vector<double> m(n);
    for (auto & v : m) v = scale * g();
    return m;
}

Vector unit_vector(Gaussian & g, size_t d) {
    Vector v(d);
    for (auto & x : v) x = g();
    const double n = l2_norm(v);
    for (auto & x : v) x /= n;
    return v;
}

// M is rows x cols (row-major) mapping R^cols -> R^rows. Removes the component of
// every output along `dir`: M <- (I - dir dir^T) M.
void project_outputs(std::vector<double> & m, size_t rows, size_t cols, const Vector & dir) {
    for (size_t c = 0; c < cols; ++c) {
        double proj = 0.0;
        for (size_t r = 0; r < rows; ++r) proj += dir[r] * m[r * cols + c];
        for (size_t r = 0; r < rows; ++r) m[r * cols + c] -= proj * dir[r];
    }
}

void remove_component(std::span<double> v, const Vector & dir) {
    const double c = dot(v, dir);
    axpy(-c, dir, v);
}

void matvec(const std::vector<double> & m, size_t rows, size_t cols, std::span<const double> x,
            std::span<double> y) {
    for (size_t r = 0; r < rows; ++r) {
        const double * row = m.data() + r * cols;
        double acc = 0.0;
        for (size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

Vector layer_norm(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    Vector out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv;
    return out;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
}

std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        if (!is_word_char(s[i])) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < s.size() && is_word_char(s[j])) ++j;
        out.push_back(lower(s.substr(i, j - i)));
        i = j;
    }
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

std::vector<double> softmax(const std::vector<double> & logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto & v : p) v /= sum;
    return p;
}

} // namespace

void add_oracle_scenes(ToyConfig & cfg, const std::vector<ConflictSample> & samples) {
    for (const auto & s : samples) {
        auto & scene = cfg.scenes[s.image_ref];
        if (!scene.empty()) scene += " ";
        scene += s.answer_vision;
    }
}

// What the answer head can see: option contents and which modality grounds each option.
struct ToyBackend::Grounding {
    bool has_options = false;
    bool text_support[2] = {false, false};
    bool vision_support[2] = {false, false};
};

struct ToyBackend::Session {
    size_t length = 0;
    size_t prompt_length = 0;
    const Injection * injection = nullptr;
    bool record_attention = false;
    Trace * trace = nullptr;

    std::vector<bool> is_patch;
    std::vector<std::vector<Vector>> keys;   // [layer][position]
    std::vector<std::vector<Vector>> values; // [layer][position]
    double cue_sum = 0.0;

    Vector final_state;                           // last position, after the last block
    std::vector<Vector> last_layer_states;        // last position, per layer
    std::vector<std::vector<double>> last_attention; // [layer][position], head-averaged
};

ToyBackend::ToyBackend(ToyConfig cfg) : cfg_(std::move(cfg)) {
    const size_t d = cfg_.hidden_dim;
    if (cfg_.num_layers < 2 || d < 2) {
        throw ConfigError("toy backend needs at least 2 layers and hidden size 2");
    }
    if (d % cfg_.num_heads != 0) {
        throw ConfigError("toy hidden size must be divisible by the head count");
    }
    if (cfg_.planted_layer >= cfg_.num_layers) {
        throw ConfigError("toy planted layer out of range");
    }

    Gaussian g(cfg_.seed);
    planted_ = unit_vector(g, d);
    cue_dir_ = unit_vector(g, d);
    remove_component(cue_dir_, planted_);
    const double qn = l2_norm(cue_dir_);
    for (auto & x : cue_dir_) x /= qn;

    embed_ = gaussian_matrix(g, kVocabSize * d, cfg_.embed_scale);
    for (size_t t = 0; t < kVocabSize; ++t) {
        std::span<double> row(embed_.data() + t * d, d);
        remove_component(row, cue_dir_);
    }
    axpy(cfg_.cue_strength, cue_dir_, std::span<double>(embed_.data() + kTextWord * d, d));
    axpy(-cfg_.cue_strength, cue_dir_, std::span<double>(embed_.data() + kVisionWord * d, d));

    unembed_ = gaussian_matrix(g, kVocabSize * d, cfg_.unembed_scale);
    // Only word tokens are produced by the unembedding; structure tokens come from the heads.
    std::fill(unembed_.begin(), unembed_.begin() + kFirstWord * d, 0.0);
    const size_t half = (kVocabSize - kFirstWord) / 2;
    for (size_t t = kFirstWord + half; t < kVocabSize; ++t) {
        for (size_t c = 0; c < d; ++c) unembed_[t * d + c] = -unembed_[(t - half) * d + c];
    }

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(cfg_.mlp_dim));
    layers_.resize(cfg_.num_layers);
    for (size_t l = 0; l < cfg_.num_layers; ++l) {
        Layer & L = layers_[l];
        L.wq = gaussian_matrix(g, d * d, inv_sqrt_d);
        L.wk = gaussian_matrix(g, d * d, inv_sqrt_d);
        L.wv = gaussian_matrix(g, d * d, inv_sqrt_d);
        L.wo = gaussian_matrix(g, d * d, inv_sqrt_d);
        L.w1 = gaussian_matrix(g, cfg_.mlp_dim * d, inv_sqrt_d);
        L.b1 = gaussian_matrix(g, cfg_.mlp_dim, 0.1);
        L.w2 = gaussian_matrix(g, d * cfg_.mlp_dim, inv_sqrt_m);
        project_outputs(L.wo, d, d, cue_dir_);
        project_outputs(L.w2, d, cfg_.mlp_dim, cue_dir_);
        if (l > cfg_.planted_layer) {
            for (auto & w : L.wo) w *= cfg_.late_block_scale;
            for (auto & w : L.w2) w *= cfg_.late_block_scale;
            project_outputs(L.wo, d, d, planted_);
            project_outputs(L.w2, d, cfg_.mlp_dim, planted_);
        }
    }
}

BackendInfo ToyBackend::info() const {
    BackendInfo bi;
    bi.model_id = cfg_.model_id;
    bi.num_layers = cfg_.num_layers;
    bi.hidden_dim = cfg_.hidden_dim;
    bi.supports_injection = true;
    bi.supports_attention_capture = true;
    bi.supports_choice_probabilities = true;
    bi.max_parallel_sessions = cfg_.max_parallel_sessions;
    return bi;
}

std::string ToyBackend::token_text(int id) {
    switch (id) {
    case kEos: return "";
    case kLetterA: return "A";
    case kLetterB: return "B";
    case kPeriod: return ".";
    case kTextWord: return "text";
    case kVisionWord: return "vision";
    default: break;
    }
    if (id >= kFirstPatch && id < kFirstWord) {
        return "<patch" + std::to_string(id - kFirstPatch) + ">";
    }
    return "w" + std::to_string(id);
}

std::vector<ToyBackend::Token> ToyBackend::tokenize(const GenerationRequest & req) const {
    if (req.image_ref && req.image_ref->empty()) {
        throw BackendError("image_ref is empty and cannot be read");
    }
    const std::string_view text = req.prompt_text;
    std::vector<Token> out;
    bool image_placed = false;

    auto patch_block = [&](size_t b, size_t e) {
        for (size_t i = 0; i < cfg_.image_patches; ++i) {
            const uint64_t h = fnv1a(*req.image_ref + "#" + std::to_string(i));
            out.push_back({kFirstPatch + static_cast<int>(h % kNumPatchIds), b, e, true});
        }
    };

    size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i).starts_with(kImagePlaceholder)) {
            if (req.image_ref && !image_placed) {
                patch_block(i, i + kImagePlaceholder.size());
                image_placed = true;
            }
            i += kImagePlaceholder.size();
            continue;
        }
        const char c = text[i];
        if (c == '.') {
            out.push_back({kPeriod, i, i + 1, false});
            ++i;
            continue;
        }
        if (!is_word_char(c)) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < text.size() && is_word_char(text[j])) ++j;
        const std::string_view word = text.substr(i, j - i);
        int id = 0;
        if (word == "A") {
            id = kLetterA;
        } else if (word == "B") {
            id = kLetterB;
        } else {
            const std::string w = lower(word);
            if (w == "text") {
                id = kTextWord;
            } else if (w == "vision") {
                id = kVisionWord;
            } else {
                id = kFirstWord + static_cast<int>(fnv1a(w) % (kVocabSize - kFirstWord));
            }
        }
        out.push_back({id, i, j, false});
        i = j;
    }
    if (req.image_ref && !image_placed) {
        std::vector<Token> with_image;
        std::swap(with_image, out);
        patch_block(0, 0);
        out.insert(out.end(), with_image.begin(), with_image.end());
    }
    return out;
}

ToyBackend::Grounding ToyBackend::ground(const GenerationRequest & req) const {
    Grounding g;
    std::string_view text = req.prompt_text;
    // Few-shot demonstrations are separated by blank lines; only the final block is the query.
    if (const size_t cut = text.rfind("\n\n"); cut != std::string_view::npos) {
        text = text.substr(cut + 2);
    }

    std::string_view context;
    std::string_view options[2];
    bool found[2] = {false, false};
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        if (starts_with_ci(line, "Text Context:")) context = line.substr(13);
        if (line.starts_with("A. ")) {
            options[0] = line.substr(3);
            found[0] = true;
        }
        if (line.starts_with("B. ")) {
            options[1] = line.substr(3);
            found[1] = true;
        }
        pos = end + 1;
    }
    g.has_options = found[0] && found[1];
    if (!g.has_options) return g;

    const auto ctx_words = words_of(context);
    const std::set<std::string> ctx_set(ctx_words.begin(), ctx_words.end());
    std::set<std::string> scene_set;
    if (req.image_ref) {
        if (auto it = cfg_.scenes.find(*req.image_ref); it != cfg_.scenes.end()) {
            const auto w = words_of(it->second);
            scene_set.insert(w.begin(), w.end());
        }
    }
    for (int k = 0; k < 2; ++k) {
        const auto opt = words_of(options[k]);
        if (opt.empty()) continue;
        g.text_support[k] = std::all_of(opt.begin(), opt.end(), [&](const auto & w) { return ctx_set.count(w) > 0; });
        g.vision_support[k] =
            std::all_of(opt.begin(), opt.end(), [&](const auto & w) { return scene_set.count(w) > 0; });
    }
    return g;
}

void ToyBackend::step(Session & s, int token_id, bool is_patch, bool generated) const {
    const size_t d = cfg_.hidden_dim;
    const size_t heads = cfg_.num_heads;
    const size_t hd = d / heads;
    const size_t pos = s.length;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    Vector h(embed_.begin() + token_id * d, embed_.begin() + (token_id + 1) * d);
    Vector pe(d);
    for (size_t i = 0; i < d; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        pe[i] = 0.5 * ((i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq));
    }
    remove_component(pe, cue_dir_);
    axpy(1.0, pe, h);

    s.is_patch.push_back(is_patch);
    if (s.keys.empty()) {
        s.keys.resize(cfg_.num_layers);
        s.values.resize(cfg_.num_layers);
        s.last_layer_states.resize(cfg_.num_layers);
        s.last_attention.resize(cfg_.num_layers);
    }

    Vector q(d), k(d), v(d), mixed(d), proj(d), hidden(cfg_.mlp_dim);
    for (size_t l = 0; l < cfg_.num_layers; ++l) {
        const Layer & L = layers_[l];
        const Vector a = layer_norm(h);
        matvec(L.wq, d, d, a, q);
        matvec(L.wk, d, d, a, k);
        matvec(L.wv, d, d, a, v);
        s.keys[l].push_back(k);
        s.values[l].push_back(v);

        std::fill(mixed.begin(), mixed.end(), 0.0);
        std::vector<double> avg_weights;
        if (s.record_attention) avg_weights.assign(pos + 1, 0.0);
        std::vector<double> scores(pos + 1);
        for (size_t head = 0; head < heads; ++head) {
            const size_t off = head * hd;
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t j = 0; j <= pos; ++j) {
                double sc = 0.0;
                if (!cfg_.uniform_attention) {
                    for (size_t c = 0; c < hd; ++c) sc += q[off + c] * s.keys[l][j][off + c];
                    sc *= inv_sqrt_hd;
                    if (s.is_patch[j]) sc += cfg_.vision_attention_bias;
                }
                scores[j] = sc;
                mx = std::max(mx, sc);
            }
            double sum = 0.0;
            for (size_t j = 0; j <= pos; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                sum += scores[j];
            }
            for (size_t j = 0; j <= pos; ++j) {
                const double w = scores[j] / sum;
                for (size_t c = 0; c < hd; ++c) mixed[off + c] += w * s.values[l][j][off + c];
                if (s.record_attention) avg_weights[j] += w / static_cast<double>(heads);
            }
        }
        if (s.record_attention) s.last_attention[l] = std::move(avg_weights);
        matvec(L.wo, d, d, mixed, proj);
        axpy(1.0, proj, h);

        const Vector m = layer_norm(h);
        matvec(L.w1, cfg_.mlp_dim, d, m, hidden);
        for (size_t i = 0; i < cfg_.mlp_dim; ++i) hidden[i] = gelu(hidden[i] + L.b1[i]);
        matvec(L.w2, d, cfg_.mlp_dim, hidden, proj);
        axpy(1.0, proj, h);

        if (l == cfg_.planted_layer) {
            s.cue_sum += dot(h, cue_dir_);
            axpy(cfg_.cue_gain * s.cue_sum, planted_, h);
        }
        if (s.trace) s.trace->pre_injection[l].push_back(h);
        if (s.injection && s.injection->layer == l && (s.injection->prefill || generated)) {
            axpy(1.0, s.injection->delta, h);
        }
        if (s.trace) s.trace->post_injection[l].push_back(h);
        s.last_layer_states[l] = h;
    }
    s.final_state = std::move(h);
    ++s.length;
}

std::vector<double> ToyBackend::logits(const Session & s, const Grounding & g, int prev_generated) const {
    const size_t d = cfg_.hidden_dim;
    std::vector<double> out(kVocabSize, 0.0);
    for (size_t t = 0; t < kVocabSize; ++t) {
        out[t] = dot(std::span<const double>(unembed_.data() + t * d, d), s.final_state);
    }
    if (prev_generated < 0) {
        const double z = dot(s.final_state, planted_) - cfg_.gate_offset;
        const double gate = sigmoid(cfg_.gate_sharpness * z);
        for (int k = 0; k < 2; ++k) {
            double bonus = cfg_.letter_prior;
            if (g.has_options) {
                const double et = g.text_support[k] ? 1.0 : 0.0;
                const double ev = g.vision_support[k] ? 1.0 : 0.0;
                bonus += cfg_.evidence_gain * (et + ev) + cfg_.preference_gain * (gate - 0.5) * (et - ev);
            }
            out[kLetterA + k] += bonus;
        }
    } else if (prev_generated == kLetterA || prev_generated == kLetterB) {
        out[kPeriod] += cfg_.grammar_gain;
    } else if (prev_generated == kPeriod) {
        out[kEos] += cfg_.grammar_gain;
    }
    return out;
}

GenerationResult ToyBackend::run(const GenerationRequest & req, const std::optional<Injection> & inj,
                                 const SpanMap * spans, AttentionCapture * capture) const {
    if (req.decode.strategy == DecodeStrategy::Sampled && !req.decode.seed) {
        throw ValidationError("sampled decoding on the toy backend requires a seed");
    }
    const auto tokens = tokenize(req);
    if (tokens.empty()) {
        throw ValidationError("empty prompt");
    }
    const Grounding g = ground(req);

    Session s;
    s.injection = inj ? &*inj : nullptr;
    s.record_attention = capture != nullptr;
    s.prompt_length = tokens.size();
    for (const auto & t : tokens) step(s, t.id, t.is_patch, false);

    std::mt19937_64 rng(req.decode.seed.value_or(0));
    GenerationResult result;
    int prev = -1;
    if (capture) {
        capture->num_layers = cfg_.num_layers;
        capture->num_steps = 0;
        capture->masses.clear();
    }
    for (size_t k = 0; k < req.decode.max_new_tokens; ++k) {
        if (capture) {
            for (size_t l = 0; l < cfg_.num_layers; ++l) {
                SpanMasses m;
                const auto & w = s.last_attention[l];
                for (size_t j = 0; j < w.size(); ++j) {
                    if (j < spans->input_length && spans->vision.contains(j)) {
                        m.vision += w[j];
                    } else if (j < spans->input_length && spans->text_context.contains(j)) {
                        m.text += w[j];
                    } else {
                        m.other += w[j];
                    }
                }
                capture->masses.push_back(m);
            }
            ++capture->num_steps;
        }

        const auto lg = logits(s, g, prev);
        int next = 0;
        if (req.decode.strategy == DecodeStrategy::Greedy) {
            next = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
        } else {
            const auto p = softmax(lg);
            std::discrete_distribution<int> pick(p.begin(), p.end());
            next = pick(rng);
        }
        ++result.token_count;
        if (next == kEos) break;
        const std::string piece = token_text(next);
        if (!result.text.empty() && next != kPeriod) result.text += ' ';
        result.text += piece;
        prev = next;
        if (k + 1 < req.decode.max_new_tokens) step(s, next, false, true);
    }
    return result;
}

GenerationResult ToyBackend::generate(const GenerationRequest & req) const {
    return run(req, std::nullopt, nullptr, nullptr);
}

GenerationResult ToyBackend::generate_injected(const GenerationRequest & req,
                                               const std::optional<Injection> & inj) const {
    return run(req, inj, nullptr, nullptr);
}

GenerationResult ToyBackend::generate_with_steering(const GenerationRequest & req, const SteeringVector & vec,
                                                    const SteeringConfig & cfg) const {
    const uint32_t layer = check_steering(vec, cfg);
    Injection inj;
    inj.layer = layer;
    inj.prefill = cfg.inject_prefill;
    inj.delta = vec.injected();
    for (auto & x : inj.delta) x *= cfg.lambda;
    return run(req, inj, nullptr, nullptr);
}

HiddenStateMatrix ToyBackend::capture_hidden_states(const GenerationRequest & req) const {
    const auto tokens = tokenize(req);
    if (tokens.empty()) {
        throw ValidationError("empty prompt");
    }
    if (tokens.back().is_patch) {
        throw ValidationError("prompt needs at least one text token after the image block");
    }
    Session s;
    for (const auto & t : tokens) step(s, t.id, t.is_patch, false);
    HiddenStateMatrix m(cfg_.model_id, cfg_.num_layers, cfg_.hidden_dim);
    for (size_t l = 0; l < cfg_.num_layers; ++l) {
        std::copy(s.last_layer_states[l].begin(), s.last_layer_states[l].end(), m.row(l).begin());
    }
    return m;
}

AttentionCapture ToyBackend::capture_attention(const GenerationRequest & req, const SpanMap & spans) const {
    AttentionCapture cap;
    run(req, std::nullopt, &spans, &cap);
    return cap;
}

ChoiceProbabilities ToyBackend::choice_probabilities(const GenerationRequest & req) const {
    const auto p = softmax(first_step_logits(req));
    return {p[kLetterA], p[kLetterB]};
}

SpanMap ToyBackend::locate_spans(const GenerationRequest & req, std::string_view text_context) const {
    const auto tokens = tokenize(req);
    SpanMap m;
    m.input_length = tokens.size();
    bool in_vision = false;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].is_patch) {
            if (!in_vision) m.vision.begin = i;
            in_vision = true;
            m.vision.end = i + 1;
        }
    }
    if (!text_context.empty()) {
        // The context sits after the "Text Context:" label when present.
        size_t at = std::string_view(req.prompt_text).rfind(std::string("Text Context: ") + std::string(text_context));
        if (at != std::string::npos) {
            at += 14;
        } else {
            at = req.prompt_text.rfind(text_context);
        }
        if (at != std::string::npos) {
            const size_t end = at + text_context.size();
            bool started = false;
            for (size_t i = 0; i < tokens.size(); ++i) {
                if (tokens[i].is_patch) continue;
                if (tokens[i].char_begin >= at && tokens[i].char_end <= end) {
                    if (!started) m.text_context.begin = i;
                    started = true;
                    m.text_context.end = i + 1;
                }
            }
        }
    }
    return m;
}

ToyBackend::Trace ToyBackend::trace(const GenerationRequest & req, const std::optional<Injection> & inj) const {
    const auto tokens = tokenize(req);
    if (tokens.empty()) throw ValidationError("empty prompt");
    Trace t;
    t.pre_injection.resize(cfg_.num_layers);
    t.post_injection.resize(cfg_.num_layers);
    Session s;
    s.trace = &t;
    s.injection = inj ? &*inj : nullptr;
    for (const auto & tok : tokens) step(s, tok.id, tok.is_patch, false);
    return t;
}

std::vector<double> ToyBackend::first_step_logits(const GenerationRequest & req,
                                                  const std::optional<Injection> & inj) const {
    const auto tokens = tokenize(req);
    if (tokens.empty()) throw ValidationError("empty prompt");
    Session s;
    s.injection = inj ? &*inj : nullptr;
    for (const auto & t : tokens) step(s, t.id, t.is_patch, false);
    return logits(s, ground(req), -1);
}

} // namespace modsteer
