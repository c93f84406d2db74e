#include "modsteer/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "modsteer/analysis.hpp"
#include "modsteer/config.hpp"
#include "modsteer/error.hpp"
#include "modsteer/eval.hpp"
#include "modsteer/forge.hpp"
#include "modsteer/io.hpp"
#include "modsteer/probe.hpp"
#include "modsteer/report.hpp"
#include "modsteer/steer.hpp"

namespace fs = std::filesystem;

namespace modsteer {

namespace {

struct Run {
    nlohmann::ordered_json cfg_json;
    RunConfig cfg;
    std::string command;
    fs::path out_dir;
    std::vector<fs::path> artifacts;
    std::ostream & out;

    void artifact(const std::string & name, std::string_view content) {
        const auto p = out_dir / name;
        fs::create_directories(p.parent_path());
        write_file(p, content);
        artifacts.push_back(p);
    }

    void plot(const std::string & name, const std::function<std::string()> & make) {
        std::string svg;
        try {
            svg = make();
        } catch (const std::exception & e) {
            spdlog::warn("plot '{}' skipped: {}", name, e.what());
            return;
        }
        if (write_plot(out_dir / name, svg)) artifacts.push_back(out_dir / name);
    }

    void finish() { write_manifest(out_dir, command, cfg_json, artifacts); }
};

std::vector<ConflictSample> load_samples(const std::string & path, const char * key) {
    if (path.empty()) throw ConfigError(std::string(key) + " is not set");
    return load_dataset(path).samples;
}

EvalOptions eval_options(const RunConfig & c) {
    EvalOptions o;
    o.render.mode = c.prompt_mode;
    o.render.text_after_image = c.text_after_image;
    o.decode.max_new_tokens = c.max_new_tokens;
    return o;
}

RenderOptions probe_render(const RunConfig & c) {
    RenderOptions r;
    r.text_after_image = c.text_after_image;
    return r;
}

std::vector<ConflictSample> concat(std::vector<ConflictSample> a, const std::vector<ConflictSample> & b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::unique_ptr<Backend> backend_for(const RunConfig & c, const std::vector<ConflictSample> & scenes) {
    return make_backend(c.backend_kind, c.backend_params, c.seed, scenes);
}

void write_eval_outputs(Run & r, const std::string & stem, const ReportRow & row, const EvalRun & run) {
    std::ostringstream csv;
    write_report_csv(csv, {row});
    r.artifact(stem + ".csv", csv.str());
    r.artifact(stem + ".json", report_json(row, run).dump(2) + "\n");
    r.plot(stem + "_vision_ratio.svg", [&] {
        std::vector<std::string> labels{"all"};
        std::vector<double> values{row.scores.overall.vision_ratio.value_or(0.0)};
        for (const auto & [task, t] : row.scores.per_task) {
            labels.emplace_back(to_string(task));
            values.push_back(t.vision_ratio.value_or(0.0));
        }
        return svg_bar_chart("Vision Ratio per task (" + row.model_id + ")", labels, values, "vision ratio");
    });
    const auto & o = row.scores.overall;
    r.out << fmt::format("n={} s_vision={:.6f} s_text={:.6f} s_others={:.6f} vision_ratio={} failures={}\n", o.n,
                         o.s_vision, o.s_text, o.s_others, format_ratio(o.vision_ratio), run.failures);
}

struct ProbeOutcome {
    DirectionProfile profile;
    std::vector<ProbePair> pairs;
    LayerWindow window;
    uint32_t layer = 0;
};

std::vector<ConflictSample> probe_samples(const RunConfig & c) {
    const std::string & path = c.probe_dataset_path.empty() ? c.dataset_path : c.probe_dataset_path;
    return stratified_subset(load_samples(path, "probe.dataset_path / dataset_path"), c.probe_n_pairs, c.seed);
}

ProbeOutcome run_probe(Run & r, const Backend & backend, const std::vector<ConflictSample> & subset) {
    ProbeOutcome p;
    p.pairs = collect_probe_pairs(subset, backend, probe_render(r.cfg));
    if (p.pairs.empty()) throw BackendError("no probe pair could be captured");
    p.profile = compute_direction(p.pairs);
    const size_t L = p.profile.num_layers;
    if (r.cfg.probe_window) {
        p.window = {r.cfg.probe_window->first, r.cfg.probe_window->second};
        if (p.window.end > L) throw ConfigError(fmt::format("probe.window end {} exceeds {} layers", p.window.end, L));
    } else {
        p.window = default_window(L);
    }
    p.layer = select_layer(p.profile, p.window);

    save_profile(r.out_dir / "profile", p.profile);
    r.artifacts.push_back(r.out_dir / "profile.bin");
    r.artifacts.push_back(r.out_dir / "profile.json");

    const auto scores = layer_scores(p.profile);
    std::string csv = "layer,mean_abs,std,score,mean_norm,pair_abs,in_window\n";
    for (size_t l = 0; l < L; ++l) {
        csv += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}\n", l, p.profile.mean_abs[l], p.profile.std[l],
                           scores[l], p.profile.mean_norm[l], p.profile.pair_abs[l],
                           l >= p.window.begin && l < p.window.end ? 1 : 0);
    }
    r.artifact("layer_stats.csv", csv);
    r.plot("layer_stats.svg", [&] {
        std::vector<double> xs(L);
        for (size_t l = 0; l < L; ++l) xs[l] = static_cast<double>(l);
        return svg_line_chart("Direction statistics per layer", xs,
                              {{"mean |u|", p.profile.mean_abs}, {"std of pair norms", p.profile.std}}, "layer",
                              "value");
    });
    return p;
}

// Loads steer.vector_path, or probes and builds a fresh vector.
SteeringVector obtain_vector(Run & r, const Backend & backend, const std::vector<ConflictSample> & subset,
                             bool & loaded) {
    SteeringVector v;
    loaded = !r.cfg.steer_vector_path.empty();
    if (loaded) {
        v = load_steering_vector(r.cfg.steer_vector_path);
        if (v.target != r.cfg.steer_target) {
            spdlog::warn("vector targets {}, config asks {}; using the vector's target", to_string(v.target),
                         to_string(r.cfg.steer_target));
        }
    } else {
        const auto p = run_probe(r, backend, subset);
        v = build_steering_vector(p.profile, p.pairs, r.cfg.steer_target, r.cfg.steer_layer_override, &p.window);
    }
    const auto bytes = encode_steering_vector(v);
    r.artifact("steering_vector.msv", bytes);
    return v;
}

int cmd_evaluate(Run & r) {
    const auto samples = load_samples(r.cfg.dataset_path, "dataset_path");
    const auto backend = backend_for(r.cfg, samples);
    const auto run = evaluate(samples, *backend, eval_options(r.cfg));
    ReportRow row{backend->info().model_id, r.cfg.prompt_mode, run.scores, {}, {}, {}, {}};
    write_eval_outputs(r, "evaluate", row, run);
    r.finish();
    return 0;
}

int cmd_probe(Run & r) {
    const auto subset = probe_samples(r.cfg);
    const auto backend = backend_for(r.cfg, subset);
    const auto p = run_probe(r, *backend, subset);
    r.finish();
    r.out << fmt::format("n_pairs={} selected_layer={} window=[{},{})\n", p.profile.n_pairs, p.layer, p.window.begin,
                         p.window.end);
    return 0;
}

int cmd_steer(Run & r) {
    const auto samples = load_samples(r.cfg.dataset_path, "dataset_path");
    const auto subset = r.cfg.steer_vector_path.empty() ? probe_samples(r.cfg) : std::vector<ConflictSample>{};
    const auto backend = backend_for(r.cfg, concat(samples, subset));
    bool loaded = false;
    const auto vec = obtain_vector(r, *backend, subset, loaded);
    SteeringConfig sc;
    sc.lambda = r.cfg.steer_lambda;
    sc.inject_prefill = r.cfg.steer_inject_prefill;
    if (loaded) sc.layer_override = r.cfg.steer_layer_override;
    const auto sr = steer_and_evaluate(samples, *backend, vec, sc, eval_options(r.cfg));
    ReportRow row{backend->info().model_id, r.cfg.prompt_mode, sr.run.scores, sc.lambda, sr.layer, sc.inject_prefill,
                  sr.degenerate};
    r.out << fmt::format("target={} layer={} weight={:.6g} lambda={:g} degenerate={}\n", to_string(vec.target),
                         sr.layer, vec.weight, sc.lambda, sr.degenerate);
    write_eval_outputs(r, "steer", row, sr.run);
    r.finish();
    return 0;
}

int cmd_sweep(Run & r) {
    const auto samples = load_samples(r.cfg.dataset_path, "dataset_path");
    const auto subset = r.cfg.steer_vector_path.empty() ? probe_samples(r.cfg) : std::vector<ConflictSample>{};
    const auto backend = backend_for(r.cfg, concat(samples, subset));
    bool loaded = false;
    const auto vec = obtain_vector(r, *backend, subset, loaded);
    SteeringConfig base;
    base.inject_prefill = r.cfg.steer_inject_prefill;
    if (loaded) base.layer_override = r.cfg.steer_layer_override;
    const auto rows = sweep_intensity(samples, *backend, vec, r.cfg.sweep_lambdas, base, eval_options(r.cfg));

    std::string csv = "lambda,target,score,s_vision,s_text,s_others,vision_ratio,degenerate\n";
    std::vector<double> xs, ys;
    for (const auto & row : rows) {
        const auto & o = row.scores.overall;
        csv += fmt::format("{:g},{},{:.6f},{:.6f},{:.6f},{:.6f},{},{}\n", row.lambda, to_string(vec.target), row.score,
                           o.s_vision, o.s_text, o.s_others, format_ratio(o.vision_ratio), row.degenerate ? 1 : 0);
        xs.push_back(row.lambda);
        ys.push_back(row.score);
    }
    r.artifact("sweep.csv", csv);
    r.plot("sweep.svg", [&] {
        return svg_line_chart("Target score vs steering intensity", xs,
                              {{std::string("s_") + std::string(to_string(vec.target)), ys}}, "lambda", "score");
    });
    r.finish();
    r.out << csv << fmt::format("inverted_u={}\n", is_inverted_u(ys));
    return 0;
}

int cmd_attention(Run & r) {
    const auto samples = load_samples(r.cfg.dataset_path, "dataset_path");
    const auto backend = backend_for(r.cfg, samples);
    const auto opts = eval_options(r.cfg);
    std::vector<AttentionCapture> caps(samples.size());
    parallel_for(samples.size(), backend->info().max_parallel_sessions, [&](size_t i) {
        const auto prompt = render_choice_prompt(samples[i], Ordering::VisionFirst, opts.render);
        const auto req = make_request(prompt, opts.decode);
        caps[i] = backend->capture_attention(req, backend->locate_spans(req, samples[i].text_context));
    });

    AttentionCapture mean;
    mean.num_steps = 1;
    for (size_t i = 0; i < samples.size(); ++i) {
        std::ostringstream os;
        write_attention_csv(os, caps[i]);
        std::string name = samples[i].id;
        for (char & ch : name) {
            if (ch == '/' || ch == '\\') ch = '_';
        }
        r.artifact("attention/" + name + ".csv", os.str());
        const auto prof = attention_ratio(caps[i]);
        if (mean.masses.empty()) {
            mean.num_layers = prof.num_layers;
            mean.masses.assign(prof.num_layers, SpanMasses{});
        }
        for (size_t l = 0; l < prof.num_layers && l < mean.num_layers; ++l) {
            const double w = 1.0 / static_cast<double>(samples.size());
            mean.masses[l].vision += w * prof.mean_masses[l].vision;
            mean.masses[l].text += w * prof.mean_masses[l].text;
            mean.masses[l].other += w * prof.mean_masses[l].other;
        }
    }
    if (mean.masses.empty()) throw DatasetError("dataset is empty");
    const auto prof = attention_ratio(mean);
    std::ostringstream os;
    write_attention_profile_csv(os, prof);
    r.artifact("attention_profile.csv", os.str());
    r.finish();
    r.out << fmt::format("samples={} layers={} attention_ratio={}\n", samples.size(), prof.num_layers,
                         format_ratio(prof.aggregate));
    return 0;
}

int cmd_pca(Run & r) {
    const auto samples = load_samples(r.cfg.dataset_path, "dataset_path");
    const auto subset = stratified_subset(samples, r.cfg.pca_n_per_condition, r.cfg.seed);
    const auto backend = backend_for(r.cfg, subset);
    const auto render = probe_render(r.cfg);
    const auto pairs = collect_probe_pairs(subset, *backend, render);
    if (pairs.empty()) throw BackendError("no hidden states could be captured");

    size_t layer = 0;
    if (r.cfg.pca_layer) {
        layer = *r.cfg.pca_layer;
    } else {
        const auto probe_subset = probe_samples(r.cfg);
        const auto probe_backend = backend_for(r.cfg, probe_subset);
        layer = run_probe(r, *probe_backend, probe_subset).layer;
    }
    Condition baseline{"baseline", {}}, inst_v{"inst_vision", {}}, inst_t{"inst_text", {}};
    std::vector<Vector> base_states(subset.size());
    std::vector<char> ok(subset.size(), 0);
    parallel_for(subset.size(), backend->info().max_parallel_sessions, [&](size_t i) {
        try {
            const auto m = backend->capture_hidden_states(
                make_request(render_choice_prompt(subset[i], Ordering::VisionFirst, render)));
            if (layer >= m.num_layers) return;
            const auto row = m.row(layer);
            base_states[i].assign(row.begin(), row.end());
            ok[i] = 1;
        } catch (const Error & e) {
            spdlog::warn("baseline capture failed for '{}': {}", subset[i].id, e.what());
        }
    });
    for (size_t i = 0; i < subset.size(); ++i) {
        if (ok[i]) baseline.states.push_back(std::move(base_states[i]));
    }
    for (const auto & p : pairs) {
        if (layer >= p.x_text.num_layers) throw ConfigError(fmt::format("pca.layer {} out of range", layer));
        inst_v.states.emplace_back(p.x_vision.row(layer).begin(), p.x_vision.row(layer).end());
        inst_t.states.emplace_back(p.x_text.row(layer).begin(), p.x_text.row(layer).end());
    }
    const auto res = pca_project({baseline, inst_v, inst_t}, 2);
    std::ostringstream os;
    write_projection_csv(os, res);
    r.artifact("projection.csv", os.str());
    r.plot("pca.svg", [&] {
        std::vector<ScatterGroup> groups;
        for (const auto & s : res.sets) {
            ScatterGroup g{s.label, {}, std::make_pair(s.centroid[0], s.centroid[1])};
            for (const auto & pt : s.points) g.points.emplace_back(pt[0], pt[1]);
            groups.push_back(std::move(g));
        }
        return svg_scatter(fmt::format("Hidden states at layer {}", layer), groups);
    });
    r.finish();
    r.out << fmt::format("layer={} explained_variance={:.6g},{:.6g}\n", layer, res.explained_variance[0],
                         res.explained_variance[1]);
    for (const auto & s : res.sets) {
        r.out << fmt::format("centroid {} {:.6f} {:.6f}\n", s.label, s.centroid[0], s.centroid[1]);
    }
    return 0;
}

int cmd_report(Run & r) {
    if (r.cfg.report_vr_csv.empty() || r.cfg.report_acc_csv.empty()) {
        throw ConfigError("report.vr_csv and report.acc_csv must both be set");
    }
    const auto vr = load_csv(r.cfg.report_vr_csv);
    const auto acc = load_csv(r.cfg.report_acc_csv);
    const auto pairs = join_columns(vr, r.cfg.report_vr_column, acc, r.cfg.report_acc_column, r.cfg.report_key);
    std::vector<double> xs, ys;
    for (const auto & [x, y] : pairs) {
        xs.push_back(x);
        ys.push_back(y);
    }
    const auto rho = spearman_rho(xs, ys);
    nlohmann::ordered_json j;
    j["n"] = pairs.size();
    j["x_column"] = r.cfg.report_vr_column;
    j["y_column"] = r.cfg.report_acc_column;
    j["spearman_rho"] = rho ? nlohmann::ordered_json(*rho) : nlohmann::ordered_json(nullptr);
    r.artifact("report.json", j.dump(2) + "\n");
    r.plot("report.svg", [&] {
        return svg_scatter(fmt::format("{} vs {} (rho = {})", r.cfg.report_vr_column, r.cfg.report_acc_column,
                                       format_ratio(rho)),
                           {{"models", pairs, std::nullopt}});
    });
    r.finish();
    r.out << fmt::format("n={} spearman_rho={}\n", pairs.size(), format_ratio(rho));
    return 0;
}

// Offline client: replays canned replies for one seed in order.
class ReplayClient : public GenerationClient {
public:
    explicit ReplayClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    std::string id() const override { return "replay"; }
    std::string send(const std::string &) override {
        if (next_ >= replies_.size()) throw BackendError("replay client has no reply left");
        return replies_[next_++];
    }

private:
    std::vector<std::string> replies_;
    size_t next_ = 0;
};

std::map<std::string, std::vector<std::string>> load_replies(const fs::path & path) {
    std::map<std::string, std::vector<std::string>> out;
    std::istringstream in(read_file(path));
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            auto & v = out[j.at("id").get<std::string>()];
            for (const auto & t : j.at("replies")) v.push_back(t.get<std::string>());
        } catch (const nlohmann::json::exception & e) {
            throw ParseError(fmt::format("{} line {}: {}", path.string(), n, e.what()));
        }
    }
    return out;
}

nlohmann::ordered_json candidate_json(const CandidateContext & c) {
    nlohmann::ordered_json j;
    j["sample_id"] = c.sample_id;
    j["distractor_answer"] = c.distractor_answer;
    j["context"] = c.context;
    j["template_id"] = to_string(c.template_id);
    j["client_id"] = c.client_id;
    return j;
}

std::vector<CandidateContext> load_candidates(const fs::path & path) {
    std::vector<CandidateContext> out;
    std::istringstream in(read_file(path));
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            CandidateContext c;
            c.sample_id = j.at("sample_id").get<std::string>();
            c.distractor_answer = j.at("distractor_answer").get<std::string>();
            c.context = j.at("context").get<std::string>();
            const auto t = parse_template_id(j.at("template_id").get<std::string>());
            if (!t) throw ParseError("unknown template_id");
            c.template_id = *t;
            c.client_id = j.value("client_id", "");
            out.push_back(std::move(c));
        } catch (const nlohmann::json::exception & e) {
            throw ParseError(fmt::format("{} line {}: {}", path.string(), n, e.what()));
        } catch (const ParseError & e) {
            throw ParseError(fmt::format("{} line {}: {}", path.string(), n, e.what()));
        }
    }
    return out;
}

int cmd_forge_generate(Run & r) {
    if (r.cfg.forge_seeds.empty()) throw ConfigError("forge.seeds is not set");
    const auto seeds = load_seeds(r.cfg.forge_seeds);
    std::map<std::string, std::vector<std::string>> replies;
    if (!r.cfg.forge_responses.empty()) {
        replies = load_replies(r.cfg.forge_responses);
    } else if (r.cfg.forge_endpoint.empty()) {
        throw ConfigError("set forge.endpoint or forge.responses");
    }
    std::vector<std::vector<CandidateAttempt>> attempts(seeds.size());
    parallel_for(seeds.size(), 4, [&](size_t i) {
        std::unique_ptr<GenerationClient> client;
        if (!r.cfg.forge_responses.empty()) {
            const auto it = replies.find(seeds[i].id);
            client = std::make_unique<ReplayClient>(it == replies.end() ? std::vector<std::string>{} : it->second);
        } else {
            client = std::make_unique<HttpGenerationClient>(r.cfg.forge_endpoint, r.cfg.forge_endpoint);
        }
        attempts[i] = generate_candidate(seeds[i], *client);
    });
    std::string cands, log;
    size_t ok = 0;
    for (size_t i = 0; i < seeds.size(); ++i) {
        for (const auto & a : attempts[i]) {
            nlohmann::ordered_json j;
            j["sample_id"] = seeds[i].id;
            j["template_id"] = to_string(a.template_id);
            j["ok"] = a.candidate.has_value();
            j["error"] = a.error;
            log += j.dump() + "\n";
            if (a.candidate) {
                cands += candidate_json(*a.candidate).dump() + "\n";
                ++ok;
            }
        }
    }
    r.artifact("candidates.jsonl", cands);
    r.artifact("forge_attempts.jsonl", log);
    r.finish();
    r.out << fmt::format("seeds={} candidates={}\n", seeds.size(), ok);
    return 0;
}

int cmd_forge_judge(Run & r) {
    if (r.cfg.forge_seeds.empty()) throw ConfigError("forge.seeds is not set");
    if (r.cfg.forge_judges.empty()) throw ConfigError("forge.judges is empty");
    const auto seeds = load_seeds(r.cfg.forge_seeds);
    const fs::path cand_path =
        r.cfg.forge_candidates.empty() ? r.out_dir / "candidates.jsonl" : fs::path(r.cfg.forge_candidates);
    const auto cands = load_candidates(cand_path);
    std::map<std::string, const SeedSample *> by_id;
    for (const auto & s : seeds) by_id[s.id] = &s;

    std::vector<ConflictSample> scenes;
    for (const auto & c : cands) {
        const auto it = by_id.find(c.sample_id);
        if (it == by_id.end()) throw DatasetError("candidate for unknown seed '" + c.sample_id + "'");
        scenes.push_back(make_conflict(*it->second, c));
    }
    std::vector<std::unique_ptr<Backend>> owned;
    std::vector<const Backend *> judges;
    for (const auto & jj : r.cfg.forge_judges) {
        if (!jj.is_object()) throw ConfigError("each forge.judges entry must be an object");
        const std::string kind = jj.value("kind", "toy");
        const auto params = jj.contains("params") ? jj["params"] : nlohmann::ordered_json::object();
        owned.push_back(make_backend(kind, params, r.cfg.seed, scenes));
        judges.push_back(owned.back().get());
    }

    EvalOptions opts = eval_options(r.cfg);
    opts.render.mode = PromptMode::Neutral;
    std::vector<JudgeResult> results(cands.size());
    parallel_for(cands.size(), 4, [&](size_t i) {
        results[i] = judge_filter(cands[i], *by_id.at(cands[i].sample_id), judges, opts);
    });

    std::string judged;
    std::vector<ReviewItem> queue;
    std::map<JudgeStatus, size_t> counts;
    for (size_t i = 0; i < cands.size(); ++i) {
        const auto & res = results[i];
        ++counts[res.status];
        auto j = candidate_json(cands[i]);
        j["status"] = to_string(res.status);
        j["reason"] = res.reason;
        nlohmann::ordered_json vs = nlohmann::ordered_json::array();
        for (const auto & v : res.verdicts) {
            vs.push_back({{"judge_id", v.judge_id},
                          {"text_correct", v.text_correct},
                          {"vision_correct", v.vision_correct},
                          {"error", v.error ? nlohmann::ordered_json(*v.error) : nlohmann::ordered_json(nullptr)}});
        }
        j["verdicts"] = vs;
        judged += j.dump() + "\n";
        if (res.status == JudgeStatus::Pass) {
            queue.push_back({scenes[i], cands[i].template_id, cands[i].client_id});
        }
    }
    r.artifact("judged.jsonl", judged);
    const fs::path queue_path = r.cfg.forge_queue.empty() ? r.out_dir / "queue.jsonl" : fs::path(r.cfg.forge_queue);
    export_verification(queue_path, queue);
    r.artifacts.push_back(queue_path);
    r.finish();
    r.out << fmt::format("candidates={} pass={} fail={} deferred={}\n", cands.size(), counts[JudgeStatus::Pass],
                         counts[JudgeStatus::Fail], counts[JudgeStatus::Deferred]);
    return 0;
}

int cmd_forge_import(Run & r) {
    const fs::path queue_path = r.cfg.forge_queue.empty() ? r.out_dir / "queue.jsonl" : fs::path(r.cfg.forge_queue);
    const auto accepted = import_verification(queue_path);
    save_dataset(r.out_dir / "accepted.jsonl", accepted);
    r.artifacts.push_back(r.out_dir / "accepted.jsonl");
    r.finish();
    r.out << fmt::format("accepted={}\n", accepted.size());
    return 0;
}

// Leaf paths of the default config, each exposed as --<dotted.path>.
void leaf_paths(const nlohmann::ordered_json & j, const std::string & prefix, std::vector<std::string> & out) {
    for (const auto & [k, v] : j.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object() && path != "backend.params") {
            leaf_paths(v, path, out);
        } else {
            out.push_back(path);
        }
    }
}

std::string error_json(const std::string & kind, const std::string & message) {
    nlohmann::ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    return j.dump();
}

} // namespace

int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    CLI::App app{"Modality-preference evaluation and steering toolkit", "modsteer"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "JSON run config (falls back to $MODSTEER_CONFIG)");

    std::vector<std::string> paths;
    leaf_paths(default_run_config(), "", paths);
    std::map<std::string, std::string> dotted;
    for (const auto & p : paths) {
        app.add_option("--" + p, dotted[p], "override " + p)->group("Config overrides");
    }
    // Short aliases, applied after the dotted forms.
    const std::vector<std::pair<std::string, std::string>> alias_keys = {
        {"lambda", "steer.lambda"}, {"target", "steer.target"}, {"layer", "steer.layer_override"},
        {"dataset", "dataset_path"}, {"output", "output_dir"},  {"mode", "prompt_mode"},
    };
    std::map<std::string, std::string> aliases;
    for (const auto & [a, key] : alias_keys) {
        app.add_option("--" + a, aliases[a], "alias for --" + key)->group("Aliases");
    }
    std::vector<std::string> sets;
    app.add_option("--set", sets, "KEY=VALUE override, e.g. backend.params.gate_offset=1.5")
        ->group("Config overrides");

    auto * evaluate_cmd = app.add_subcommand("evaluate", "swap-order preference evaluation report");
    auto * probe_cmd = app.add_subcommand("probe", "direction profile and layer statistics");
    auto * steer_cmd = app.add_subcommand("steer", "build or load a steering vector and evaluate under it");
    auto * sweep_cmd = app.add_subcommand("sweep", "target score over steer.lambdas");
    auto * attention_cmd = app.add_subcommand("attention", "per-layer attention mass on vision and text spans");
    auto * pca_cmd = app.add_subcommand("pca", "2-D projection of hidden states per instruction condition");
    auto * report_cmd = app.add_subcommand("report", "Spearman rho between two CSV columns");
    auto * forge_cmd = app.add_subcommand("forge", "conflict-context generation pipeline");
    forge_cmd->require_subcommand(1);
    forge_cmd->fallthrough();
    auto * forge_gen = forge_cmd->add_subcommand("generate", "candidate contexts from seeds");
    auto * forge_judge = forge_cmd->add_subcommand("judge", "weak-judge filter and review-queue export");
    auto * forge_import = forge_cmd->add_subcommand("import", "accepted samples from a reviewed queue");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError & e) {
        err << app.help() << "\n" << error_json("usage", e.what()) << "\n";
        return 2;
    }

    std::string command = "modsteer";
    for (size_t i = 1; i < args.size(); ++i) command += " " + args[i];

    try {
        if (config_path.empty()) {
            if (const char * env = std::getenv("MODSTEER_CONFIG"); env && *env) config_path = env;
        }
        auto cfg_json = load_run_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path));
        for (const auto & p : paths) {
            if (app.count("--" + p) > 0) apply_override(cfg_json, p, dotted[p]);
        }
        for (const auto & [a, key] : alias_keys) {
            if (app.count("--" + a) > 0) apply_override(cfg_json, key, aliases[a]);
        }
        for (const auto & s : sets) {
            const size_t eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
            apply_override(cfg_json, s.substr(0, eq), s.substr(eq + 1));
        }
        Run run{cfg_json, resolve_run_config(cfg_json), command, {}, {}, out};
        run.out_dir = run.cfg.output_dir;
        fs::create_directories(run.out_dir);

        if (evaluate_cmd->parsed()) return cmd_evaluate(run);
        if (probe_cmd->parsed()) return cmd_probe(run);
        if (steer_cmd->parsed()) return cmd_steer(run);
        if (sweep_cmd->parsed()) return cmd_sweep(run);
        if (attention_cmd->parsed()) return cmd_attention(run);
        if (pca_cmd->parsed()) return cmd_pca(run);
        if (report_cmd->parsed()) return cmd_report(run);
        if (forge_gen->parsed()) return cmd_forge_generate(run);
        if (forge_judge->parsed()) return cmd_forge_judge(run);
        if (forge_import->parsed()) return cmd_forge_import(run);
        err << error_json("usage", "no command") << "\n";
        return 2;
    } catch (const Error & e) {
        err << error_json(e.kind(), e.what()) << "\n";
        return 1;
    } catch (const std::exception & e) {
        err << error_json("internal", e.what()) << "\n";
        return 1;
    }
}

} // namespace modsteer
