#include "modsteer/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"

namespace modsteer {

AttentionProfile attention_ratio(const AttentionCapture & capture) {
    if (capture.num_steps == 0 || capture.num_layers == 0 ||
        capture.masses.size() != capture.num_steps * capture.num_layers) {
        throw ValidationError("attention capture is empty or malformed");
    }
    AttentionProfile p;
    p.num_layers = capture.num_layers;
    p.num_steps = capture.num_steps;
    p.mean_masses.assign(p.num_layers, SpanMasses{});
    const double steps = static_cast<double>(capture.num_steps);
    for (size_t l = 0; l < p.num_layers; ++l) {
        SpanMasses & m = p.mean_masses[l];
        for (size_t s = 0; s < capture.num_steps; ++s) {
            const SpanMasses & x = capture.at(s, l);
            m.vision += x.vision;
            m.text += x.text;
            m.other += x.other;
        }
        m.vision /= steps;
        m.text /= steps;
        m.other /= steps;
    }
    p.ratio.resize(p.num_layers);
    double sum = 0.0;
    size_t defined = 0;
    for (size_t l = 0; l < p.num_layers; ++l) {
        const double denom = p.mean_masses[l].vision + p.mean_masses[l].text;
        if (denom > 0.0) {
            p.ratio[l] = p.mean_masses[l].vision / denom;
            sum += *p.ratio[l];
            ++defined;
        } else {
            spdlog::warn("layer {}: no attention mass on vision or text context", l);
        }
    }
    if (defined > 0) p.aggregate = sum / static_cast<double>(defined);
    return p;
}

void write_attention_csv(std::ostream & os, const AttentionCapture & capture) {
    os << "layer,step,span,mass\n";
    for (size_t l = 0; l < capture.num_layers; ++l) {
        for (size_t s = 0; s < capture.num_steps; ++s) {
            const SpanMasses & m = capture.at(s, l);
            os << fmt::format("{},{},vision,{:.8f}\n", l, s, m.vision);
            os << fmt::format("{},{},text,{:.8f}\n", l, s, m.text);
            os << fmt::format("{},{},other,{:.8f}\n", l, s, m.other);
        }
    }
}

void write_attention_profile_csv(std::ostream & os, const AttentionProfile & p) {
    os << "layer,vision_mass,text_mass,other_mass,attention_ratio\n";
    for (size_t l = 0; l < p.num_layers; ++l) {
        const SpanMasses & m = p.mean_masses[l];
        os << fmt::format("{},{:.8f},{:.8f},{:.8f},", l, m.vision, m.text, m.other) << format_ratio(p.ratio[l])
           << '\n';
    }
    os << "mean,,,," << format_ratio(p.aggregate) << '\n';
}

PcaResult pca_project(const std::vector<Condition> & conditions, size_t k) {
    if (conditions.empty()) throw ValidationError("pca needs at least one condition");
    if (k == 0) throw ValidationError("pca needs k >= 1");
    const size_t d = conditions.front().states.empty() ? 0 : conditions.front().states.front().size();
    size_t n = 0;
    for (const auto & c : conditions) {
        if (c.states.size() < 3) {
            throw ValidationError("condition '" + c.label + "' has " + std::to_string(c.states.size()) +
                                  " states; pca needs at least 3");
        }
        for (const auto & s : c.states) {
            if (s.size() != d) throw ValidationError("condition '" + c.label + "' mixes state dimensions");
        }
        n += c.states.size();
    }
    if (d < k || n - 1 < k) {
        throw ValidationError(fmt::format("rank deficiency: {} points in dimension {} cannot span {} components", n,
                                          d, k));
    }

    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::Index row = 0;
    for (const auto & c : conditions) {
        for (const auto & s : c.states) {
            X.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(s.data(), static_cast<Eigen::Index>(d));
        }
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - mean;
    const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw ValidationError("covariance eigendecomposition failed");

    PcaResult r;
    r.mean.assign(mean.data(), mean.data() + d);
    const Eigen::Index top = static_cast<Eigen::Index>(d) - 1;
    Eigen::MatrixXd W(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    for (size_t i = 0; i < k; ++i) {
        Eigen::VectorXd v = es.eigenvectors().col(top - static_cast<Eigen::Index>(i));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        W.col(static_cast<Eigen::Index>(i)) = v;
        r.components.emplace_back(v.data(), v.data() + d);
        r.explained_variance.push_back(std::max(0.0, es.eigenvalues()(top - static_cast<Eigen::Index>(i))));
    }
    const Eigen::MatrixXd P = C * W;

    row = 0;
    for (const auto & c : conditions) {
        ProjectionSet set;
        set.label = c.label;
        set.centroid.assign(k, 0.0);
        for (size_t i = 0; i < c.states.size(); ++i, ++row) {
            Vector pt(k);
            for (size_t j = 0; j < k; ++j) {
                pt[j] = P(row, static_cast<Eigen::Index>(j));
                set.centroid[j] += pt[j];
            }
            set.points.push_back(std::move(pt));
        }
        for (auto & v : set.centroid) v /= static_cast<double>(c.states.size());
        r.sets.push_back(std::move(set));
    }
    return r;
}

void write_projection_csv(std::ostream & os, const PcaResult & r) {
    os << "condition,x,y\n";
    auto coord = [](const Vector & v, size_t j) { return j < v.size() ? v[j] : 0.0; };
    for (const auto & s : r.sets) {
        for (const auto & p : s.points) os << fmt::format("{},{:.8f},{:.8f}\n", s.label, coord(p, 0), coord(p, 1));
    }
    for (const auto & s : r.sets) {
        os << fmt::format("centroid:{},{:.8f},{:.8f}\n", s.label, coord(s.centroid, 0), coord(s.centroid, 1));
    }
}

ReliabilityPrediction predict_reliable_modality(const ConflictSample & s, const Backend & backend,
                                                const RenderOptions & base) {
    const BackendInfo bi = backend.info();
    if (!bi.supports_choice_probabilities) {
        throw CapabilityError("backend '" + bi.model_id + "' does not expose answer-choice probabilities");
    }
    auto probs = [&](ContextSelection sel) {
        RenderOptions o = base;
        o.contexts = sel;
        return backend.choice_probabilities(make_request(render_choice_prompt(s, Ordering::VisionFirst, o)));
    };
    const ChoiceProbabilities full = probs(ContextSelection::Both);
    const ChoiceProbabilities no_image = probs(ContextSelection::TextOnly);
    const ChoiceProbabilities no_text = probs(ContextSelection::VisionOnly);
    const bool top_a = full.a >= full.b;
    auto top = [&](const ChoiceProbabilities & p) { return top_a ? p.a : p.b; };

    ReliabilityPrediction r;
    r.drop_vision = top(full) - top(no_image);
    r.drop_text = top(full) - top(no_text);
    r.margin = std::abs(r.drop_vision - r.drop_text);
    if (r.drop_vision == r.drop_text) {
        r.tie = true;
        r.margin = 0.0;
        r.modality = Modality::Vision;
        spdlog::info("sample '{}': equal ablation drops, defaulting to vision", s.id);
    } else {
        r.modality = r.drop_vision > r.drop_text ? Modality::Vision : Modality::Text;
    }
    return r;
}

Modality majority_vote(const std::vector<Modality> & votes) {
    if (votes.empty()) throw ValidationError("majority vote over an empty list");
    const auto text = std::count(votes.begin(), votes.end(), Modality::Text);
    return 2 * static_cast<size_t>(text) > votes.size() ? Modality::Text : Modality::Vision;
}

std::map<TaskType, Modality> majority_by_task(const std::vector<ConflictSample> & samples,
                                              const std::vector<Modality> & votes) {
    if (samples.size() != votes.size()) throw ValidationError("one vote per sample required");
    std::map<TaskType, std::vector<Modality>> by_task;
    for (size_t i = 0; i < samples.size(); ++i) by_task[samples[i].task_type].push_back(votes[i]);
    std::map<TaskType, Modality> out;
    for (const auto & [task, v] : by_task) out[task] = majority_vote(v);
    return out;
}

} // namespace modsteer
