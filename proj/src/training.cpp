// SPDX-License-Identifier: Apache-2.0
#include "trisense/training.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace trisense {

std::string_view optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::Adam ? "adam" : "sgd-momentum";
}

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "adam") return OptimizerKind::Adam;
    if (text == "sgd" || text == "sgd-momentum") return OptimizerKind::SgdMomentum;
    throw std::invalid_argument("unknown optimizer: " + std::string(text));
}

std::set<std::string> trainable_groups(int stage) {
    switch (stage) {
        case 0: return {"connector", "time_encoder", "time_head", "lm_head", "backbone"};
        case 1: return {"connector", "lm_head"};
        case 2: return {"connector", "time_encoder", "time_head", "lm_head"};
        case 3: return {"time_encoder", "time_head", "lm_head", "backbone"};
        default: throw ParameterError("stage must be 0 (joint), 1, 2 or 3, got " + std::to_string(stage));
    }
}

void StageConfig::validate() const {
    trainable_groups(stage);
    if (steps == 0 || batch == 0) throw ParameterError("steps and batch must be positive");
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ParameterError("momentum must lie in [0, 1)");
    if (min_lr_fraction < 0.0 || min_lr_fraction > 1.0) throw ParameterError("min_lr_fraction must lie in [0, 1]");
    if (clip_norm < 0.0) throw ParameterError("clip_norm must be nonnegative (0 disables clipping)");
}

nlohmann::json stage_config_to_json(const StageConfig& c) {
    return {{"stage", c.stage},
            {"steps", c.steps},
            {"batch", c.batch},
            {"lr", c.lr},
            {"momentum", c.momentum},
            {"min_lr_fraction", c.min_lr_fraction},
            {"clip_norm", c.clip_norm},
            {"optimizer", std::string(optimizer_name(c.optimizer))},
            {"seed", c.seed}};
}

StageConfig stage_config_from_json(const nlohmann::json& doc) {
    StageConfig c;
    c.stage = doc.value("stage", c.stage);
    c.steps = doc.value("steps", c.steps);
    c.batch = doc.value("batch", c.batch);
    c.lr = doc.value("lr", c.lr);
    c.momentum = doc.value("momentum", c.momentum);
    c.min_lr_fraction = doc.value("min_lr_fraction", c.min_lr_fraction);
    c.clip_norm = doc.value("clip_norm", c.clip_norm);
    c.optimizer = parse_optimizer(doc.value("optimizer", std::string(optimizer_name(c.optimizer))));
    c.seed = doc.value("seed", c.seed);
    c.validate();
    return c;
}

Optimizer::Optimizer(OptimizerKind kind, double momentum) : kind_(kind), momentum_(momentum) {}

void Optimizer::step(ParameterStore& params, const std::vector<std::string>& names, double lr) {
    ++t_;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const double bc1 = 1.0 - std::pow(momentum_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (const auto& name : names) {
        Tensor& p = params.get(name);
        auto w = p.values();
        auto g = p.grad();
        auto& m = m_[name];
        if (m.empty()) m.assign(w.size(), 0.0);
        if (kind_ == OptimizerKind::SgdMomentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = momentum_ * m[i] + g[i];
                w[i] -= lr * m[i];
            }
            continue;
        }
        auto& v = v_[name];
        if (v.empty()) v.assign(w.size(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = momentum_ * m[i] + (1.0 - momentum_) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

double cosine_lr(const StageConfig& c, std::size_t step) {
    const double progress = static_cast<double>(step) / static_cast<double>(c.steps);
    const double shape = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return c.lr * (c.min_lr_fraction + (1.0 - c.min_lr_fraction) * shape);
}

namespace {

// Restores requires_grad on every parameter when training ends or throws.
class FreezeGuard {
public:
    FreezeGuard(ParameterStore& params, const std::set<std::string>& groups) : params_(params) {
        for (auto& [name, t] : params_) {
            saved_.emplace_back(name, t.requires_grad());
            t.set_requires_grad(groups.count(ParameterStore::group_of(name)) != 0);
            t.drop_grad();
        }
    }
    ~FreezeGuard() {
        for (const auto& [name, on] : saved_) params_.get(name).set_requires_grad(on);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParameterStore& params_;
    std::vector<std::pair<std::string, bool>> saved_;
};

}  // namespace

TrainResult train(TriSenseModel& model, const std::vector<TrainingExample>& examples, const StageConfig& config,
                  const std::function<void(const StepLog&)>& on_step) {
    config.validate();
    if (examples.empty()) throw std::invalid_argument("training needs at least one example");
    const auto groups = trainable_groups(config.stage);
    ParameterStore& params = model.params();
    TrainResult result;
    for (const auto& [name, t] : params) {
        (groups.count(ParameterStore::group_of(name)) ? result.trained : result.frozen).push_back(name);
    }
    FreezeGuard guard(params, groups);
    Optimizer optimizer(config.optimizer, config.momentum);
    std::mt19937_64 rng(config.seed);

    for (std::size_t step = 0; step < config.steps; ++step) {
        for (const auto& name : result.trained) params.get(name).zero_grad();
        double nll = 0.0;
        std::size_t tokens = 0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const auto& ex = examples[rng() % examples.size()];
            Graph g;
            auto loss = model.response_nll(g, ex.input, ex.response);
            nll += loss.total.item();
            tokens += loss.scored_tokens;
            if (loss.scored_tokens == 0) continue;
            g.backward(g.scale(loss.total, 1.0 / static_cast<double>(loss.scored_tokens * config.batch)));
        }
        for (const auto& name : result.frozen) {
            const Tensor& t = params.get(name);
            if (!t.has_grad()) continue;
            for (double v : t.grad()) {
                if (v != 0.0) throw std::logic_error("frozen parameter " + name + " received a gradient");
            }
        }
        double sq = 0.0;
        for (const auto& name : result.trained) {
            for (double v : params.get(name).grad()) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) throw std::runtime_error("non-finite gradient at step " + std::to_string(step));
        if (config.clip_norm > 0.0 && norm > config.clip_norm) {
            const double s = config.clip_norm / norm;
            for (const auto& name : result.trained) {
                for (double& v : params.get(name).grad()) v *= s;
            }
        }
        StepLog log{step, cosine_lr(config, step), tokens ? nll / static_cast<double>(tokens) : 0.0, norm};
        optimizer.step(params, result.trained, log.lr);
        result.log.push_back(log);
        if (on_step) on_step(log);
    }
    for (const auto& name : result.trained) params.get(name).drop_grad();
    return result;
}

std::vector<TrainingExample> synth_examples(const SynthCorpus& corpus, const Vocabulary& vocab,
                                            std::optional<Task> only) {
    std::vector<TrainingExample> out;
    for (const auto& q : corpus.queries) {
        if (only && q.task != *only) continue;
        out.push_back({make_input(corpus, q, vocab, q.present), gold_response(q, vocab)});
    }
    return out;
}

ModelConfig bench_model_config(const SynthCorpus& corpus, const Vocabulary& vocab) {
    ModelConfig c;
    c.connector.dim = corpus.config.dim;
    c.connector.llm_dim = 64;
    c.connector.mlp_hidden = 128;
    c.decoder.layers = 2;
    c.decoder.heads = 4;
    c.decoder.mlp_hidden = 128;
    c.decoder.time_embed_dim = 8;
    c.decoder.max_positions = corpus.config.frames + 80;
    c.vocab_size = vocab.size();
    return c;
}

nlohmann::json prediction_to_json(const Prediction& p) {
    nlohmann::json j{{"sample_id", p.sample_id}, {"task", std::string(task_name(p.task))},
                     {"modality_set", p.modality_set}};
    if (p.task == Task::MR) {
        j["pred_span"] = p.pred_span ? nlohmann::json::array({p.pred_span->start, p.pred_span->end}) : nlohmann::json();
        j["gold_span"] = {p.gold_span.start, p.gold_span.end};
    } else {
        j["pred_caption"] = p.pred_caption;
        j["gold_caption"] = p.gold_caption;
    }
    j["weights"] = {{"w_v", p.weights[Modality::Vision]},
                    {"w_a", p.weights[Modality::Audio]},
                    {"w_s", p.weights[Modality::Speech]},
                    {"present", p.weights.present.names()}};
    return j;
}

std::vector<Prediction> evaluate(const TriSenseModel& model, const SynthCorpus& corpus, const Vocabulary& vocab,
                                 std::optional<Task> only, const PresentFn& present_for) {
    std::vector<Prediction> out;
    for (const auto& q : corpus.queries) {
        if (only && q.task != *only) continue;
        const ModalitySet present = present_for ? present_for(q) : q.present;
        const ModelInput input = make_input(corpus, q, vocab, present);
        Graph g(Graph::Mode::Inference);
        const EncodedContext ctx = model.encode(g, input);
        Prediction p;
        p.sample_id = q.id;
        p.task = q.task;
        p.modality_set = present.label();
        p.gold_span = q.gold;
        p.gold_caption = q.caption;
        p.weights = ctx.connector.weight_values.at(0);
        DecodeLimits limits;
        limits.duration = input.duration;
        if (q.task == Task::MR) {
            limits.max_events = 1;
            limits.max_tokens = 48;
            auto r = model.generate(ctx, limits);
            if (!r.events.empty()) {
                p.pred_span = r.events.front().span;
                for (auto id : r.events.front().caption) p.pred_caption.push_back(vocab.text(id));
            }
        } else {
            limits.captions_only = true;
            limits.max_tokens = 32;
            for (auto id : model.generate(ctx, limits).text) p.pred_caption.push_back(vocab.text(id));
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace trisense
