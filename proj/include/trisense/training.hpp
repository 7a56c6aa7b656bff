// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/model.hpp"
#include "trisense/synth.hpp"

namespace trisense {

enum class OptimizerKind { SgdMomentum, Adam };
std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

// Stage 0 trains every group at once; stages 1-3 follow the staged recipe.
std::set<std::string> trainable_groups(int stage);

struct StageConfig {
    int stage = 0;
    std::size_t steps = 500;
    std::size_t batch = 8;
    double lr = 0.05;
    double momentum = 0.9;
    double min_lr_fraction = 0.0;
    double clip_norm = 1.0;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json stage_config_to_json(const StageConfig& c);
StageConfig stage_config_from_json(const nlohmann::json& doc);

struct TrainingExample {
    ModelInput input;
    std::vector<TokenId> response;
};

// Stateful optimizer over a fixed list of parameters.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double momentum);
    void step(ParameterStore& params, const std::vector<std::string>& names, double lr);

private:
    OptimizerKind kind_;
    double momentum_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

double cosine_lr(const StageConfig& c, std::size_t step);

struct StepLog {
    std::size_t step = 0;
    double lr = 0.0;
    double nats_per_token = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<StepLog> log;
    std::vector<std::string> trained;
    std::vector<std::string> frozen;
};

// Trains the stage's groups on examples drawn with the stage seed. Frozen
// parameters never receive gradients; a nonzero frozen gradient throws.
TrainResult train(TriSenseModel& model, const std::vector<TrainingExample>& examples, const StageConfig& config,
                  const std::function<void(const StepLog&)>& on_step = {});

std::vector<TrainingExample> synth_examples(const SynthCorpus& corpus, const Vocabulary& vocab,
                                            std::optional<Task> only = std::nullopt);

// Model sized to the synthetic corpus and vocabulary.
ModelConfig bench_model_config(const SynthCorpus& corpus, const Vocabulary& vocab);

struct Prediction {
    std::string sample_id;
    Task task = Task::MR;
    std::string modality_set;
    std::optional<TimeSpan> pred_span;
    TimeSpan gold_span;
    std::vector<std::string> pred_caption;
    std::vector<std::string> gold_caption;
    ModalityWeights weights;
};

nlohmann::json prediction_to_json(const Prediction& p);

using PresentFn = std::function<ModalitySet(const SyntheticQuery&)>;

// Runs MR and/or SC for each query. `present_for` replaces the query's own
// modality set when given.
std::vector<Prediction> evaluate(const TriSenseModel& model, const SynthCorpus& corpus, const Vocabulary& vocab,
                                 std::optional<Task> only = std::nullopt, const PresentFn& present_for = {});

}  // namespace trisense
