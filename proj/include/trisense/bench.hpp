// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/model.hpp"
#include "trisense/synth.hpp"
#include "trisense/training.hpp"

namespace trisense {

// Connector ablation on the synthetic MR corpus. Each seed draws its own
// corpus; the first `train_videos` videos train, the rest are held out.
struct BenchConfig {
    SynthConfig synth = bench_synth_config();
    std::size_t train_videos = 1000;
    std::size_t test_videos = 100;
    // Single-modality MR warm-up shared by every variant. With one modality
    // present all fusion modes compute the same function, so this phase is
    // trained once per seed and copied into each variant.
    std::size_t warmup_steps = 1000;
    std::size_t steps = 1500;
    std::size_t batch = 8;
    double lr = 0.002;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double temperature = 1.0;

    void validate() const;
};

nlohmann::json bench_config_to_json(const BenchConfig& c);
BenchConfig bench_config_from_json(const nlohmann::json& doc);

struct BenchData {
    SynthCorpus corpus;  // every video; queries of both splits
    SynthCorpus train;   // same videos, training queries only
    SynthCorpus test;    // same videos, held-out queries only
    Vocabulary vocab;
};

BenchData make_bench_data(const BenchConfig& config, std::uint64_t seed);
ModelConfig bench_model(const BenchData& data, const BenchConfig& config, FusionMode mode);

// Warm-up phase; returns the initial parameters every variant starts from.
ParameterStore bench_init(const BenchData& data, const BenchConfig& config, std::uint64_t seed,
                          const std::function<void(const StepLog&)>& on_step = {});
TriSenseModel train_variant(const BenchData& data, const BenchConfig& config, FusionMode mode,
                            const ParameterStore& init, std::uint64_t seed,
                            const std::function<void(const StepLog&)>& on_step = {});

struct MrScore {
    double r05 = 0.0;
    double r07 = 0.0;
    double miou = 0.0;
    std::vector<Prediction> predictions;
};

// MR over the held-out queries with the given modality set.
MrScore score_mr(const TriSenseModel& model, const BenchData& data, ModalitySet present);

class BudgetMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct VariantBudget {
    FusionMode mode = FusionMode::Adaptive;
    std::size_t warmup_steps = 0;
    std::size_t steps = 0;
    std::size_t batch = 0;
    double lr = 0.0;
    std::vector<std::uint64_t> seeds;
};

// Throws BudgetMismatch unless every variant has the same steps, batch, lr
// and seeds.
void check_budgets(const std::vector<VariantBudget>& budgets);

struct AblationRow {
    FusionMode mode = FusionMode::Adaptive;
    std::vector<double> r05;  // per seed
    std::vector<double> r07;
    std::vector<double> miou;
};

struct AblationTable {
    std::size_t frames = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;
};

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // sample standard deviation

using VariantHook = std::function<void(std::uint64_t seed, FusionMode mode, const TriSenseModel& model,
                                       const BenchData& data)>;

// Trains and scores every mode for every seed under one shared budget.
AblationTable run_ablation(const BenchConfig& config, const std::vector<std::uint64_t>& seeds,
                           const std::vector<FusionMode>& modes, const VariantHook& hook = {},
                           const std::function<void(const std::string&)>& progress = {});

// Percent table: mode, R@0.5, R@0.7, mIoU as mean +- std over seeds.
std::string render_ablation(const AblationTable& table);
nlohmann::json ablation_to_json(const AblationTable& table);

}  // namespace trisense
