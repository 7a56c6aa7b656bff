// SPDX-License-Identifier: Apache-2.0
#include "trisense/bench.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "trisense/metrics.hpp"

namespace trisense {

void BenchConfig::validate() const {
    synth.validate();
    if (train_videos == 0 || test_videos == 0) throw std::invalid_argument("bench needs train and test videos");
    if (steps == 0 || batch == 0) throw std::invalid_argument("bench steps and batch must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("bench lr must be positive");
    if (!(temperature > 0.0)) throw std::invalid_argument("bench temperature must be positive");
}

nlohmann::json bench_config_to_json(const BenchConfig& c) {
    return {{"synth", synth_config_to_json(c.synth)},
            {"train_videos", c.train_videos},
            {"test_videos", c.test_videos},
            {"warmup_steps", c.warmup_steps},
            {"steps", c.steps},
            {"batch", c.batch},
            {"lr", c.lr},
            {"optimizer", std::string(optimizer_name(c.optimizer))},
            {"temperature", c.temperature}};
}

BenchConfig bench_config_from_json(const nlohmann::json& doc) {
    BenchConfig c;
    if (doc.contains("synth")) c.synth = synth_config_from_json(doc.at("synth"));
    c.train_videos = doc.value("train_videos", c.train_videos);
    c.test_videos = doc.value("test_videos", c.test_videos);
    c.warmup_steps = doc.value("warmup_steps", c.warmup_steps);
    c.steps = doc.value("steps", c.steps);
    c.batch = doc.value("batch", c.batch);
    c.lr = doc.value("lr", c.lr);
    if (doc.contains("optimizer")) c.optimizer = parse_optimizer(doc.at("optimizer").get<std::string>());
    c.temperature = doc.value("temperature", c.temperature);
    c.validate();
    return c;
}

BenchData make_bench_data(const BenchConfig& config, std::uint64_t seed) {
    config.validate();
    BenchData d;
    SynthConfig sc = config.synth;
    sc.include_sc = false;
    d.corpus = generate_corpus(sc, seed * 100 + 1, config.train_videos + config.test_videos);
    d.train = d.corpus;
    d.test = d.corpus;
    d.train.queries.clear();
    d.test.queries.clear();
    for (const auto& q : d.corpus.queries) (q.video < config.train_videos ? d.train : d.test).queries.push_back(q);
    d.vocab = d.corpus.vocabulary();
    return d;
}

ModelConfig bench_model(const BenchData& data, const BenchConfig& config, FusionMode mode) {
    ModelConfig mc = bench_model_config(data.corpus, data.vocab);
    mc.connector.mode = mode;
    mc.connector.temperature = config.temperature;
    return mc;
}

ParameterStore bench_init(const BenchData& data, const BenchConfig& config, std::uint64_t seed,
                          const std::function<void(const StepLog&)>& on_step) {
    TriSenseModel model(bench_model(data, config, FusionMode::Adaptive), seed);
    if (config.warmup_steps > 0) {
        std::vector<TrainingExample> examples;
        for (const auto& q : data.train.queries) {
            if (q.task != Task::MR) continue;
            examples.push_back({make_input(data.train, q, data.vocab, ModalitySet::of({q.informative})),
                                gold_response(q, data.vocab)});
        }
        StageConfig sc;
        sc.steps = config.warmup_steps;
        sc.batch = config.batch;
        sc.lr = config.lr;
        sc.optimizer = config.optimizer;
        sc.seed = seed + 7;
        train(model, examples, sc, on_step);
    }
    return model.params().clone();
}

TriSenseModel train_variant(const BenchData& data, const BenchConfig& config, FusionMode mode,
                            const ParameterStore& init, std::uint64_t seed,
                            const std::function<void(const StepLog&)>& on_step) {
    TriSenseModel model(bench_model(data, config, mode), init.clone());
    StageConfig sc;
    sc.steps = config.steps;
    sc.batch = config.batch;
    sc.lr = config.lr;
    sc.optimizer = config.optimizer;
    sc.seed = seed;
    train(model, synth_examples(data.train, data.vocab, Task::MR), sc, on_step);
    return model;
}

MrScore score_mr(const TriSenseModel& model, const BenchData& data, ModalitySet present) {
    MrScore s;
    s.predictions = evaluate(model, data.test, data.vocab, Task::MR, [&](const SyntheticQuery&) { return present; });
    std::vector<SpanPrediction> spans;
    for (const auto& p : s.predictions) spans.push_back({p.sample_id, p.pred_span, p.gold_span});
    s.r05 = recall_at_iou(spans, 0.5);
    s.r07 = recall_at_iou(spans, 0.7);
    s.miou = mean_iou(spans);
    return s;
}

void check_budgets(const std::vector<VariantBudget>& budgets) {
    for (const auto& b : budgets) {
        const auto& a = budgets.front();
        if (b.warmup_steps != a.warmup_steps || b.steps != a.steps || b.batch != a.batch || b.lr != a.lr ||
            b.seeds != a.seeds) {
            throw BudgetMismatch("variant " + std::string(fusion_mode_name(b.mode)) +
                                 " does not share the budget of " + std::string(fusion_mode_name(a.mode)));
        }
    }
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

AblationTable run_ablation(const BenchConfig& config, const std::vector<std::uint64_t>& seeds,
                           const std::vector<FusionMode>& modes, const VariantHook& hook,
                           const std::function<void(const std::string&)>& progress) {
    if (seeds.empty() || modes.empty()) throw std::invalid_argument("ablation needs seeds and modes");
    std::vector<VariantBudget> budgets;
    for (FusionMode m : modes) budgets.push_back({m, config.warmup_steps, config.steps, config.batch, config.lr, seeds});
    check_budgets(budgets);

    AblationTable table;
    table.frames = config.synth.frames;
    table.seeds = seeds;
    for (FusionMode m : modes) table.rows.push_back({m, {}, {}, {}});
    for (std::uint64_t seed : seeds) {
        const BenchData data = make_bench_data(config, seed);
        const ParameterStore init = bench_init(data, config, seed);
        for (std::size_t k = 0; k < modes.size(); ++k) {
            const TriSenseModel model = train_variant(data, config, modes[k], init, seed);
            const MrScore s = score_mr(model, data, ModalitySet::all());
            table.rows[k].r05.push_back(s.r05);
            table.rows[k].r07.push_back(s.r07);
            table.rows[k].miou.push_back(s.miou);
            if (progress) {
                std::ostringstream os;
                os << "F=" << config.synth.frames << " seed " << seed << " " << fusion_mode_name(modes[k])
                   << " R@0.5 " << s.r05;
                progress(os.str());
            }
            if (hook) hook(seed, modes[k], model, data);
        }
    }
    return table;
}

std::string render_ablation(const AblationTable& t) {
    std::ostringstream os;
    os << "Connector ablation, AVS moment retrieval, F=" << t.frames << ", " << t.seeds.size() << " seeds\n";
    os << std::left << std::setw(12) << "variant" << std::right << std::setw(16) << "R@0.5" << std::setw(16)
       << "R@0.7" << std::setw(16) << "mIoU" << "\n";
    auto cell = [](const std::vector<double>& v) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(1) << 100.0 * mean_of(v) << " +- " << 100.0 * stddev_of(v);
        return c.str();
    };
    for (const auto& r : t.rows) {
        os << std::left << std::setw(12) << fusion_mode_name(r.mode) << std::right << std::setw(16) << cell(r.r05)
           << std::setw(16) << cell(r.r07) << std::setw(16) << cell(r.miou) << "\n";
    }
    return os.str();
}

nlohmann::json ablation_to_json(const AblationTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"mode", std::string(fusion_mode_name(r.mode))},
                        {"r05", r.r05},
                        {"r07", r.r07},
                        {"miou", r.miou},
                        {"r05_mean", mean_of(r.r05)},
                        {"r05_std", stddev_of(r.r05)}});
    }
    return {{"frames", t.frames}, {"seeds", t.seeds}, {"rows", rows}};
}

}  // namespace trisense
