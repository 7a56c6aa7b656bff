// SPDX-License-Identifier: Apache-2.0
// trisense: corpus generation, staged training, evaluation, metrics,
// connector ablation, self-verification and the caption pipeline.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trisense/bench.hpp"
#include "trisense/corpus.hpp"
#include "trisense/metrics.hpp"
#include "trisense/pipeline.hpp"
#include "trisense/training.hpp"
#include "trisense/verify.hpp"

using namespace trisense;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw CliError(path + ": " + e.what());
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CliError("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError("cannot open " + path);
    return in;
}

void check_frames(std::size_t frames) {
    if (frames != 16 && frames != 32 && frames != 64) throw CliError("--frames must be 16, 32 or 64");
}

std::vector<ModalitySet> parse_modality_list(const std::string& text) {
    std::vector<ModalitySet> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const ModalitySet m = ModalitySet::parse(item);
        if (m.empty()) throw CliError("empty modality set in --modalities");
        out.push_back(m);
    }
    return out;
}

std::vector<Task> parse_tasks(const std::string& text) {
    if (text == "mr") return {Task::MR};
    if (text == "sc") return {Task::SC};
    if (text == "mr,sc" || text == "sc,mr" || text == "both") return {Task::MR, Task::SC};
    throw CliError("--tasks must be mr, sc or mr,sc");
}

// --- gen-corpus -------------------------------------------------------------

struct GenArgs {
    std::uint64_t seed = 0;
    std::size_t frames = 32;
    std::size_t videos = 200;
    double noise = -1.0;
    std::string out = "corpus.json";
    std::string annotations;
};

int cmd_gen_corpus(const GenArgs& a) {
    check_frames(a.frames);
    SynthConfig sc = bench_synth_config(a.frames);
    if (a.noise >= 0.0) sc.noise = a.noise;
    const SynthCorpus corpus = generate_corpus(sc, a.seed, a.videos);
    open_out(a.out) << corpus_descriptor(corpus).dump(2) << "\n";
    if (!a.annotations.empty()) {
        auto out = open_out(a.annotations);
        serialize_annotations(annotations_from_synth(corpus), out);
    }
    std::cout << "wrote " << a.out << ": " << corpus.videos.size() << " videos, " << corpus.queries.size()
              << " queries\n";
    return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string corpus;
    std::string checkpoint;
    std::string out = "model.ckpt.json";
    std::string loss_log;
    int stage = 0;
    std::size_t steps = 0;  // 0: 500 for stages 0 and 1, 2000 for stages 2 and 3
    std::size_t batch = 8;
    double lr = 0.05;
    double momentum = 0.9;
    std::string optimizer = "sgd";
    std::string mode = "adaptive";
    double tau = 1.0;
    std::string tasks = "mr,sc";
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub) {
    const SynthCorpus corpus = corpus_from_descriptor(read_json(a.corpus));
    const Vocabulary vocab = corpus.vocabulary();

    StageConfig sc;
    sc.stage = a.stage;
    sc.steps = a.steps ? a.steps : (a.stage >= 2 ? 2000 : 500);
    sc.batch = a.batch;
    sc.lr = a.lr;
    sc.momentum = a.momentum;
    sc.optimizer = parse_optimizer(a.optimizer);
    sc.seed = a.seed;
    sc.validate();

    std::unique_ptr<TriSenseModel> model;
    if (!a.checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(a.checkpoint);
        const int prior = ck.meta.value("stage", -1);
        const bool ok = a.stage == 0 ? prior == 0 : (prior == a.stage || prior == a.stage - 1 || (a.stage == 1 && prior == 0));
        if (!ok) {
            throw CliError("checkpoint was trained at stage " + std::to_string(prior) + " and cannot seed stage " +
                           std::to_string(a.stage));
        }
        ModelConfig mc = config_from_json(ck.meta.at("model"));
        if (sub.count("--mode") && mc.connector.mode != parse_fusion_mode(a.mode)) {
            throw CliError("--mode " + a.mode + " disagrees with the checkpoint's " +
                           std::string(fusion_mode_name(mc.connector.mode)));
        }
        if (sub.count("--tau") && mc.connector.temperature != a.tau) {
            throw CliError("--tau disagrees with the checkpoint's temperature");
        }
        if (mc.vocab_size != vocab.size()) throw CliError("checkpoint vocabulary does not match the corpus");
        model = std::make_unique<TriSenseModel>(mc, std::move(ck.params));
    } else {
        ModelConfig mc = bench_model_config(corpus, vocab);
        mc.connector.mode = parse_fusion_mode(a.mode);
        mc.connector.temperature = a.tau;
        model = std::make_unique<TriSenseModel>(mc, a.seed);
    }

    std::vector<TrainingExample> examples;
    for (Task t : parse_tasks(a.tasks)) {
        auto part = synth_examples(corpus, vocab, t);
        examples.insert(examples.end(), part.begin(), part.end());
    }
    if (examples.empty()) throw CliError("corpus has no queries for --tasks " + a.tasks);

    const ParameterStore before = model->params().clone();
    std::ofstream log;
    if (!a.loss_log.empty()) log = open_out(a.loss_log);
    const TrainResult r = train(*model, examples, sc, [&](const StepLog& s) {
        if (log) {
            log << json{{"step", s.step}, {"lr", s.lr}, {"nats_per_token", s.nats_per_token},
                        {"grad_norm", s.grad_norm}}.dump()
                << "\n";
        }
        if (s.step % 50 == 0 || s.step + 1 == sc.steps) {
            std::cout << "step " << s.step << " loss " << s.nats_per_token << " nats/token\n";
        }
    });
    for (const auto& name : r.frozen) {
        const auto x = before.get(name).values();
        const auto y = model->params().get(name).values();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) throw CliError("frozen parameter changed: " + name);
    }

    json meta{{"stage", a.stage},
              {"model", config_to_json(model->config())},
              {"stage_config", stage_config_to_json(sc)},
              {"corpus", corpus_descriptor(corpus)},
              {"final_nats_per_token", r.log.empty() ? 0.0 : r.log.back().nats_per_token}};
    save_checkpoint(a.out, model->params(), meta);
    std::cout << "wrote " << a.out << " (stage " << a.stage << ", " << r.trained.size() << " trained, "
              << r.frozen.size() << " frozen tensors unchanged)\n";
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string corpus;
    std::string tasks = "mr,sc";
    std::string modalities;
    std::string out = "predictions.jsonl";
};

int cmd_eval(const EvalArgs& a) {
    const SynthCorpus corpus = corpus_from_descriptor(read_json(a.corpus));
    const Vocabulary vocab = corpus.vocabulary();
    Checkpoint ck = load_checkpoint(a.checkpoint);
    const ModelConfig mc = config_from_json(ck.meta.at("model"));
    if (mc.vocab_size != vocab.size()) throw CliError("checkpoint vocabulary does not match the corpus");
    const TriSenseModel model(mc, std::move(ck.params));

    std::vector<ModalitySet> sets;
    if (!a.modalities.empty()) {
        sets = parse_modality_list(a.modalities);
        for (const auto& s : sets) {
            const bool found = std::any_of(corpus.queries.begin(), corpus.queries.end(),
                                           [&](const SyntheticQuery& q) { return q.present == s; });
            if (!found) throw CliError("modality set " + s.label() + " does not occur in the corpus");
        }
    }

    auto out = open_out(a.out);
    std::size_t n = 0;
    for (Task t : parse_tasks(a.tasks)) {
        if (sets.empty()) {
            for (const auto& p : evaluate(model, corpus, vocab, t)) out << prediction_to_json(p).dump() << "\n", ++n;
        }
        for (const auto& s : sets) {
            const auto preds = evaluate(model, corpus, vocab, t, [&](const SyntheticQuery&) { return s; });
            for (const auto& p : preds) out << prediction_to_json(p).dump() << "\n", ++n;
        }
    }
    std::cout << "wrote " << n << " predictions to " << a.out << "\n";
    return 0;
}

// --- metrics ----------------------------------------------------------------

struct MetricsArgs {
    std::string predictions;
    std::string out;
    bool as_json = false;
};

int cmd_metrics(const MetricsArgs& a) {
    auto in = open_in(a.predictions);
    std::vector<PredictionRow> rows;
    try {
        rows = parse_predictions(in);
    } catch (const PredictionParseError& e) {
        std::cerr << a.predictions << ": " << e.what() << "\n";
        return 2;
    }
    const MetricReport report = build_report(rows);
    const std::string text = a.as_json ? report_to_json(report).dump(2) + "\n" : render_report(report);
    if (a.out.empty()) {
        std::cout << text;
    } else {
        open_out(a.out) << text;
    }
    return 0;
}

// --- ablate -----------------------------------------------------------------

struct AblateArgs {
    std::size_t frames = 32;
    std::size_t seeds = 5;
    std::uint64_t seed = 1;
    std::size_t steps = 0;
    std::size_t warmup = 0;
    bool warmup_set = false;
    double tau = 1.0;
    std::string config;
    std::string out;
};

int cmd_ablate(const AblateArgs& a, const CLI::App& sub) {
    check_frames(a.frames);
    BenchConfig bc;
    if (!a.config.empty()) bc = bench_config_from_json(read_json(a.config));
    if (sub.count("--frames") || a.config.empty()) bc.synth = bench_synth_config(a.frames);
    if (a.steps) bc.steps = a.steps;
    if (sub.count("--warmup")) bc.warmup_steps = a.warmup;
    if (sub.count("--tau")) bc.temperature = a.tau;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(a.seed + i);
    const auto table = run_ablation(bc, seeds, {FusionMode::Adaptive, FusionMode::FixedWeights, FusionMode::Addition},
                                    {}, [](const std::string& line) { std::cerr << line << "\n"; });
    std::cout << render_ablation(table);
    if (!a.out.empty()) {
        json j = ablation_to_json(table);
        j["config"] = bench_config_to_json(bc);
        open_out(a.out) << j.dump(2) << "\n";
    }
    return 0;
}

// --- verify -----------------------------------------------------------------

int cmd_verify(std::uint64_t seed) {
    bool ok = true;
    for (const auto& c : run_verify(seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail;
        if (!c.passed) std::cout << " (reproduce with --seed " << c.seed << ")";
        std::cout << "\n";
        ok = ok && c.passed;
    }
    return ok ? 0 : 1;
}

// --- pipeline ---------------------------------------------------------------

struct PipelineArgs {
    std::string captions;
    std::string client_config;
    std::string out = "fused.jsonl";
    std::string combos = "AVS,AV,VS";
    std::size_t judge_rounds = 3;
    std::size_t concurrency = 0;
    bool stub = false;
    double stub_failure_rate = 0.0;
    std::uint64_t seed = 0;
};

// Stable score in [0, 5] per (clip, round) for offline runs.
std::string stub_judge(const std::string& clip, std::size_t round) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : clip) h = (h ^ ch) * 1099511628211ULL;
    h = (h ^ round) * 1099511628211ULL;
    std::ostringstream os;
    os << "Score: " << (h % 51) / 10 << "." << (h % 51) % 10;
    return os.str();
}

int cmd_pipeline(const PipelineArgs& a) {
    PipelineConfig pc;
    if (!a.client_config.empty()) pc.client = client_config_from_json(read_json(a.client_config));
    if (a.concurrency) pc.client.concurrency = a.concurrency;
    pc.judge_rounds = a.judge_rounds;
    pc.combos.clear();
    std::stringstream ss(a.combos);
    for (std::string c; std::getline(ss, c, ',');) pc.combos.push_back(parse_combo(c));

    auto in = open_in(a.captions);
    const auto clips = read_captions(in);
    std::unique_ptr<ChatClient> client;
    if (a.stub) {
        client = std::make_unique<StubChatClient>(stub_judge, a.stub_failure_rate, a.seed);
    } else {
        client = std::make_unique<HttpChatClient>(pc.client);
    }
    const PipelineResult result = run_pipeline(clips, *client, pc);
    auto out = open_out(a.out);
    write_pipeline_result(result, out);
    std::size_t errors = 0;
    for (const auto& item : result.items) errors += !item.error.empty();
    std::cout << result.items.size() << " candidates, " << result.filter.retained.size() << " retained, "
              << result.filter.rejected.size() << " rejected, " << errors << " failed\n";
    return errors ? 3 : 0;
}

// --- stats / split ----------------------------------------------------------

std::vector<AnnotationRecord> read_records(const std::string& path) {
    auto in = open_in(path);
    ParseReport report = parse_annotations(in);
    for (const auto& d : report.diagnostics) {
        std::cerr << path << ":" << d.line << ": record " << d.record << ": " << d.message << "\n";
    }
    return std::move(report.records);
}

int cmd_stats(const std::string& path, bool as_json) {
    const auto records = read_records(path);
    if (records.empty()) throw CliError(path + " holds no valid records");
    const DatasetStats s = dataset_stats(records);
    if (as_json) {
        std::cout << stats_to_json(s).dump(2) << "\n";
        return 0;
    }
    std::cout << "records " << s.count << "\nmean duration " << s.mean_duration << " s\nmedian duration "
              << s.median_duration << " s\n";
    for (std::size_t b = 0; b < s.duration_histogram.size(); ++b) {
        std::cout << "  " << bucket_label(b) << ": " << s.duration_histogram[b] << "\n";
    }
    for (const auto& [tag, n] : s.task_counts) std::cout << "  " << tag << ": " << n << "\n";
    return 0;
}

int cmd_split(const std::string& path, double ratio, std::uint64_t seed, const std::string& train_out,
              const std::string& test_out) {
    const auto split = export_training(read_records(path), ratio, seed);
    auto tr = open_out(train_out);
    serialize_annotations(split.train, tr);
    auto te = open_out(test_out);
    serialize_annotations(split.test, te);
    std::cout << split.train.size() << " train, " << split.test.size() << " test\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tri-modal temporal grounding toolkit"};
    app.set_config("--config", "", "Read options from a TOML/INI key = value file");
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic tri-modal corpus");
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--frames", gen.frames, "16, 32 or 64");
    gen_cmd->add_option("--videos", gen.videos);
    gen_cmd->add_option("--noise", gen.noise, "Feature noise sigma");
    gen_cmd->add_option("--out", gen.out, "Corpus descriptor path");
    gen_cmd->add_option("--annotations", gen.annotations, "Also write annotation records (JSON lines)");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train one stage and write a checkpoint");
    train_cmd->add_option("--corpus", tr.corpus)->required();
    train_cmd->add_option("--checkpoint", tr.checkpoint, "Checkpoint to continue from");
    train_cmd->add_option("--out", tr.out);
    train_cmd->add_option("--loss-log", tr.loss_log, "JSON lines loss curve");
    train_cmd->add_option("--stage", tr.stage, "0 (joint), 1, 2 or 3")->check(CLI::Range(0, 3));
    train_cmd->add_option("--steps", tr.steps, "Default 500 for stages 0-1, 2000 for stages 2-3");
    train_cmd->add_option("--batch", tr.batch);
    train_cmd->add_option("--lr", tr.lr);
    train_cmd->add_option("--momentum", tr.momentum);
    train_cmd->add_option("--optimizer", tr.optimizer, "sgd or adam");
    train_cmd->add_option("--mode", tr.mode, "adaptive, fixed or addition");
    train_cmd->add_option("--tau", tr.tau, "Weighting softmax temperature");
    train_cmd->add_option("--tasks", tr.tasks, "mr, sc or mr,sc");
    train_cmd->add_option("--seed", tr.seed);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Write MR/SC predictions for a corpus");
    eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
    eval_cmd->add_option("--corpus", ev.corpus)->required();
    eval_cmd->add_option("--tasks", ev.tasks);
    eval_cmd->add_option("--modalities", ev.modalities, "Comma list such as avs,av,vs,v; default per query");
    eval_cmd->add_option("--out", ev.out);

    MetricsArgs me;
    auto* metrics_cmd = app.add_subcommand("metrics", "Score a prediction file");
    metrics_cmd->add_option("predictions", me.predictions)->required();
    metrics_cmd->add_option("--out", me.out);
    metrics_cmd->add_flag("--json", me.as_json);

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "Compare adaptive, fixed and addition fusion");
    ablate_cmd->add_option("--frames", ab.frames);
    ablate_cmd->add_option("--seeds", ab.seeds, "Number of seeds");
    ablate_cmd->add_option("--seed", ab.seed, "First seed");
    ablate_cmd->add_option("--steps", ab.steps, "Fused training steps per variant");
    ablate_cmd->add_option("--warmup", ab.warmup, "Shared single-modality steps");
    ablate_cmd->add_option("--tau", ab.tau);
    ablate_cmd->add_option("--bench-config", ab.config, "JSON bench configuration");
    ablate_cmd->add_option("--out", ab.out, "JSON results");

    std::uint64_t verify_seed = 0;
    auto* verify_cmd = app.add_subcommand("verify", "Run the built-in property checks");
    verify_cmd->add_option("--seed", verify_seed);

    PipelineArgs pa;
    auto* pipe_cmd = app.add_subcommand("pipeline", "Fuse unimodal captions and filter them with a judge");
    pipe_cmd->add_option("--captions", pa.captions, "JSON lines of per-modality captions")->required();
    pipe_cmd->add_option("--client-config", pa.client_config, "JSON client configuration");
    pipe_cmd->add_option("--out", pa.out);
    pipe_cmd->add_option("--combos", pa.combos);
    pipe_cmd->add_option("--judge-rounds", pa.judge_rounds);
    pipe_cmd->add_option("--concurrency", pa.concurrency);
    pipe_cmd->add_flag("--stub", pa.stub, "Use the deterministic offline client");
    pipe_cmd->add_option("--stub-failure-rate", pa.stub_failure_rate);
    pipe_cmd->add_option("--seed", pa.seed);

    std::string stats_path;
    bool stats_json = false;
    auto* stats_cmd = app.add_subcommand("stats", "Summarise an annotation file");
    stats_cmd->add_option("annotations", stats_path)->required();
    stats_cmd->add_flag("--json", stats_json);

    std::string split_path, train_out = "train.jsonl", test_out = "test.jsonl";
    double ratio = 0.9;
    std::uint64_t split_seed = 0;
    auto* split_cmd = app.add_subcommand("split", "Seeded train/test split of an annotation file");
    split_cmd->add_option("annotations", split_path)->required();
    split_cmd->add_option("--ratio", ratio);
    split_cmd->add_option("--seed", split_seed);
    split_cmd->add_option("--train-out", train_out);
    split_cmd->add_option("--test-out", test_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) return cmd_gen_corpus(gen);
        if (*train_cmd) return cmd_train(tr, *train_cmd);
        if (*eval_cmd) return cmd_eval(ev);
        if (*metrics_cmd) return cmd_metrics(me);
        if (*ablate_cmd) return cmd_ablate(ab, *ablate_cmd);
        if (*verify_cmd) return cmd_verify(verify_seed);
        if (*pipe_cmd) return cmd_pipeline(pa);
        if (*stats_cmd) return cmd_stats(stats_path, stats_json);
        if (*split_cmd) return cmd_split(split_path, ratio, split_seed, train_out, test_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
