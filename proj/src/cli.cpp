#include "gcap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gcap/evaluate.hpp"
#include "gcap/gradcheck.hpp"
#include "gcap/reference_loss.hpp"
#include "gcap/training.hpp"

namespace gcap::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string scaled(double score) { return fmt(score * 100.0, "%.4f"); }

struct DataOptions {
    std::string objects_path;
    std::string predicates_path;

    void attach(CLI::App* cmd) {
        cmd->add_option("--objects", objects_path, "object label list, one per line")->required();
        cmd->add_option("--predicates", predicates_path, "predicate label list, one per line")
            ->required();
    }

    LabelSpace load() const { return LabelSpace::load(objects_path, predicates_path); }
};

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

void require_file(const std::string& path, const std::string& hint) {
    if (!fs::exists(path)) throw DataError(hint + " not found: " + path);
}

std::string metrics_block(const MetricReport& report) {
    std::string out;
    const char* names[] = {"B-1", "B-2", "B-3", "B-4"};
    for (std::size_t i = 0; i < 4; ++i)
        out += std::string(names[i]) + "=" + scaled(report.bleu[i]) + "\n";
    out += "METEOR=" + scaled(report.meteor) + "\n";
    out += "samples=" + std::to_string(report.samples) + "\n";
    out += "rejected=" + std::to_string(report.rejected) + "\n";
    return out;
}

std::string metrics_table(const std::string& model_name, const MetricReport& report) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %7s %7s %7s %7s %7s\n", "Model", "B-1", "B-2", "B-3",
                  "B-4", "METEOR");
    std::string out = line;
    std::snprintf(line, sizeof(line), "%-18s %7.2f %7.2f %7.2f %7.2f %7.2f\n", model_name.c_str(),
                  report.bleu[0] * 100.0, report.bleu[1] * 100.0, report.bleu[2] * 100.0,
                  report.bleu[3] * 100.0, report.meteor * 100.0);
    out += line;
    out += "samples=" + std::to_string(report.samples) +
           " rejected=" + std::to_string(report.rejected) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
    std::string train_path;
    DataOptions data;
    std::string out_dir = ".";
};

int cmd_prepare(const PrepareArgs& args) {
    require_file(args.train_path, "training split");
    const LabelSpace labels = args.data.load();
    const auto records = load_split(args.train_path, labels);
    const auto pairs = make_training_pairs(records);
    const DatasetStats stats = compute_stats(records);

    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(pairs.size());
    for (const TrainingPair& p : pairs)
        corpus.push_back(tokenize(records[p.record].captions[p.caption]));
    const Vocabulary vocab = Vocabulary::build(corpus);

    fs::create_directories(args.out_dir);
    vocab.save(args.out_dir + "/vocab.txt");
    save_stats(args.out_dir + "/stats.txt", stats);

    std::cout << "records=" << stats.records << " pairs=" << stats.pair_count
              << " mean_captions_per_image=" << fmt(stats.mean_captions_per_image, "%.3f")
              << " max_object_nodes=" << stats.max_object_nodes << " vocab=" << vocab.size()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string train_path;
    std::string val_path;
    DataOptions data;
    std::string out_dir = ".";
    std::string variant = "base";
    std::size_t embed_dim = 512;
    std::size_t hidden_dim = 1024;
    std::size_t attn_dim = 512;
    std::size_t gat_layers = 2;
    std::size_t max_len = 20;
    TrainConfig train;
};

std::vector<TrainingSample> build_samples(const std::vector<DatasetRecord>& records,
                                          const LabelSpace& labels, const Vocabulary& vocab) {
    const auto pairs = make_training_pairs(records);
    std::vector<std::shared_ptr<const ReifiedGraph>> graphs(records.size());
    std::vector<TrainingSample> samples;
    samples.reserve(pairs.size());
    for (const TrainingPair& p : pairs) {
        if (!graphs[p.record])
            graphs[p.record] =
                std::make_shared<const ReifiedGraph>(reify(to_scene_graph(records[p.record])));
        samples.push_back(make_training_sample(
            graphs[p.record], tokenize(records[p.record].captions[p.caption]), labels, vocab));
    }
    return samples;
}

int cmd_train(const TrainArgs& args) {
    require_file(args.out_dir + "/vocab.txt", "prepared vocabulary (run prepare first)");
    require_file(args.out_dir + "/stats.txt", "prepared stats (run prepare first)");
    require_file(args.train_path, "training split");

    const LabelSpace labels = args.data.load();
    const Vocabulary vocab = Vocabulary::load(args.out_dir + "/vocab.txt");

    ModelConfig config;
    config.embed_dim = args.embed_dim;
    config.hidden_dim = args.hidden_dim;
    config.attn_dim = args.attn_dim;
    config.gat_layers = args.gat_layers;
    config.set_variant(parse_variant(args.variant));
    config.vocab_size = vocab.size();
    config.label_count = labels.joint_count();

    const auto records = load_split(args.train_path, labels);
    const auto samples = build_samples(records, labels, vocab);

    std::vector<DatasetRecord> val_records;
    if (!args.val_path.empty()) {
        require_file(args.val_path, "validation split");
        val_records = load_split(args.val_path, labels);
    }

    ModelParams params = init_params(config, args.train.seed);
    AdamState adam;

    std::ofstream log(args.out_dir + "/train_log.txt", std::ios::binary | std::ios::trunc);
    if (!log) throw DataError("cannot write " + args.out_dir + "/train_log.txt");
    log << "# " << variant_name(config.variant()) << " seed=" << args.train.seed
        << " lr=" << fmt(static_cast<double>(args.train.lr)) << "\n";
    if (args.train.lr == real(0)) {
        log << "warning: lr=0, parameters will not change\n";
        std::cerr << "warning: lr=0, parameters will not change\n";
    }

    double best_val = -1.0;
    TrainHooks hooks;
    if (!val_records.empty()) {
        hooks.validation = [&]() {
            EvalOptions opts;
            opts.source = GraphSource::gold;
            opts.decode.max_len = args.max_len;
            return evaluate_model(params, val_records, labels, vocab, opts).meteor;
        };
    }
    hooks.on_epoch = [&](const TrainLogEntry& entry) {
        log << "epoch " << entry.epoch << " loss=" << fmt(entry.mean_loss);
        if (entry.val_metric) log << " val_meteor=" << fmt(*entry.val_metric);
        log << "\n";
        log.flush();
        save_model_checkpoint(args.out_dir + "/checkpoint_last.gcap", params, &adam);
        if (entry.val_metric && *entry.val_metric > best_val) {
            best_val = *entry.val_metric;
            save_model_checkpoint(args.out_dir + "/checkpoint_best.gcap", params);
        }
    };

    const TrainResult result = train(params, samples, args.train, adam, hooks);
    save_model_checkpoint(args.out_dir + "/checkpoint_final.gcap", params, &adam);
    if (val_records.empty())
        save_model_checkpoint(args.out_dir + "/checkpoint_best.gcap", params);

    std::cout << variant_name(config.variant()) << " trained: epochs=" << result.log.size()
              << " steps=" << result.steps << " final_loss=" << fmt(result.final_mean_loss)
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string checkpoint;
    std::string input_path;
    DataOptions data;
    std::string vocab_path;
    std::string stats_path;
    std::string out_dir = ".";
    std::string mode = "greedy";
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_len = 20;
    double threshold = 0.4;
};

int cmd_generate(const GenerateArgs& args) {
    require_file(args.checkpoint, "checkpoint");
    require_file(args.input_path, "input records");
    const LabelSpace labels = args.data.load();
    const Vocabulary vocab = Vocabulary::load(args.vocab_path);
    LoadedModel model = load_model_checkpoint(args.checkpoint);
    if (model.params.config.vocab_size != vocab.size())
        throw DataError("vocabulary size " + std::to_string(vocab.size()) +
                        " does not match the checkpoint (" +
                        std::to_string(model.params.config.vocab_size) + ")");

    const auto records = load_split(args.input_path, labels);

    EvalOptions opts;
    opts.threshold = args.threshold;
    opts.decode.max_len = args.max_len;
    if (args.mode == "greedy") {
        opts.decode.mode = DecodeConfig::Mode::greedy;
    } else if (args.mode == "sample") {
        opts.decode.mode = DecodeConfig::Mode::sample;
        opts.decode.temperature = static_cast<real>(args.temperature);
    } else {
        throw ConfigError("unknown decode mode '" + args.mode + "'");
    }

    // gold and detector records both pass through, each on its own path
    std::vector<DatasetRecord> gold, detector;
    std::vector<std::size_t> gold_idx, detector_idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].detector_form) {
            detector.push_back(records[i]);
            detector_idx.push_back(i);
        } else {
            gold.push_back(records[i]);
            gold_idx.push_back(i);
        }
    }
    if (!detector.empty()) {
        const DatasetStats stats = load_stats(args.stats_path);
        opts.max_nodes = stats.max_object_nodes;
    }

    Rng rng(args.seed);
    Rng* sampler = opts.decode.mode == DecodeConfig::Mode::sample ? &rng : nullptr;

    // keyed by input order for a deterministic output file
    std::vector<std::optional<DecodedRecord>> decoded(records.size());
    std::vector<std::optional<RejectedRecord>> rejected(records.size());
    const auto merge = [&](const DecodeRun& run, const std::vector<std::size_t>& index_map) {
        for (const DecodedRecord& d : run.captions) decoded[index_map[d.record_index]] = d;
        for (const RejectedRecord& r : run.rejected) rejected[index_map[r.record_index]] = r;
    };
    if (!gold.empty()) {
        opts.source = GraphSource::gold;
        merge(decode_records(model.params, gold, labels, vocab, opts, sampler), gold_idx);
    }
    if (!detector.empty()) {
        opts.source = GraphSource::detection;
        merge(decode_records(model.params, detector, labels, vocab, opts, sampler), detector_idx);
    }

    fs::create_directories(args.out_dir);
    std::string captions_out, rejected_out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (decoded[i]) {
            std::string joined;
            for (const std::string& t : decoded[i]->tokens) {
                if (!joined.empty()) joined += ' ';
                joined += t;
            }
            captions_out += std::to_string(records[i].image_id) + "\t" + joined + "\n";
        } else if (rejected[i]) {
            rejected_out += std::to_string(records[i].image_id) + "\t" + rejected[i]->reason + "\n";
        }
    }
    write_text(args.out_dir + "/captions.tsv", captions_out);
    write_text(args.out_dir + "/rejected.tsv", rejected_out);
    std::cout << "captions=" << decoded.size() - std::count(decoded.begin(), decoded.end(), std::nullopt)
              << " rejected=" << std::count_if(rejected.begin(), rejected.end(),
                                               [](const auto& r) { return r.has_value(); })
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string checkpoint;
    std::string test_path;
    DataOptions data;
    std::string vocab_path;
    std::string stats_path;
    std::string out_dir = ".";
    std::string graphs = "gold";
    double threshold = 0.4;
    std::size_t max_len = 20;
};

MetricReport run_evaluation(const EvaluateArgs& args, ModelParams& params,
                            const LabelSpace& labels, const Vocabulary& vocab,
                            const std::vector<DatasetRecord>& records, double threshold) {
    EvalOptions opts;
    opts.decode.max_len = args.max_len;
    if (args.graphs == "gold") {
        opts.source = GraphSource::gold;
    } else if (args.graphs == "detection") {
        opts.source = GraphSource::detection;
        opts.threshold = threshold;
        opts.max_nodes = load_stats(args.stats_path).max_object_nodes;
    } else {
        throw ConfigError("unknown graph source '" + args.graphs + "' (gold or detection)");
    }
    return evaluate_model(params, records, labels, vocab, opts);
}

int cmd_evaluate(const EvaluateArgs& args) {
    require_file(args.checkpoint, "checkpoint");
    require_file(args.test_path, "evaluation split");
    const LabelSpace labels = args.data.load();
    const Vocabulary vocab = Vocabulary::load(args.vocab_path);
    LoadedModel model = load_model_checkpoint(args.checkpoint);
    const auto records = load_split(args.test_path, labels);

    const MetricReport report =
        run_evaluation(args, model.params, labels, vocab, records, args.threshold);

    fs::create_directories(args.out_dir);
    write_text(args.out_dir + "/metrics.txt", metrics_block(report));
    const std::string table = metrics_table(variant_name(model.params.config.variant()), report);
    write_text(args.out_dir + "/report.txt", table);
    std::cout << table;
    return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    EvaluateArgs eval;
    std::vector<double> thresholds = {0.2, 0.4, 0.6, 0.8};
};

int cmd_sweep(const SweepArgs& args) {
    require_file(args.eval.checkpoint, "checkpoint");
    require_file(args.eval.test_path, "validation split");
    std::vector<double> thresholds = args.thresholds;
    if (thresholds.empty()) throw ConfigError("sweep needs at least one threshold");
    for (double t : thresholds)
        if (!(t >= 0.0 && t <= 1.0))
            throw ConfigError("sweep threshold " + fmt(t) + " outside [0,1]");
    std::sort(thresholds.begin(), thresholds.end());
    if (std::adjacent_find(thresholds.begin(), thresholds.end()) != thresholds.end())
        throw ConfigError("sweep thresholds must be distinct");

    const LabelSpace labels = args.eval.data.load();
    const Vocabulary vocab = Vocabulary::load(args.eval.vocab_path);
    LoadedModel model = load_model_checkpoint(args.eval.checkpoint);
    const auto records = load_split(args.eval.test_path, labels);

    EvaluateArgs eval_args = args.eval;
    eval_args.graphs = "detection";

    std::vector<std::pair<double, double>> results;  // threshold -> meteor
    std::size_t usable = 0;
    for (double threshold : thresholds) {
        double meteor = 0.0;
        try {
            meteor = run_evaluation(eval_args, model.params, labels, vocab, records, threshold)
                         .meteor;
            ++usable;
        } catch (const DataError& e) {
            std::cerr << "warning: threshold " << fmt(threshold, "%.2f") << " scored as 0 ("
                      << e.what() << ")\n";
        }
        results.emplace_back(threshold, meteor);
    }
    if (usable == 0) throw DataError("sweep: every threshold rejected every sample");

    // argmax, ties toward the lower threshold (results are in ascending order)
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i)
        if (results[i].second > results[best].second) best = i;

    std::string out;
    for (const auto& [threshold, meteor] : results)
        out += "threshold=" + fmt(threshold, "%.2f") + " meteor=" + scaled(meteor) + "\n";
    out += "selected=" + fmt(results[best].first, "%.2f") + "\n";
    fs::create_directories(args.eval.out_dir);
    write_text(args.eval.out_dir + "/sweep.txt", out);
    std::cout << out;
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
    std::string variant = "base";
    std::uint64_t seed = 7;
    double eps = 1e-5;
    std::size_t embed_dim = 8;
    std::size_t hidden_dim = 16;
    std::size_t attn_dim = 8;
    std::size_t vocab_size = 20;
    std::size_t max_coords = 200;
    double tolerance = 1e-4;
};

// Tiny deterministic fixture: two objects joined by two relations, reified
// to a 4-node graph, paired with a 5-token caption.
TrainingSample gradcheck_sample(const LabelSpace& labels, std::size_t vocab_size) {
    SceneGraph g;
    g.nodes.push_back(ObjectNode{0, labels.objects()[0], 0.9, std::nullopt});
    g.nodes.push_back(ObjectNode{1, labels.objects()[1], 0.8, std::nullopt});
    g.edges.push_back(RelationEdge{0, 1, labels.predicates()[0], 0.7});
    g.edges.push_back(RelationEdge{1, 0, labels.predicates()[1], 0.6});

    TrainingSample s;
    s.graph = std::make_shared<const ReifiedGraph>(reify(g));
    for (const ReifiedNode& n : s.graph->nodes) s.node_ids.push_back(node_label_index(n, labels));
    const TokenId caption[] = {4, 6, 5, 7, 4};
    for (TokenId t : caption) s.tokens.push_back(t % static_cast<TokenId>(vocab_size));
    return s;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    if (sizeof(real) != 8) throw ConfigError("gradcheck needs the 64-bit build");

    const LabelSpace labels =
        LabelSpace::from_lists({"clock", "tower", "sky", "building"}, {"on", "in", "near"});

    ModelConfig config;
    config.embed_dim = args.embed_dim;
    config.hidden_dim = args.hidden_dim;
    config.attn_dim = args.attn_dim;
    config.set_variant(parse_variant(args.variant));
    config.vocab_size = args.vocab_size;
    config.label_count = labels.joint_count();

    ModelParams params = init_params(config, args.seed);
    const TrainingSample sample = gradcheck_sample(labels, args.vocab_size);

    // dropout frozen: an identically re-seeded stream every evaluation
    const std::uint64_t mask_seed = args.seed ^ 0x9e3779b97f4a7c15ull;
    const auto loss_fn = [&]() {
        Rng rng(mask_seed);
        return teacher_forced_loss(sample, params, true, rng);
    };
    // long-double reference route keeps the difference quotient clean
    const auto hp_loss_fn = [&]() {
        return reference_teacher_forced_loss(params, sample, true, mask_seed);
    };

    const GradientReport report = finite_difference_check(loss_fn, params.trainable(), args.eps,
                                                          args.max_coords, args.seed, hp_loss_fn);

    std::cout << variant_name(config.variant()) << " gradient check, eps=" << fmt(args.eps)
              << "\n";
    for (const auto& entry : report.per_param)
        std::cout << "  " << entry.name << " rel_err=" << fmt(entry.max_rel_error, "%.3e")
                  << " coords=" << entry.coords_checked << " (analytic "
                  << fmt(entry.analytic_at_worst, "%.6e") << ", numeric "
                  << fmt(entry.numeric_at_worst, "%.6e") << ")\n";
    std::cout << "max_rel_error=" << fmt(report.max_rel_error, "%.3e") << "\n";

    if (report.max_rel_error >= args.tolerance) {
        std::cerr << "gradient check FAILED: worst parameter " << report.worst()->name
                  << " rel_err=" << fmt(report.max_rel_error, "%.3e") << " (tolerance "
                  << fmt(args.tolerance, "%.1e") << ")\n";
        return kExitNumeric;
    }
    std::cout << "gradient check passed\n";
    return 0;
}

void attach_train_options(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--train", args.train_path, "training split")->required();
    cmd->add_option("--val", args.val_path, "validation split (enables per-epoch METEOR)");
    args.data.attach(cmd);
    cmd->add_option("--out", args.out_dir, "artifact directory")->required();
    cmd->add_option("--variant", args.variant, "base | att | enc | enc_att");
    cmd->add_option("--embed-dim", args.embed_dim, "node/word embedding width");
    cmd->add_option("--hidden-dim", args.hidden_dim, "LSTM state width");
    cmd->add_option("--attn-dim", args.attn_dim, "attention MLP width");
    cmd->add_option("--gat-layers", args.gat_layers, "encoder depth");
    cmd->add_option("--max-len", args.max_len, "validation decode length cap");
    cmd->add_option("--seed", args.train.seed, "run seed");
    cmd->add_option("--lr", args.train.lr, "Adam learning rate");
    cmd->add_option("--epochs", args.train.epochs, "epoch budget");
    cmd->add_option("--batch", args.train.batch_size, "mini-batch size");
    cmd->add_option("--grad-clip", args.train.grad_clip, "global gradient-norm clip, 0 = off");
    cmd->add_option("--max-steps", args.train.max_steps, "optimizer step budget, 0 = off");
    cmd->add_option("--stop-loss", args.train.stop_loss, "stop below this epoch loss, 0 = off");
}

}  // namespace

namespace {

// "key = value" lines; '#' starts a comment. Values become "--key value"
// token pairs spliced in right after the subcommand, so flags given on the
// actual command line override them.
std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ParseError(path + " line " + std::to_string(line_no) +
                                 ": expected key = value");
            continue;
        }
        const auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t\r");
            const auto e = v.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(path + " line " + std::to_string(line_no) + ": empty key");
        tokens.push_back("--" + key);
        if (!value.empty()) tokens.push_back(value);
    }
    return tokens;
}

// pull out "--config PATH" (or --config=PATH) and splice the file contents in
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        std::size_t remove = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            remove = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            remove = 1;
        }
        if (remove == 0) continue;
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                   args.begin() + static_cast<std::ptrdiff_t>(i + remove));
        const std::vector<std::string> extra = config_tokens(path);
        // after the subcommand token, before everything already given
        const std::size_t at = args.empty() ? 0 : 1;
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
        break;
    }
    return args;
}

int run_parsed(const std::vector<std::string>& args);

}  // namespace

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

int run(const std::vector<std::string>& args) {
    try {
        return run_parsed(apply_config_file(args));
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

namespace {

int run_parsed(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("gcap");
    for (const std::string& a : args) argv.push_back(a.c_str());
    const int argc = static_cast<int>(argv.size());
    CLI::App app{"scene-graph-to-caption toolkit"};
    app.require_subcommand(1);

    const auto config_note = [](CLI::App* cmd) {
        // config tokens precede explicit flags; the last occurrence wins
        cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        cmd->add_option("--config", "key = value file applied before other flags");
    };

    PrepareArgs prepare_args;
    CLI::App* prepare = app.add_subcommand("prepare", "build vocabulary and dataset stats");
    config_note(prepare);
    prepare->add_option("--train", prepare_args.train_path, "training split")->required();
    prepare_args.data.attach(prepare);
    prepare->add_option("--out", prepare_args.out_dir, "artifact directory")->required();

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a caption model");
    config_note(train);
    attach_train_options(train, train_args);

    GenerateArgs generate_args;
    CLI::App* generate = app.add_subcommand("generate", "decode captions for records");
    config_note(generate);
    generate->add_option("--checkpoint", generate_args.checkpoint, "model checkpoint")->required();
    generate->add_option("--input", generate_args.input_path, "records to caption")->required();
    generate_args.data.attach(generate);
    generate->add_option("--vocab", generate_args.vocab_path, "vocabulary file")->required();
    generate->add_option("--stats", generate_args.stats_path,
                         "stats file (needed for detector-form records)");
    generate->add_option("--out", generate_args.out_dir, "output directory")->required();
    generate->add_option("--mode", generate_args.mode, "greedy | sample");
    generate->add_option("--temp", generate_args.temperature, "sampling temperature");
    generate->add_option("--seed", generate_args.seed, "sampling seed");
    generate->add_option("--max-len", generate_args.max_len, "decode length cap");
    generate->add_option("--threshold", generate_args.threshold,
                         "confidence threshold for detector-form records");

    EvaluateArgs evaluate_args;
    CLI::App* evaluate = app.add_subcommand("evaluate", "score a model on a split");
    config_note(evaluate);
    evaluate->add_option("--checkpoint", evaluate_args.checkpoint, "model checkpoint")->required();
    evaluate->add_option("--test", evaluate_args.test_path, "evaluation split")->required();
    evaluate_args.data.attach(evaluate);
    evaluate->add_option("--vocab", evaluate_args.vocab_path, "vocabulary file")->required();
    evaluate->add_option("--stats", evaluate_args.stats_path, "stats file (detection source)");
    evaluate->add_option("--out", evaluate_args.out_dir, "output directory")->required();
    evaluate->add_option("--graphs", evaluate_args.graphs, "gold | detection");
    evaluate->add_option("--threshold", evaluate_args.threshold, "detection confidence threshold");
    evaluate->add_option("--max-len", evaluate_args.max_len, "decode length cap");

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "pick a confidence threshold by METEOR");
    config_note(sweep);
    sweep->add_option("--checkpoint", sweep_args.eval.checkpoint, "model checkpoint")->required();
    sweep->add_option("--val", sweep_args.eval.test_path, "validation split")->required();
    sweep_args.eval.data.attach(sweep);
    sweep->add_option("--vocab", sweep_args.eval.vocab_path, "vocabulary file")->required();
    sweep->add_option("--stats", sweep_args.eval.stats_path, "stats file")->required();
    sweep->add_option("--out", sweep_args.eval.out_dir, "output directory")->required();
    sweep->add_option("--thresholds", sweep_args.thresholds, "candidate thresholds")
        ->delimiter(',');
    sweep->add_option("--max-len", sweep_args.eval.max_len, "decode length cap");

    GradcheckArgs gradcheck_args;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    config_note(gradcheck);
    gradcheck->add_option("--variant", gradcheck_args.variant, "base | att | enc | enc_att");
    gradcheck->add_option("--seed", gradcheck_args.seed, "fixture seed");
    gradcheck->add_option("--eps", gradcheck_args.eps, "perturbation size");
    gradcheck->add_option("--embed-dim", gradcheck_args.embed_dim, "embedding width");
    gradcheck->add_option("--hidden-dim", gradcheck_args.hidden_dim, "LSTM width");
    gradcheck->add_option("--attn-dim", gradcheck_args.attn_dim, "attention width");
    gradcheck->add_option("--vocab-size", gradcheck_args.vocab_size, "fixture vocabulary size");
    gradcheck->add_option("--max-coords", gradcheck_args.max_coords,
                          "coordinates checked per tensor");

    try {
        app.parse(argc, const_cast<char**>(argv.data()));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(prepare_args);
        if (train->parsed()) return cmd_train(train_args);
        if (generate->parsed()) return cmd_generate(generate_args);
        if (evaluate->parsed()) return cmd_evaluate(evaluate_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace

}  // namespace gcap::cli
