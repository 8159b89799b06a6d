#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gcap/cli.hpp"
#include "gcap/dataset.hpp"
#include "toy_corpus.hpp"

using namespace gcap;
using test::make_sweep_records;
using test::make_toy_records;
using test::toy_labels;

namespace {

namespace fs = std::filesystem;

struct Workspace {
    fs::path root;
    Workspace() {
        static int counter = 0;
        root = fs::temp_directory_path() / ("gcap_cli_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
        fs::create_directories(root);
        write_labels();
    }
    ~Workspace() { fs::remove_all(root); }

    std::string file(const std::string& name) const { return (root / name).string(); }

    void write_labels() {
        const LabelSpace labels = toy_labels();
        std::ofstream obj(file("objects.txt"), std::ios::binary);
        for (const auto& l : labels.objects()) obj << l << '\n';
        std::ofstream pred(file("predicates.txt"), std::ios::binary);
        for (const auto& l : labels.predicates()) pred << l << '\n';
    }

    std::vector<std::string> data_flags() const {
        return {"--objects", file("objects.txt"), "--predicates", file("predicates.txt")};
    }

    std::string slurp(const std::string& name) const {
        std::ifstream in(file(name), std::ios::binary);
        REQUIRE(in);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    }
};

int run_cli(std::vector<std::string> args, const std::vector<std::string>& extra = {}) {
    for (const std::string& a : extra) args.push_back(a);
    return cli::run(args);
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"train"}) == 1);  // missing required flags
    CHECK(run_cli({}) == 1);
}

TEST_CASE("prepare writes deterministic artifacts and fails cleanly") {
    Workspace ws;
    save_split(ws.file("train.jsonl"), make_toy_records(8, 3));

    const std::vector<std::string> args = {"prepare", "--train", ws.file("train.jsonl"),
                                           "--out", ws.file("out")};
    REQUIRE(run_cli(args, ws.data_flags()) == 0);
    const std::string vocab_once = ws.slurp("out/vocab.txt");
    const std::string stats_once = ws.slurp("out/stats.txt");
    CHECK(vocab_once.rfind("<pad>\n<s>\n</s>\n<unk>\n", 0) == 0);
    CHECK(stats_once.find("pair_count=8") != std::string::npos);

    REQUIRE(run_cli(args, ws.data_flags()) == 0);  // rerun, identical output
    CHECK(ws.slurp("out/vocab.txt") == vocab_once);
    CHECK(ws.slurp("out/stats.txt") == stats_once);

    CHECK(run_cli({"prepare", "--train", ws.file("missing.jsonl"), "--out", ws.file("out")},
                  ws.data_flags()) == 2);
}

TEST_CASE("train, generate, evaluate and sweep cooperate on a toy corpus") {
    Workspace ws;
    const auto records = make_toy_records(6, 9);
    save_split(ws.file("train.jsonl"), records);
    save_split(ws.file("sweep.jsonl"), make_sweep_records(records, 11));

    // single-node record: must land in the rejected sidecar
    DatasetRecord lonely;
    lonely.image_id = 900;
    lonely.objects = {ObjectNode{0, "cat", 1.0, std::nullopt}};
    lonely.captions = {"a cat"};
    auto gen_input = records;
    gen_input.push_back(lonely);
    save_split(ws.file("gen.jsonl"), gen_input);

    REQUIRE(run_cli({"prepare", "--train", ws.file("train.jsonl"), "--out", ws.file("out")},
                    ws.data_flags()) == 0);

    REQUIRE(run_cli({"train", "--train", ws.file("train.jsonl"), "--out", ws.file("out"),
                     "--variant", "base", "--embed-dim", "16", "--hidden-dim", "32",
                     "--attn-dim", "16", "--lr", "0.01", "--epochs", "400", "--batch", "6",
                     "--seed", "1", "--stop-loss", "0.05", "--max-steps", "400"},
                    ws.data_flags()) == 0);
    CHECK(fs::exists(ws.file("out/checkpoint_final.gcap")));
    CHECK(fs::exists(ws.file("out/checkpoint_best.gcap")));
    CHECK(fs::exists(ws.file("out/train_log.txt")));

    SUBCASE("generate decodes the checkpoint and sidecars rejections") {
        const std::vector<std::string> gen = {
            "generate",     "--checkpoint", ws.file("out/checkpoint_final.gcap"),
            "--input",      ws.file("gen.jsonl"), "--vocab", ws.file("out/vocab.txt"),
            "--stats",      ws.file("out/stats.txt"), "--out", ws.file("gen_out"),
            "--max-len",    "10"};
        REQUIRE(run_cli(gen, ws.data_flags()) == 0);
        const std::string captions = ws.slurp("gen_out/captions.tsv");
        const std::string rejected = ws.slurp("gen_out/rejected.tsv");
        CHECK(std::count(captions.begin(), captions.end(), '\n') == 6);
        CHECK(rejected.find("900\tfewer than two object nodes") != std::string::npos);

        REQUIRE(run_cli(gen, ws.data_flags()) == 0);  // greedy determinism
        CHECK(ws.slurp("gen_out/captions.tsv") == captions);
    }

    SUBCASE("sampling with a fixed seed reproduces itself") {
        const std::vector<std::string> gen = {
            "generate",     "--checkpoint", ws.file("out/checkpoint_final.gcap"),
            "--input",      ws.file("train.jsonl"), "--vocab", ws.file("out/vocab.txt"),
            "--out",        ws.file("sample_out"), "--mode", "sample", "--temp", "0.8",
            "--seed",       "42", "--max-len", "10"};
        REQUIRE(run_cli(gen, ws.data_flags()) == 0);
        const std::string first = ws.slurp("sample_out/captions.tsv");
        REQUIRE(run_cli(gen, ws.data_flags()) == 0);
        CHECK(ws.slurp("sample_out/captions.tsv") == first);
    }

    SUBCASE("evaluate reports the five metric keys on the gold path") {
        REQUIRE(run_cli({"evaluate", "--checkpoint", ws.file("out/checkpoint_final.gcap"),
                         "--test", ws.file("train.jsonl"), "--vocab", ws.file("out/vocab.txt"),
                         "--out", ws.file("eval_out"), "--graphs", "gold", "--max-len", "10"},
                        ws.data_flags()) == 0);
        const std::string metrics = ws.slurp("eval_out/metrics.txt");
        for (const char* key : {"B-1=", "B-2=", "B-3=", "B-4=", "METEOR=", "samples=6",
                                "rejected=0"})
            CHECK(metrics.find(key) != std::string::npos);
        // overfit on its own six training graphs: near-perfect unigrams
        const double b1 = std::stod(metrics.substr(metrics.find("B-1=") + 4));
        CHECK(b1 >= 90.0);  // reported x100
    }

    SUBCASE("the detection path applies the postprocess threshold") {
        REQUIRE(run_cli({"evaluate", "--checkpoint", ws.file("out/checkpoint_final.gcap"),
                         "--test", ws.file("sweep.jsonl"), "--vocab", ws.file("out/vocab.txt"),
                         "--stats", ws.file("out/stats.txt"), "--out", ws.file("eval_det"),
                         "--graphs", "detection", "--threshold", "0.4", "--max-len", "10"},
                        ws.data_flags()) == 0);
        const std::string metrics = ws.slurp("eval_det/metrics.txt");
        CHECK(metrics.find("samples=6") != std::string::npos);
    }

    SUBCASE("sweep selects the threshold that recovers the training graphs") {
        REQUIRE(run_cli({"sweep", "--checkpoint", ws.file("out/checkpoint_final.gcap"),
                         "--val", ws.file("sweep.jsonl"), "--vocab", ws.file("out/vocab.txt"),
                         "--stats", ws.file("out/stats.txt"), "--out", ws.file("sweep_out"),
                         "--thresholds", "0.2", "0.4", "0.6", "0.8", "--max-len", "10"},
                        ws.data_flags()) == 0);
        const std::string sweep = ws.slurp("sweep_out/sweep.txt");
        CHECK(sweep.find("selected=0.40") != std::string::npos);
        CHECK(sweep.find("threshold=0.20") != std::string::npos);
    }

    SUBCASE("a single candidate threshold is returned as selected") {
        REQUIRE(run_cli({"sweep", "--checkpoint", ws.file("out/checkpoint_final.gcap"),
                         "--val", ws.file("sweep.jsonl"), "--vocab", ws.file("out/vocab.txt"),
                         "--stats", ws.file("out/stats.txt"), "--out", ws.file("sweep_one"),
                         "--thresholds", "0.4", "--max-len", "10"},
                        ws.data_flags()) == 0);
        CHECK(ws.slurp("sweep_one/sweep.txt").find("selected=0.40") != std::string::npos);
    }
}

TEST_CASE("a zero learning rate logs a warning and still exits cleanly") {
    Workspace ws;
    save_split(ws.file("train.jsonl"), make_toy_records(4, 13));
    REQUIRE(run_cli({"prepare", "--train", ws.file("train.jsonl"), "--out", ws.file("out")},
                    ws.data_flags()) == 0);
    REQUIRE(run_cli({"train", "--train", ws.file("train.jsonl"), "--out", ws.file("out"),
                     "--embed-dim", "8", "--hidden-dim", "8", "--attn-dim", "8", "--lr", "0",
                     "--epochs", "1", "--batch", "4", "--seed", "2"},
                    ws.data_flags()) == 0);
    CHECK(ws.slurp("out/train_log.txt").find("warning: lr=0") != std::string::npos);
}

TEST_CASE("training without prepared artifacts is a data error") {
    Workspace ws;
    save_split(ws.file("train.jsonl"), make_toy_records(4, 17));
    CHECK(run_cli({"train", "--train", ws.file("train.jsonl"), "--out", ws.file("nowhere")},
                  ws.data_flags()) == 2);
}

TEST_CASE("config files feed flags and the command line wins") {
    Workspace ws;
    save_split(ws.file("train.jsonl"), make_toy_records(4, 19));
    REQUIRE(run_cli({"prepare", "--train", ws.file("train.jsonl"), "--out", ws.file("out")},
                    ws.data_flags()) == 0);
    {
        std::ofstream cfg(ws.file("run.cfg"), std::ios::binary);
        cfg << "lr=0.5\nepochs=1\nbatch=4\nembed-dim=8\nhidden-dim=8\nattn-dim=8\nseed=3\n";
    }
    REQUIRE(run_cli({"train", "--config", ws.file("run.cfg"), "--train", ws.file("train.jsonl"),
                     "--out", ws.file("out")},
                    ws.data_flags()) == 0);
    CHECK(ws.slurp("out/train_log.txt").find("lr=0.5") != std::string::npos);

    REQUIRE(run_cli({"train", "--config", ws.file("run.cfg"), "--train", ws.file("train.jsonl"),
                     "--out", ws.file("out"), "--lr", "0.25"},
                    ws.data_flags()) == 0);
    CHECK(ws.slurp("out/train_log.txt").find("lr=0.25") != std::string::npos);
}

TEST_CASE("gradcheck passes for the base variant from the command line") {
    CHECK(run_cli({"gradcheck", "--variant", "base", "--max-coords", "40"}) == 0);
}
