#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gcap/dataset.hpp"
#include "helpers.hpp"

using namespace gcap;
using test::tiny_labels;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("gcap_dataset_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("tokenizer splits words and punctuation") {
    CHECK(tokenize("A clock tower.") == std::vector<std::string>{"a", "clock", "tower", "."});
    CHECK(tokenize("brick building with clock tower in urban setting.") ==
          std::vector<std::string>{"brick", "building", "with", "clock", "tower", "in", "urban",
                                   "setting", "."});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("Don't stop!") == std::vector<std::string>{"don", "'t", "stop", "!"});
    CHECK(tokenize("\"hi,\" (he said)") ==
          std::vector<std::string>{"\"", "hi", ",", "\"", "(", "he", "said", ")"});
    CHECK(tokenize("the dogs' bowl") == std::vector<std::string>{"the", "dogs", "'", "bowl"});
}

TEST_CASE("tokenizer is idempotent on its own output") {
    const std::vector<std::string> captions = {
        "A clock tower.", "Don't stop!", "the dogs' bowl; it's (very) full...",
        "Hello, \"WORLD\": what's up?", "o'clock o' clock 'tis"};
    for (const std::string& caption : captions) {
        const auto once = tokenize(caption);
        std::string joined;
        for (const auto& t : once) {
            if (!joined.empty()) joined += ' ';
            joined += t;
        }
        CHECK(tokenize(joined) == once);
    }
}

TEST_CASE("vocabulary orders by frequency then lexicographically") {
    const Vocabulary v = Vocabulary::build({tokenize("a cat"), tokenize("a dog")});
    REQUIRE(v.size() == 7);
    CHECK(v.token(0) == "<pad>");
    CHECK(v.token(1) == "<s>");
    CHECK(v.token(2) == "</s>");
    CHECK(v.token(3) == "<unk>");
    CHECK(v.token(4) == "a");    // frequency 2
    CHECK(v.token(5) == "cat");  // frequency 1, lexicographic
    CHECK(v.token(6) == "dog");
}

TEST_CASE("every hapax token is retained") {
    const Vocabulary v = Vocabulary::build({tokenize("one singular unrepeatable caption")});
    for (const std::string& tok : {"one", "singular", "unrepeatable", "caption"})
        CHECK(v.encode(tok) != Vocabulary::kUnk);
}

TEST_CASE("encode and decode round-trip on training captions") {
    const auto tokens = tokenize("a tall clock tower near a building .");
    const Vocabulary v = Vocabulary::build({tokens});
    const auto ids = v.encode_all(tokens);
    for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(v.token(ids[i]) == tokens[i]);
}

TEST_CASE("unknown tokens encode to unk and bad ids are refused") {
    const Vocabulary v = Vocabulary::build({tokenize("a cat")});
    CHECK(v.encode("zebra") == Vocabulary::kUnk);
    CHECK_THROWS_AS((void)v.token(static_cast<TokenId>(v.size())), VocabError);
}

TEST_CASE("empty corpus is a data error") {
    CHECK_THROWS_AS((void)Vocabulary::build({}), DataError);
}

TEST_CASE("vocabulary file round-trips and validates reserved rows") {
    TempDir tmp;
    const Vocabulary v = Vocabulary::build({tokenize("a cat sat")});
    v.save(tmp.file("vocab.txt"));
    const Vocabulary loaded = Vocabulary::load(tmp.file("vocab.txt"));
    REQUIRE(loaded.size() == v.size());
    for (TokenId i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));

    write_lines(tmp.file("bad.txt"), {"<pad>", "<s>", "</s>", "oops", "a"});
    CHECK_THROWS_AS((void)Vocabulary::load(tmp.file("bad.txt")), FormatError);
}

TEST_CASE("load_split reads valid records") {
    TempDir tmp;
    const LabelSpace labels = tiny_labels();
    write_lines(
        tmp.file("split.jsonl"),
        {R"({"image_id":1,"schema":1,"objects":[{"id":0,"label":"cat","confidence":1.0},{"id":1,"label":"rock","confidence":1.0}],"relations":[{"src":0,"dst":1,"predicate":"on","confidence":1.0}],"captions":["a cat on a rock."]})",
         R"({"image_id":2,"schema":1,"objects":[{"id":0,"label":"dog","confidence":0.5,"bbox":[1,2,3,4]}],"relations":[],"captions":["a dog.","the dog."]})",
         R"({"image_id":3,"schema":1,"objects":[{"id":0,"label":"bird","confidence":0.9},{"id":1,"label":"tree","confidence":0.7}],"relation_scores":[{"src":0,"dst":1,"scores":{"on":0.6,"near":0.4}}],"captions":["a bird."]})"});
    const auto records = load_split(tmp.file("split.jsonl"), labels);
    REQUIRE(records.size() == 3);
    CHECK(records[0].image_id == 1);
    CHECK_FALSE(records[0].detector_form);
    CHECK(records[1].objects[0].bbox.has_value());
    CHECK(records[2].detector_form);
    REQUIRE(records[2].relation_scores.size() == 1);
    CHECK(records[2].relation_scores[0].scores.at("on") == 0.6);
}

TEST_CASE("load_split names the line of a dangling relation") {
    TempDir tmp;
    write_lines(
        tmp.file("bad.jsonl"),
        {R"({"image_id":1,"schema":1,"objects":[{"id":0,"label":"cat","confidence":1.0}],"relations":[],"captions":["x"]})",
         R"({"image_id":2,"schema":1,"objects":[{"id":0,"label":"cat","confidence":1.0}],"relations":[{"src":0,"dst":9,"predicate":"on","confidence":1.0}],"captions":["x"]})"});
    CHECK_THROWS_WITH_AS((void)load_split(tmp.file("bad.jsonl"), tiny_labels()),
                         doctest::Contains("line 2"), DataError);
}

TEST_CASE("load_split reports malformed json with its line number") {
    TempDir tmp;
    write_lines(tmp.file("bad.jsonl"), {"{not json"});
    CHECK_THROWS_WITH_AS((void)load_split(tmp.file("bad.jsonl"), tiny_labels()),
                         doctest::Contains("line 1"), ParseError);
}

TEST_CASE("load_split rejects unknown labels") {
    TempDir tmp;
    write_lines(
        tmp.file("bad.jsonl"),
        {R"({"image_id":1,"schema":1,"objects":[{"id":0,"label":"unicorn","confidence":1.0}],"relations":[],"captions":["x"]})"});
    CHECK_THROWS_AS((void)load_split(tmp.file("bad.jsonl"), tiny_labels()), VocabError);
}

TEST_CASE("records round-trip through save and load") {
    TempDir tmp;
    const LabelSpace labels = tiny_labels();
    std::vector<DatasetRecord> records(2);
    records[0].image_id = 10;
    records[0].objects = {ObjectNode{0, "cat", 0.75, BoundingBox{1, 2, 3, 4}},
                          ObjectNode{1, "tree", 0.5, std::nullopt}};
    records[0].relations = {RelationEdge{0, 1, "near", 0.25}};
    records[0].captions = {"a cat near a tree.", "cat by tree"};
    records[1].image_id = 11;
    records[1].detector_form = true;
    records[1].objects = {ObjectNode{0, "dog", 0.5, std::nullopt},
                          ObjectNode{1, "car", 0.25, std::nullopt}};
    records[1].relation_scores = {PairScores{0, 1, {{"on", 0.5}, {"under", 0.5}}}};
    records[1].captions = {"a dog."};

    save_split(tmp.file("out.jsonl"), records);
    const auto loaded = load_split(tmp.file("out.jsonl"), labels);
    REQUIRE(loaded.size() == records.size());
    CHECK(loaded[0] == records[0]);
    CHECK(loaded[1] == records[1]);
}

TEST_CASE("training pairs expand one sample per caption") {
    std::vector<DatasetRecord> records(2);
    records[0].captions = {"a", "b", "c", "d", "e"};
    records[1].captions = {"f", "g", "h", "i", "j"};
    const auto pairs = make_training_pairs(records);
    CHECK(pairs.size() == 10);
    CHECK(pairs[7].record == 1);
    CHECK(pairs[7].caption == 2);
}

TEST_CASE("a captionless training record is a data error") {
    std::vector<DatasetRecord> records(1);
    records[0].image_id = 42;
    CHECK_THROWS_AS((void)make_training_pairs(records), DataError);
}

TEST_CASE("stats aggregate counts, means and the max graph size") {
    std::vector<DatasetRecord> records(3);
    records[0].objects.resize(3);
    records[0].captions = {"a", "b"};
    records[1].objects.resize(7);
    records[1].captions = {"c"};
    records[2].objects.resize(5);
    records[2].captions = {"d", "e", "f"};
    const DatasetStats stats = compute_stats(records);
    CHECK(stats.records == 3);
    CHECK(stats.pair_count == 6);
    CHECK(stats.mean_captions_per_image == doctest::Approx(2.0));
    CHECK(stats.max_object_nodes == 7);

    CHECK(compute_stats({}) == DatasetStats{});
}

TEST_CASE("stats files round-trip") {
    TempDir tmp;
    DatasetStats stats;
    stats.records = 45498;
    stats.pair_count = 221792;
    stats.mean_captions_per_image = 5.002;
    stats.max_object_nodes = 25;
    save_stats(tmp.file("stats.txt"), stats);
    CHECK(load_stats(tmp.file("stats.txt")) == stats);
}

TEST_CASE("to_scene_graph refuses detector-form records") {
    DatasetRecord rec;
    rec.detector_form = true;
    CHECK_THROWS_AS((void)to_scene_graph(rec), DataError);
}
