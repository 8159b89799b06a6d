#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gcap/scene_graph.hpp"

namespace gcap {

using TokenId = std::uint32_t;

// Deterministic tokenizer: lowercase, split on whitespace, the punctuation
// marks . , ! ? ; : " ( ) ' become separate tokens, and contractions split at
// the apostrophe ("don't" -> "don" "'t"). An apostrophe directly followed by
// a letter at the start of a chunk stays attached to it, which makes the
// tokenizer idempotent on its own output joined by spaces.
std::vector<std::string> tokenize(const std::string& caption);

class Vocabulary {
  public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kStart = 1;
    static constexpr TokenId kEnd = 2;
    static constexpr TokenId kUnk = 3;
    static constexpr std::size_t kReservedCount = 4;

    Vocabulary();

    // All distinct corpus tokens (no frequency cutoff), ordered by descending
    // frequency then lexicographically, after the four reserved tokens.
    static Vocabulary build(const std::vector<std::vector<std::string>>& tokenized_captions);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return tokens_.size(); }
    TokenId encode(const std::string& token) const;  // unknown -> kUnk
    std::vector<TokenId> encode_all(std::span<const std::string> tokens) const;
    const std::string& token(TokenId id) const;      // out of range -> VocabError

  private:
    std::vector<std::string> tokens_;
    std::map<std::string, TokenId> index_;
    void rebuild_index();
};

// One dataset line: a graph in gold form (relations) or detector form
// (relation_scores), plus the image's captions.
struct DatasetRecord {
    long image_id = 0;
    std::vector<ObjectNode> objects;
    std::vector<RelationEdge> relations;     // gold form
    std::vector<PairScores> relation_scores; // detector form
    bool detector_form = false;
    std::vector<std::string> captions;
    int schema = 1;

    bool operator==(const DatasetRecord&) const = default;
};

constexpr int kDatasetSchemaVersion = 1;

// Line-delimited records; malformed lines raise ParseError naming the line,
// unknown labels raise VocabError, dangling endpoints raise DataError.
std::vector<DatasetRecord> load_split(const std::string& path, const LabelSpace& label_space);
void save_split(const std::string& path, std::span<const DatasetRecord> records);

// Gold-form record as a SceneGraph (detector-form records have no fixed
// edges yet and are refused).
SceneGraph to_scene_graph(const DatasetRecord& record);

struct DatasetStats {
    std::size_t records = 0;
    std::size_t pair_count = 0;          // one (graph, caption) pair per caption
    double mean_captions_per_image = 0;
    std::size_t max_object_nodes = 0;    // cap_size bound for detection graphs

    bool operator==(const DatasetStats&) const = default;
};

DatasetStats compute_stats(std::span<const DatasetRecord> records);
void save_stats(const std::string& path, const DatasetStats& stats);
DatasetStats load_stats(const std::string& path);

// (record index, caption index) pairs, one per caption of every record.
struct TrainingPair {
    std::size_t record = 0;
    std::size_t caption = 0;
};

std::vector<TrainingPair> make_training_pairs(std::span<const DatasetRecord> records);

}  // namespace gcap
