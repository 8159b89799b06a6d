#include "gcap/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace gcap {

namespace {

bool is_split_punct(char c) {
    switch (c) {
        case '.': case ',': case '!': case '?': case ';': case ':':
        case '"': case '(': case ')': case '\'':
            return true;
        default:
            return false;
    }
}

bool is_word_char(char c) { return !std::isspace(static_cast<unsigned char>(c)) && !is_split_punct(c); }

}  // namespace

std::vector<std::string> tokenize(const std::string& caption) {
    std::string text = caption;
    for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    std::vector<std::string> tokens;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
            continue;
        }
        if (c == '\'') {
            const bool letter_after = i + 1 < text.size() && is_word_char(text[i + 1]);
            const bool at_chunk_start =
                i == 0 || std::isspace(static_cast<unsigned char>(text[i - 1]));
            const bool letter_before = !current.empty();
            if (letter_after && (letter_before || at_chunk_start)) {
                // contraction: start a new token that carries the apostrophe
                flush();
                current.push_back(c);
                continue;
            }
            flush();
            tokens.emplace_back(1, c);
            continue;
        }
        if (is_split_punct(c)) {
            flush();
            tokens.emplace_back(1, c);
            continue;
        }
        current.push_back(c);
    }
    flush();
    return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {
const char* kReservedTokens[] = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary() {
    for (const char* t : kReservedTokens) tokens_.emplace_back(t);
    rebuild_index();
}

void Vocabulary::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        index_.emplace(tokens_[i], static_cast<TokenId>(i));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& tokenized_captions) {
    if (tokenized_captions.empty()) throw DataError("build_vocab: empty caption corpus");

    std::map<std::string, std::size_t> counts;
    for (const auto& caption : tokenized_captions)
        for (const std::string& tok : caption) ++counts[tok];

    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (auto& [token, count] : order) {
        if (v.index_.count(token)) continue;  // corpus token colliding with a reserved one
        v.index_.emplace(token, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(token);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.tokens_.push_back(line);
    }
    if (v.tokens_.size() < kReservedCount)
        throw FormatError("vocabulary file " + path + " is missing the reserved tokens");
    for (std::size_t i = 0; i < kReservedCount; ++i)
        if (v.tokens_[i] != kReservedTokens[i])
            throw FormatError("vocabulary file " + path + ": line " + std::to_string(i) +
                              " must be " + kReservedTokens[i]);
    v.rebuild_index();
    if (v.index_.size() != v.tokens_.size())
        throw FormatError("vocabulary file " + path + " contains duplicate tokens");
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (const std::string& t : tokens_) out << t << '\n';
}

TokenId Vocabulary::encode(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocabulary::encode_all(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(encode(t));
    return ids;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id >= tokens_.size())
        throw VocabError("token id " + std::to_string(id) + " out of range (vocabulary size " +
                         std::to_string(tokens_.size()) + ")");
    return tokens_[id];
}

// ---------------------------------------------------------------------------
// records

namespace {

using nlohmann::json;

DatasetRecord parse_record(const json& j, const LabelSpace& labels, std::size_t line_no) {
    const auto fail = [line_no](const std::string& what) -> ParseError {
        return ParseError("line " + std::to_string(line_no) + ": " + what);
    };

    DatasetRecord rec;
    if (!j.is_object()) throw fail("record is not an object");
    if (!j.contains("image_id") || !j.at("image_id").is_number_integer())
        throw fail("missing integer field 'image_id'");
    rec.image_id = j.at("image_id").get<long>();
    rec.schema = j.value("schema", 1);
    if (rec.schema != kDatasetSchemaVersion)
        throw fail("unsupported schema version " + std::to_string(rec.schema));

    if (!j.contains("objects") || !j.at("objects").is_array())
        throw fail("missing array field 'objects'");
    std::unordered_set<int> ids;
    for (const json& o : j.at("objects")) {
        ObjectNode node;
        node.id = o.at("id").get<int>();
        node.label = o.at("label").get<std::string>();
        node.confidence = o.value("confidence", 1.0);
        if (o.contains("bbox")) {
            const json& b = o.at("bbox");
            if (!b.is_array() || b.size() != 4) throw fail("bbox must be [x,y,w,h]");
            node.bbox = BoundingBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                    b[3].get<double>()};
        }
        if (!labels.object_index(node.label))
            throw VocabError("line " + std::to_string(line_no) + ": unknown object label '" +
                             node.label + "'");
        if (!ids.insert(node.id).second)
            throw DataError("line " + std::to_string(line_no) + ": duplicate object id " +
                            std::to_string(node.id));
        rec.objects.push_back(std::move(node));
    }

    const bool has_relations = j.contains("relations");
    const bool has_scores = j.contains("relation_scores");
    if (has_relations && has_scores)
        throw fail("record carries both 'relations' and 'relation_scores'");
    const auto check_endpoint = [&](int id) {
        if (!ids.count(id))
            throw DataError("line " + std::to_string(line_no) + ": relation endpoint " +
                            std::to_string(id) + " does not resolve to an object");
    };
    if (has_relations) {
        for (const json& r : j.at("relations")) {
            RelationEdge e;
            e.src = r.at("src").get<int>();
            e.dst = r.at("dst").get<int>();
            e.predicate = r.at("predicate").get<std::string>();
            e.confidence = r.value("confidence", 1.0);
            check_endpoint(e.src);
            check_endpoint(e.dst);
            if (!labels.predicate_index(e.predicate))
                throw VocabError("line " + std::to_string(line_no) + ": unknown predicate '" +
                                 e.predicate + "'");
            rec.relations.push_back(std::move(e));
        }
    } else if (has_scores) {
        rec.detector_form = true;
        for (const json& r : j.at("relation_scores")) {
            PairScores p;
            p.src = r.at("src").get<int>();
            p.dst = r.at("dst").get<int>();
            check_endpoint(p.src);
            check_endpoint(p.dst);
            if (!r.contains("scores") || !r.at("scores").is_object())
                throw fail("relation_scores entry needs a 'scores' object");
            for (const auto& [predicate, score] : r.at("scores").items()) {
                if (!labels.predicate_index(predicate))
                    throw VocabError("line " + std::to_string(line_no) + ": unknown predicate '" +
                                     predicate + "'");
                p.scores.emplace(predicate, score.get<double>());
            }
            rec.relation_scores.push_back(std::move(p));
        }
    } else {
        throw fail("record needs 'relations' or 'relation_scores'");
    }

    if (!j.contains("captions") || !j.at("captions").is_array())
        throw fail("missing array field 'captions'");
    for (const json& c : j.at("captions")) rec.captions.push_back(c.get<std::string>());
    return rec;
}

json record_to_json(const DatasetRecord& rec) {
    json j;
    j["image_id"] = rec.image_id;
    j["schema"] = rec.schema;
    json objects = json::array();
    for (const ObjectNode& n : rec.objects) {
        json o{{"id", n.id}, {"label", n.label}, {"confidence", n.confidence}};
        if (n.bbox) o["bbox"] = {n.bbox->x, n.bbox->y, n.bbox->w, n.bbox->h};
        objects.push_back(std::move(o));
    }
    j["objects"] = std::move(objects);
    if (rec.detector_form) {
        json scores = json::array();
        for (const PairScores& p : rec.relation_scores) {
            json s{{"src", p.src}, {"dst", p.dst}};
            s["scores"] = json::object();
            for (const auto& [pred, v] : p.scores) s["scores"][pred] = v;
            scores.push_back(std::move(s));
        }
        j["relation_scores"] = std::move(scores);
    } else {
        json rels = json::array();
        for (const RelationEdge& e : rec.relations)
            rels.push_back(json{{"src", e.src},
                                {"dst", e.dst},
                                {"predicate", e.predicate},
                                {"confidence", e.confidence}});
        j["relations"] = std::move(rels);
    }
    j["captions"] = rec.captions;
    return j;
}

}  // namespace

std::vector<DatasetRecord> load_split(const std::string& path, const LabelSpace& label_space) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            records.push_back(parse_record(j, label_space, line_no));
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void save_split(const std::string& path, std::span<const DatasetRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file: " + path);
    for (const DatasetRecord& rec : records) out << record_to_json(rec).dump() << '\n';
}

SceneGraph to_scene_graph(const DatasetRecord& record) {
    if (record.detector_form)
        throw DataError("record " + std::to_string(record.image_id) +
                        " is in detector form; post-process it instead");
    SceneGraph g;
    g.image_id = record.image_id;
    g.nodes = record.objects;
    g.edges = record.relations;
    validate_graph(g);
    return g;
}

DatasetStats compute_stats(std::span<const DatasetRecord> records) {
    DatasetStats stats;
    stats.records = records.size();
    for (const DatasetRecord& rec : records) {
        stats.pair_count += rec.captions.size();
        stats.max_object_nodes = std::max(stats.max_object_nodes, rec.objects.size());
    }
    if (!records.empty())
        stats.mean_captions_per_image =
            static_cast<double>(stats.pair_count) / static_cast<double>(records.size());
    return stats;
}

void save_stats(const std::string& path, const DatasetStats& stats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write stats file: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", stats.mean_captions_per_image);
    out << "records=" << stats.records << '\n'
        << "pair_count=" << stats.pair_count << '\n'
        << "mean_captions_per_image=" << buf << '\n'
        << "max_object_nodes=" << stats.max_object_nodes << '\n';
}

DatasetStats load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stats file: " + path);
    DatasetStats stats;
    std::string line;
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "records") stats.records = std::stoull(value);
            else if (key == "pair_count") stats.pair_count = std::stoull(value);
            else if (key == "mean_captions_per_image") stats.mean_captions_per_image = std::stod(value);
            else if (key == "max_object_nodes") stats.max_object_nodes = std::stoull(value);
            else continue;
        } catch (const std::exception&) {
            throw FormatError("stats file " + path + ": bad value for " + key);
        }
        ++seen;
    }
    if (seen < 4) throw FormatError("stats file " + path + " is incomplete");
    return stats;
}

std::vector<TrainingPair> make_training_pairs(std::span<const DatasetRecord> records) {
    std::vector<TrainingPair> pairs;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].captions.empty())
            throw DataError("record " + std::to_string(records[r].image_id) +
                            " has no captions; every training record needs at least one");
        for (std::size_t c = 0; c < records[r].captions.size(); ++c)
            pairs.push_back(TrainingPair{r, c});
    }
    return pairs;
}

}  // namespace gcap
