#include "gcap/scene_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace gcap {

const ObjectNode* SceneGraph::find_node(int id) const {
    for (const ObjectNode& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

// ---------------------------------------------------------------------------
// LabelSpace

LabelSpace LabelSpace::from_lists(std::vector<std::string> objects,
                                  std::vector<std::string> predicates) {
    LabelSpace s;
    s.objects_ = std::move(objects);
    s.predicates_ = std::move(predicates);
    for (std::size_t i = 0; i < s.objects_.size(); ++i)
        if (!s.object_index_.emplace(s.objects_[i], i).second)
            throw DataError("label space: duplicate object label '" + s.objects_[i] + "'");
    for (std::size_t i = 0; i < s.predicates_.size(); ++i)
        if (!s.predicate_index_.emplace(s.predicates_[i], i).second)
            throw DataError("label space: duplicate predicate label '" + s.predicates_[i] + "'");
    return s;
}

namespace {

std::vector<std::string> read_label_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file: " + path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        labels.push_back(line);
    }
    if (labels.empty()) throw DataError("label file is empty: " + path);
    return labels;
}

}  // namespace

LabelSpace LabelSpace::load(const std::string& objects_path, const std::string& predicates_path) {
    return from_lists(read_label_lines(objects_path), read_label_lines(predicates_path));
}

std::optional<std::size_t> LabelSpace::object_index(const std::string& label) const {
    auto it = object_index_.find(label);
    if (it == object_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> LabelSpace::predicate_index(const std::string& label) const {
    auto it = predicate_index_.find(label);
    if (it == predicate_index_.end()) return std::nullopt;
    return it->second;
}

std::size_t LabelSpace::require_object(const std::string& label) const {
    if (auto i = object_index(label)) return *i;
    throw VocabError("unknown object label '" + label + "'");
}

std::size_t LabelSpace::require_predicate(const std::string& label) const {
    if (auto i = predicate_index(label)) return *i;
    throw VocabError("unknown predicate label '" + label + "'");
}

// ---------------------------------------------------------------------------
// validation

void validate_graph(const SceneGraph& g) {
    std::unordered_set<int> ids;
    for (const ObjectNode& n : g.nodes) {
        if (!ids.insert(n.id).second)
            throw DataError("scene graph: duplicate node id " + std::to_string(n.id));
        if (!(n.confidence >= 0.0 && n.confidence <= 1.0))
            throw DataError("scene graph: node " + std::to_string(n.id) +
                            " confidence outside [0,1]");
        if (n.bbox && !(n.bbox->w > 0.0 && n.bbox->h > 0.0))
            throw DataError("scene graph: node " + std::to_string(n.id) +
                            " has a non-positive bounding box");
    }
    for (const RelationEdge& e : g.edges) {
        if (e.src == e.dst)
            throw DataError("scene graph: self-relation on node " + std::to_string(e.src));
        if (!ids.count(e.src) || !ids.count(e.dst))
            throw DataError("scene graph: edge " + std::to_string(e.src) + "->" +
                            std::to_string(e.dst) + " has a dangling endpoint");
        if (!(e.confidence >= 0.0 && e.confidence <= 1.0))
            throw DataError("scene graph: edge " + std::to_string(e.src) + "->" +
                            std::to_string(e.dst) + " confidence outside [0,1]");
    }
}

// ---------------------------------------------------------------------------
// reify

ReifiedGraph reify(const SceneGraph& g) {
    validate_graph(g);

    ReifiedGraph out;
    out.object_count = g.nodes.size();
    out.nodes.reserve(g.nodes.size() + g.edges.size());

    std::unordered_map<int, std::size_t> position;
    for (const ObjectNode& n : g.nodes) {
        position.emplace(n.id, out.nodes.size());
        out.nodes.push_back(ReifiedNode{n.label, NodeKind::object, n.id});
    }
    const std::size_t total = g.nodes.size() + g.edges.size();
    std::vector<std::set<std::size_t>> adj(total);
    for (std::size_t i = 0; i < total; ++i) adj[i].insert(i);  // self loop

    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const RelationEdge& e = g.edges[k];
        const std::size_t r = out.nodes.size();
        out.nodes.push_back(ReifiedNode{e.predicate, NodeKind::relation, static_cast<int>(k)});
        const std::size_t a = position.at(e.src);
        const std::size_t b = position.at(e.dst);
        adj[a].insert(r);
        adj[r].insert(a);
        adj[b].insert(r);
        adj[r].insert(b);
    }

    out.adjacency.reserve(total);
    for (auto& s : adj) out.adjacency.emplace_back(s.begin(), s.end());
    return out;
}

// ---------------------------------------------------------------------------
// detector post-processing

std::vector<RelationEdge> select_relationships(const std::vector<PairScores>& pairs,
                                               const LabelSpace& label_space) {
    std::vector<RelationEdge> edges;
    edges.reserve(pairs.size());
    for (const PairScores& p : pairs) {
        if (p.scores.empty())
            throw DataError("relationship scores for pair " + std::to_string(p.src) + "->" +
                            std::to_string(p.dst) + " are empty");
        std::size_t best_index = 0;
        const std::string* best_label = nullptr;
        double best_score = 0.0;
        for (const auto& [predicate, score] : p.scores) {
            const std::size_t idx = label_space.require_predicate(predicate);
            if (!best_label || score > best_score ||
                (score == best_score && idx < best_index)) {
                best_label = &predicate;
                best_score = score;
                best_index = idx;
            }
        }
        edges.push_back(RelationEdge{p.src, p.dst, *best_label, best_score});
    }
    return edges;
}

SceneGraph prune_by_confidence(const SceneGraph& g, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("confidence threshold must be in [0,1], got " + std::to_string(threshold));
    SceneGraph out;
    out.image_id = g.image_id;
    std::unordered_set<int> kept;
    for (const ObjectNode& n : g.nodes)
        if (n.confidence >= threshold) {
            out.nodes.push_back(n);
            kept.insert(n.id);
        }
    for (const RelationEdge& e : g.edges)
        if (kept.count(e.src) && kept.count(e.dst)) out.edges.push_back(e);
    return out;
}

SceneGraph dedup(const SceneGraph& g) {
    SceneGraph out;
    out.image_id = g.image_id;

    // label + exact bbox identifies a duplicate; same label with a different
    // box stays distinct ("two cats").
    struct Key {
        std::string label;
        bool has_box;
        BoundingBox box;
        bool operator<(const Key& other) const {
            if (label != other.label) return label < other.label;
            if (has_box != other.has_box) return has_box < other.has_box;
            const auto tie = [](const BoundingBox& b) {
                return std::tie(b.x, b.y, b.w, b.h);
            };
            return tie(box) < tie(other.box);
        }
    };
    const auto key_of = [](const ObjectNode& n) {
        return Key{n.label, n.bbox.has_value(), n.bbox.value_or(BoundingBox{})};
    };

    // survivor of each group: highest confidence, ties keep the earlier one
    std::map<Key, std::size_t> best_of;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        auto [it, inserted] = best_of.emplace(key_of(g.nodes[i]), i);
        if (!inserted && g.nodes[i].confidence > g.nodes[it->second].confidence) it->second = i;
    }
    std::unordered_map<int, int> remap;  // original id -> surviving id
    std::unordered_set<std::size_t> survivors;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const std::size_t s = best_of.at(key_of(g.nodes[i]));
        remap.emplace(g.nodes[i].id, g.nodes[s].id);
        if (s == i) survivors.insert(i);
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (survivors.count(i)) out.nodes.push_back(g.nodes[i]);

    std::map<std::tuple<int, int, std::string>, std::size_t> edge_of;
    for (const RelationEdge& e : g.edges) {
        RelationEdge moved = e;
        moved.src = remap.at(e.src);
        moved.dst = remap.at(e.dst);
        if (moved.src == moved.dst) continue;  // edge collapsed by a node merge
        auto key = std::make_tuple(moved.src, moved.dst, moved.predicate);
        auto it = edge_of.find(key);
        if (it == edge_of.end()) {
            edge_of.emplace(std::move(key), out.edges.size());
            out.edges.push_back(moved);
        } else if (moved.confidence > out.edges[it->second].confidence) {
            out.edges[it->second].confidence = moved.confidence;
        }
    }
    return out;
}

SceneGraph cap_size(const SceneGraph& g, std::size_t max_nodes) {
    if (max_nodes < 2) throw ConfigError("cap_size: max_nodes must be >= 2");
    if (g.nodes.size() <= max_nodes) return g;

    // order of removal: lowest confidence first, then higher id first
    std::vector<std::size_t> order(g.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (g.nodes[a].confidence != g.nodes[b].confidence)
            return g.nodes[a].confidence < g.nodes[b].confidence;
        return g.nodes[a].id > g.nodes[b].id;
    });

    std::unordered_set<std::size_t> removed;
    for (std::size_t i = 0; i < g.nodes.size() - max_nodes; ++i) removed.insert(order[i]);

    SceneGraph out;
    out.image_id = g.image_id;
    std::unordered_set<int> kept;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (!removed.count(i)) {
            out.nodes.push_back(g.nodes[i]);
            kept.insert(g.nodes[i].id);
        }
    for (const RelationEdge& e : g.edges)
        if (kept.count(e.src) && kept.count(e.dst)) out.edges.push_back(e);
    return out;
}

bool validate_min_nodes(const SceneGraph& g) { return g.nodes.size() >= 2; }

std::optional<SceneGraph> postprocess_detection(const std::vector<ObjectNode>& nodes,
                                                const std::vector<PairScores>& pairs,
                                                double threshold, std::size_t max_nodes,
                                                const LabelSpace& label_space) {
    SceneGraph raw;
    raw.nodes = nodes;
    for (const ObjectNode& n : raw.nodes) label_space.require_object(n.label);

    SceneGraph g = prune_by_confidence(raw, threshold);

    std::unordered_set<int> kept;
    for (const ObjectNode& n : g.nodes) kept.insert(n.id);
    std::vector<PairScores> surviving;
    for (const PairScores& p : pairs)
        if (kept.count(p.src) && kept.count(p.dst)) surviving.push_back(p);
    g.edges = select_relationships(surviving, label_space);
    validate_graph(g);

    g = dedup(g);
    g = cap_size(g, max_nodes);
    if (!validate_min_nodes(g)) return std::nullopt;
    return g;
}

}  // namespace gcap
