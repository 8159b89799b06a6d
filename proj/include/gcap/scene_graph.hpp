#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcap/error.hpp"

namespace gcap {

struct BoundingBox {
    double x = 0, y = 0, w = 0, h = 0;  // pixels; w > 0, h > 0

    bool operator==(const BoundingBox&) const = default;
};

struct ObjectNode {
    int id = 0;  // local, unique within a graph
    std::string label;
    double confidence = 1.0;  // [0,1]
    std::optional<BoundingBox> bbox;

    bool operator==(const ObjectNode&) const = default;
};

struct RelationEdge {
    int src = 0;
    int dst = 0;  // src != dst
    std::string predicate;
    double confidence = 1.0;

    bool operator==(const RelationEdge&) const = default;
};

struct SceneGraph {
    std::vector<ObjectNode> nodes;
    std::vector<RelationEdge> edges;
    std::optional<long> image_id;

    const ObjectNode* find_node(int id) const;
    bool operator==(const SceneGraph&) const = default;
};

// Detector output for one ordered object pair: a score per predicate.
// Scores are nonnegative but not assumed normalized.
struct PairScores {
    int src = 0;
    int dst = 0;
    std::map<std::string, double> scores;

    bool operator==(const PairScores&) const = default;
};

// The fixed sets of admissible object and predicate labels. Index per label
// is stable; object and predicate labels share one joint index range
// (objects first) for the node embedding table.
class LabelSpace {
  public:
    LabelSpace() = default;
    static LabelSpace from_lists(std::vector<std::string> objects,
                                 std::vector<std::string> predicates);
    // one label per line, in index order
    static LabelSpace load(const std::string& objects_path, const std::string& predicates_path);

    std::size_t object_count() const { return objects_.size(); }
    std::size_t predicate_count() const { return predicates_.size(); }
    std::size_t joint_count() const { return objects_.size() + predicates_.size(); }

    const std::vector<std::string>& objects() const { return objects_; }
    const std::vector<std::string>& predicates() const { return predicates_; }

    std::optional<std::size_t> object_index(const std::string& label) const;
    std::optional<std::size_t> predicate_index(const std::string& label) const;
    std::size_t require_object(const std::string& label) const;
    std::size_t require_predicate(const std::string& label) const;

  private:
    std::vector<std::string> objects_;
    std::vector<std::string> predicates_;
    std::map<std::string, std::size_t> object_index_;
    std::map<std::string, std::size_t> predicate_index_;
};

enum class NodeKind { object, relation };

struct ReifiedNode {
    std::string label;
    NodeKind kind = NodeKind::object;
    int source = 0;  // provenance: object id, or edge index for relation nodes
};

// G' with every predicate promoted to its own node. Adjacency is undirected,
// symmetric, sorted, and includes the self loop for every node.
struct ReifiedGraph {
    std::vector<ReifiedNode> nodes;
    std::vector<std::vector<std::size_t>> adjacency;
    std::size_t object_count = 0;

    std::size_t size() const { return nodes.size(); }
};

// Checks ids unique, endpoints resolve, src != dst, confidences in [0,1],
// boxes positive. Throws DataError on the first violation.
void validate_graph(const SceneGraph& g);

ReifiedGraph reify(const SceneGraph& g);

// One edge per pair: the argmax-score predicate, tie broken by lowest
// label-space index. Empty score maps and unknown predicates are errors.
std::vector<RelationEdge> select_relationships(const std::vector<PairScores>& pairs,
                                               const LabelSpace& label_space);

// Keeps nodes with confidence >= threshold and drops edges touching removed
// nodes.
SceneGraph prune_by_confidence(const SceneGraph& g, double threshold);

// Node duplicates are identical (label, bbox) pairs; the highest-confidence
// instance survives and edges are re-pointed to it. Relationship duplicates
// are identical (src, dst, predicate) after re-pointing. Ties keep the
// earlier node/edge.
SceneGraph dedup(const SceneGraph& g);

// Drops lowest-confidence nodes (ties: higher id goes first) until the graph
// has at most max_nodes nodes, then drops orphaned edges.
SceneGraph cap_size(const SceneGraph& g, std::size_t max_nodes);

// The minimum-two-object-nodes rule; rejection is a value, never a throw.
bool validate_min_nodes(const SceneGraph& g);

// threshold -> relationships -> dedup -> cap -> min-node check.
// nullopt means the sample is rejected.
std::optional<SceneGraph> postprocess_detection(const std::vector<ObjectNode>& nodes,
                                                const std::vector<PairScores>& pairs,
                                                double threshold, std::size_t max_nodes,
                                                const LabelSpace& label_space);

}  // namespace gcap
