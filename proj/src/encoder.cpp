#include "gcap/encoder.hpp"

namespace gcap {

std::size_t node_label_index(const ReifiedNode& node, const LabelSpace& labels) {
    if (node.kind == NodeKind::object) return labels.require_object(node.label);
    return labels.object_count() + labels.require_predicate(node.label);
}

GraphEmbedding embed_nodes(const ReifiedGraph& g, const NodeEmbeddingTable& table,
                           const LabelSpace& labels) {
    if (g.size() == 0) throw DataError("embed_nodes: empty graph");
    std::vector<std::size_t> rows;
    rows.reserve(g.size());
    for (const ReifiedNode& n : g.nodes) rows.push_back(node_label_index(n, labels));
    return GraphEmbedding{gather_rows(table.matrix, rows), &g};
}

namespace {

// Raw attention scores of node i over its neighborhood, adjacency order.
Tensor neighborhood_scores(const Tensor& transformed, const std::vector<std::size_t>& neighbors,
                           std::size_t node, const GatLayerParams& params, real leaky_slope) {
    const Tensor self = row(transformed, node);
    std::vector<Tensor> scores;
    scores.reserve(neighbors.size());
    for (std::size_t j : neighbors)
        scores.push_back(dot(params.attn_vec, concat(self, row(transformed, j))));
    return leaky_relu(concat_list(scores), leaky_slope);
}

}  // namespace

Tensor attention_coefficients(const GraphEmbedding& v, const GatLayerParams& params,
                              std::size_t node, real leaky_slope) {
    const ReifiedGraph& g = *v.graph;
    if (node >= g.size())
        throw ShapeError("attention_coefficients: node " + std::to_string(node) + " out of range");
    const Tensor transformed = matmul_nt(v.matrix, params.weight);
    return softmax_rows(
        neighborhood_scores(transformed, g.adjacency[node], node, params, leaky_slope));
}

GraphEmbedding gat_layer_forward(const GraphEmbedding& v, const GatLayerParams& params,
                                 real dropout_rate, bool training, Rng& rng, real leaky_slope) {
    const ReifiedGraph& g = *v.graph;
    const Tensor transformed = matmul_nt(v.matrix, params.weight);
    // attention sees the clean features; the weighted sum sees the dropped ones
    const Tensor aggregate_features = dropout(transformed, dropout_rate, training, rng);

    std::vector<Tensor> out_rows;
    out_rows.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& neighbors = g.adjacency[i];
        const Tensor alpha =
            softmax_rows(neighborhood_scores(transformed, neighbors, i, params, leaky_slope));
        const Tensor summed = weighted_sum_rows(gather_rows(aggregate_features, neighbors), alpha);
        out_rows.push_back(sigmoid(summed));
    }
    return GraphEmbedding{stack_rows(out_rows), v.graph};
}

GraphEmbedding encode(const GraphEmbedding& v, std::span<const GatLayerParams> layers,
                      real dropout_rate, bool training, Rng& rng, real leaky_slope) {
    GraphEmbedding current = v;
    for (const GatLayerParams& layer : layers) {
        if (layer.weight.shape()[1] != current.matrix.shape()[1])
            throw ConfigError("encode: layer input width " + std::to_string(layer.weight.shape()[1]) +
                              " does not match node width " +
                              std::to_string(current.matrix.shape()[1]));
        current = gat_layer_forward(current, layer, dropout_rate, training, rng, leaky_slope);
    }
    return current;
}

}  // namespace gcap
