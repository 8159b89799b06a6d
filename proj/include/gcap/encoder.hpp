#pragma once

#include <span>
#include <vector>

#include "gcap/scene_graph.hpp"
#include "gcap/tensor.hpp"

namespace gcap {

// One embedding row per label in the joint label space: object labels first,
// then predicate labels.
struct NodeEmbeddingTable {
    Tensor matrix;  // {object labels + predicate labels, D}
};

struct GatLayerParams {
    Tensor weight;    // {D', D}
    Tensor attn_vec;  // {2 D'}
};

// Node vectors aligned with the reified graph's node order.
struct GraphEmbedding {
    Tensor matrix;  // {n, D}
    const ReifiedGraph* graph = nullptr;
};

// Joint embedding index of a reified node; unknown labels raise VocabError.
std::size_t node_label_index(const ReifiedNode& node, const LabelSpace& labels);

GraphEmbedding embed_nodes(const ReifiedGraph& g, const NodeEmbeddingTable& table,
                           const LabelSpace& labels);

// Attention weights node i assigns its neighborhood (self included):
// softmax over LeakyReLU(a . [W v_i | W v_j]). Returned in adjacency order.
Tensor attention_coefficients(const GraphEmbedding& v, const GatLayerParams& params,
                              std::size_t node, real leaky_slope = real(0.2));

// v'_i = sigmoid(sum_j alpha_ij W v_j); dropout hits the transformed
// neighbor features right before the weighted sum, training mode only.
GraphEmbedding gat_layer_forward(const GraphEmbedding& v, const GatLayerParams& params,
                                 real dropout_rate, bool training, Rng& rng,
                                 real leaky_slope = real(0.2));

// Sequential GAT layers; no layers means the plain embeddings pass through.
GraphEmbedding encode(const GraphEmbedding& v, std::span<const GatLayerParams> layers,
                      real dropout_rate, bool training, Rng& rng,
                      real leaky_slope = real(0.2));

}  // namespace gcap
