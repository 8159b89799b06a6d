#pragma once

#include <string>

#include "gcap/decoder.hpp"
#include "gcap/encoder.hpp"
#include "gcap/gradcheck.hpp"

namespace gcap {

// The four model variants: plain decoder, +att soft attention, +enc GAT
// encoder, +enc+att both.
enum class Variant { base, att, enc, enc_att };

Variant parse_variant(const std::string& flag);   // base | att | enc | enc_att
std::string variant_flag(Variant v);
std::string variant_name(Variant v);              // G-LSTM, G-LSTM+att, ...

struct ModelConfig {
    std::size_t embed_dim = 512;   // D: node and word embeddings
    std::size_t hidden_dim = 1024; // H: LSTM state
    std::size_t attn_dim = 512;    // A: attention MLP
    std::size_t gat_layers = 2;
    bool attention = false;
    bool encoder = false;
    real gat_dropout = real(0.25);
    real decoder_dropout = real(0.5);
    real leaky_slope = real(0.2);
    std::size_t vocab_size = 0;
    std::size_t label_count = 0;   // object + predicate labels

    Variant variant() const;
    void set_variant(Variant v);
    void validate() const;
};

struct ModelParams {
    ModelConfig config;
    NodeEmbeddingTable node_embed;
    std::vector<GatLayerParams> gat;  // empty unless the encoder is enabled
    BatchNormState bn;
    DecoderParams decoder;

    // Stable name -> tensor registry, fixed order; includes the batch-norm
    // running estimates (not trainable).
    NamedParams named_tensors();
    NamedParams trainable();
};

// Seeded deterministic initialization: uniform(-0.08, 0.08) for the LSTM
// weights, zero biases, 1/sqrt(fan_in)-scaled normals elsewhere.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

}  // namespace gcap
