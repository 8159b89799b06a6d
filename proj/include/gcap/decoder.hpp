#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gcap/dataset.hpp"
#include "gcap/encoder.hpp"
#include "gcap/tensor.hpp"

namespace gcap {

// affine -> tanh -> affine
struct Mlp {
    Tensor w1, b1;  // {H, in}, {H}
    Tensor w2, b2;  // {H, H}, {H}
};

Tensor mlp_forward(const Mlp& mlp, const Tensor& x);

struct AttentionParams {
    Tensor node_proj;    // {A, D}
    Tensor hidden_proj;  // {A, H}
    Tensor score_vec;    // {A}
};

// Merged gate weights, gate order i, f, g, o.
struct LstmParams {
    Tensor w_input;   // {4H, I} with I = D, or 2D when the context is fed
    Tensor w_hidden;  // {4H, H}
    Tensor bias;      // {4H}
};

struct DecoderParams {
    Tensor word_embed;   // {V_w, D}, one row per word
    LstmParams lstm;
    Mlp init_h, init_c;  // two independent D -> H transforms
    Tensor out_proj;     // {V_w, D}
    Tensor hidden_proj;  // {D, H}
    Tensor ctx_proj;     // {D, D}; attention variant only
    AttentionParams attn;  // attention variant only
};

struct DecodeConfig {
    std::size_t max_len = 20;
    enum class Mode { greedy, sample } mode = Mode::greedy;
    real temperature = real(1);
    bool attention = false;
    TokenId start = Vocabulary::kStart;
    TokenId end = Vocabulary::kEnd;
};

// Mean-pool the node vectors, batch-normalize, then run the two init MLPs.
// The batch for normalization is the set of graphs passed together; training
// statistics need at least two of them, a single graph always normalizes
// with the running estimates.
std::vector<std::pair<Tensor, Tensor>> init_states_batch(std::span<const GraphEmbedding> graphs,
                                                         const DecoderParams& params,
                                                         BatchNormState& bn, bool training);
std::pair<Tensor, Tensor> init_states(const GraphEmbedding& v, const DecoderParams& params,
                                      BatchNormState& bn, bool training);

std::pair<Tensor, Tensor> lstm_step(const LstmParams& params, const Tensor& x, const Tensor& h,
                                    const Tensor& c);

// Soft attention over graph nodes: score per node from the previous hidden
// state, softmax weights, weighted node sum as the context vector.
// attend_context precomputes the node projections once per decode.
struct AttendContext {
    Tensor projected;  // {n, A}
};

AttendContext attend_context(const GraphEmbedding& v, const AttentionParams& params);
std::pair<Tensor, Tensor> attend(const GraphEmbedding& v, const Tensor& h,
                                 const AttentionParams& params, const AttendContext& ctx);
std::pair<Tensor, Tensor> attend(const GraphEmbedding& v, const Tensor& h,
                                 const AttentionParams& params);

// softmax(out_proj . tanh(word_embed[prev] + hidden_proj . h (+ ctx_proj . z))).
// Dropout (training only) hits h before its projection.
Tensor output_distribution(TokenId prev_token, const Tensor& h, const Tensor* z,
                           const DecoderParams& params, real dropout_rate, bool training,
                           Rng& rng);

// argmax with ties broken toward the lowest index
std::size_t argmax_index(std::span<const real> values);

// Multinomial draw from probs sharpened by 1/temperature; temperature -> 0
// recovers argmax.
std::size_t sample_index(std::span<const real> probs, real temperature, Rng& rng);

// Decode one caption; start/end are stripped from the result. Greedy mode is
// deterministic; sample mode draws through `rng`.
std::vector<TokenId> decode(const GraphEmbedding& v, const DecoderParams& params,
                            BatchNormState& bn, const DecodeConfig& config, Rng* rng = nullptr);

std::vector<TokenId> greedy_decode(const GraphEmbedding& v, const DecoderParams& params,
                                   BatchNormState& bn, DecodeConfig config);
std::vector<TokenId> sample_decode(const GraphEmbedding& v, const DecoderParams& params,
                                   BatchNormState& bn, DecodeConfig config, Rng& rng);

}  // namespace gcap
