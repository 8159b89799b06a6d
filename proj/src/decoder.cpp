#include "gcap/decoder.hpp"

#include <cmath>
#include <limits>
#include <tuple>

namespace gcap {

Tensor mlp_forward(const Mlp& mlp, const Tensor& x) {
    return add(matvec(mlp.w2, tanh(add(matvec(mlp.w1, x), mlp.b1))), mlp.b2);
}

std::vector<std::pair<Tensor, Tensor>> init_states_batch(std::span<const GraphEmbedding> graphs,
                                                         const DecoderParams& params,
                                                         BatchNormState& bn, bool training) {
    if (graphs.empty()) throw DataError("init_states: no graphs");
    std::vector<Tensor> pooled;
    pooled.reserve(graphs.size());
    for (const GraphEmbedding& g : graphs) {
        if (g.matrix.rows() == 0) throw DataError("init_states: empty graph");
        pooled.push_back(mean_rows(g.matrix));
    }
    const Tensor stacked = stack_rows(pooled);
    const bool batch_stats = training && graphs.size() >= 2;
    const Tensor normalized = batch_norm(stacked, bn, batch_stats);

    std::vector<std::pair<Tensor, Tensor>> states;
    states.reserve(graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Tensor r = row(normalized, i);
        states.emplace_back(mlp_forward(params.init_h, r), mlp_forward(params.init_c, r));
    }
    return states;
}

std::pair<Tensor, Tensor> init_states(const GraphEmbedding& v, const DecoderParams& params,
                                      BatchNormState& bn, bool training) {
    const GraphEmbedding graphs[] = {v};
    return init_states_batch(graphs, params, bn, training).front();
}

std::pair<Tensor, Tensor> lstm_step(const LstmParams& params, const Tensor& x, const Tensor& h,
                                    const Tensor& c) {
    const std::size_t hidden = h.numel();
    if (params.w_input.shape()[1] != x.numel())
        throw ShapeError("lstm_step: input width " + std::to_string(x.numel()) +
                         " does not match weights " + shape_str(params.w_input.shape()));
    const Tensor gates = add(add(matvec(params.w_input, x), matvec(params.w_hidden, h)), params.bias);
    const Tensor in_gate = sigmoid(slice(gates, 0, hidden));
    const Tensor forget_gate = sigmoid(slice(gates, hidden, hidden));
    const Tensor candidate = tanh(slice(gates, 2 * hidden, hidden));
    const Tensor out_gate = sigmoid(slice(gates, 3 * hidden, hidden));
    const Tensor c_next = add(mul(forget_gate, c), mul(in_gate, candidate));
    const Tensor h_next = mul(out_gate, tanh(c_next));
    return {h_next, c_next};
}

AttendContext attend_context(const GraphEmbedding& v, const AttentionParams& params) {
    return AttendContext{matmul_nt(v.matrix, params.node_proj)};
}

std::pair<Tensor, Tensor> attend(const GraphEmbedding& v, const Tensor& h,
                                 const AttentionParams& params, const AttendContext& ctx) {
    const Tensor hidden_part = matvec(params.hidden_proj, h);
    const Tensor scores = matmul(tanh(add_rows(ctx.projected, hidden_part)), params.score_vec);
    const Tensor alpha = softmax_rows(scores);
    return {weighted_sum_rows(v.matrix, alpha), alpha};
}

std::pair<Tensor, Tensor> attend(const GraphEmbedding& v, const Tensor& h,
                                 const AttentionParams& params) {
    return attend(v, h, params, attend_context(v, params));
}

Tensor output_distribution(TokenId prev_token, const Tensor& h, const Tensor* z,
                           const DecoderParams& params, real dropout_rate, bool training,
                           Rng& rng) {
    const Tensor prev_embed = embedding_lookup(params.word_embed, prev_token);
    const Tensor h_used = dropout(h, dropout_rate, training, rng);
    Tensor pre = add(prev_embed, matvec(params.hidden_proj, h_used));
    if (z) pre = add(pre, matvec(params.ctx_proj, *z));
    return softmax_rows(matvec(params.out_proj, tanh(pre)));
}

std::size_t argmax_index(std::span<const real> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::size_t sample_index(std::span<const real> probs, real temperature, Rng& rng) {
    if (!(temperature > real(0))) throw ConfigError("sample_index: temperature must be positive");
    // q_i proportional to probs_i^(1/T), computed in log space
    std::vector<double> logq(probs.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        logq[i] = std::log(static_cast<double>(probs[i])) / static_cast<double>(temperature);
        mx = std::max(mx, logq[i]);
    }
    double total = 0.0;
    for (double& v : logq) {
        v = std::exp(v - mx);
        total += v;
    }
    const double draw = rng.uniform() * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < logq.size(); ++i) {
        cumulative += logq[i];
        if (draw < cumulative) return i;
    }
    return logq.size() - 1;
}

std::vector<TokenId> decode(const GraphEmbedding& v, const DecoderParams& params,
                            BatchNormState& bn, const DecodeConfig& config, Rng* rng) {
    if (config.max_len < 1) throw ConfigError("decode: max_len must be >= 1");
    if (config.mode == DecodeConfig::Mode::sample && rng == nullptr)
        throw ConfigError("decode: sample mode needs a generator");
    if (config.attention && !params.ctx_proj.defined())
        throw ConfigError("decode: attention requested but the model has no attention weights");

    Rng unused(0);  // eval-mode dropout never draws
    auto [h, c] = init_states(v, params, bn, false);

    AttendContext ctx;
    if (config.attention) ctx = attend_context(v, params.attn);

    std::vector<TokenId> out;
    TokenId prev = config.start;
    for (std::size_t step = 0; step < config.max_len; ++step) {
        Tensor z;
        Tensor x = embedding_lookup(params.word_embed, prev);
        if (config.attention) {
            z = attend(v, h, params.attn, ctx).first;
            x = concat(x, z);
        }
        std::tie(h, c) = lstm_step(params.lstm, x, h, c);
        const Tensor p = output_distribution(prev, h, config.attention ? &z : nullptr, params,
                                             real(0), false, unused);
        const std::size_t token =
            config.mode == DecodeConfig::Mode::greedy
                ? argmax_index(p.data())
                : sample_index(p.data(), config.temperature, *rng);
        if (static_cast<TokenId>(token) == config.end) break;
        out.push_back(static_cast<TokenId>(token));
        prev = static_cast<TokenId>(token);
    }
    return out;
}

std::vector<TokenId> greedy_decode(const GraphEmbedding& v, const DecoderParams& params,
                                   BatchNormState& bn, DecodeConfig config) {
    config.mode = DecodeConfig::Mode::greedy;
    return decode(v, params, bn, config);
}

std::vector<TokenId> sample_decode(const GraphEmbedding& v, const DecoderParams& params,
                                   BatchNormState& bn, DecodeConfig config, Rng& rng) {
    config.mode = DecodeConfig::Mode::sample;
    return decode(v, params, bn, config, &rng);
}

}  // namespace gcap
