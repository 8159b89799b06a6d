#include "gcap/reference_loss.hpp"

#include <cmath>

namespace gcap {

namespace {

using ld = long double;
using Vec = std::vector<ld>;
using Mat = std::vector<Vec>;

Vec to_vec(const Tensor& t) {
    Vec v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<ld>(t.at(i));
    return v;
}

Mat to_mat(const Tensor& t) {
    const std::size_t rows = t.shape()[0];
    const std::size_t cols = t.shape()[1];
    Mat m(rows, Vec(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m[i][j] = static_cast<ld>(t.at(i, j));
    return m;
}

// w {out,in} . x {in}
Vec mat_apply(const Mat& w, const Vec& x) {
    Vec y(w.size(), 0.0L);
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
    return y;
}

Vec add_v(Vec a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Vec tanh_v(Vec a) {
    for (ld& x : a) x = std::tanh(x);
    return a;
}

ld sigmoid1(ld x) { return 1.0L / (1.0L + std::exp(-x)); }

Vec softmax_v(Vec a) {
    ld mx = a[0];
    for (ld x : a) mx = std::max(mx, x);
    ld z = 0.0L;
    for (ld& x : a) {
        x = std::exp(x - mx);
        z += x;
    }
    for (ld& x : a) x /= z;
    return a;
}

Vec mlp_ref(const Mlp& mlp, const Vec& x) {
    return add_v(mat_apply(to_mat(mlp.w2), tanh_v(add_v(mat_apply(to_mat(mlp.w1), x), to_vec(mlp.b1)))),
                 to_vec(mlp.b2));
}

// Same decision stream as the engine's dropout (identical uniforms, same
// comparison), reproduced here so frozen masks line up.
Vec dropout_mask(std::size_t n, ld rate, bool training, Rng& rng) {
    Vec mask(n, 1.0L);
    if (!training || rate == 0.0L) return mask;
    const ld keep = 1.0L / (1.0L - rate);
    for (std::size_t i = 0; i < n; ++i)
        mask[i] = rng.uniform() < static_cast<double>(rate) ? 0.0L : keep;
    return mask;
}

}  // namespace

long double reference_teacher_forced_loss(const ModelParams& params,
                                          const TrainingSample& sample, bool training,
                                          std::uint64_t mask_seed) {
    const ModelConfig& cfg = params.config;
    Rng rng(mask_seed);

    // node embeddings
    const std::size_t n = sample.node_ids.size();
    Mat v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i].resize(cfg.embed_dim);
        for (std::size_t j = 0; j < cfg.embed_dim; ++j)
            v[i][j] = static_cast<ld>(params.node_embed.matrix.at(sample.node_ids[i], j));
    }

    if (cfg.encoder) {
        const ReifiedGraph& g = *sample.graph;
        for (const GatLayerParams& layer : params.gat) {
            const Mat w = to_mat(layer.weight);
            const Vec a = to_vec(layer.attn_vec);
            Mat transformed(n);
            for (std::size_t i = 0; i < n; ++i) transformed[i] = mat_apply(w, v[i]);
            // one mask element per entry, row-major, exactly like the engine
            const Vec mask =
                dropout_mask(n * w.size(), static_cast<ld>(cfg.gat_dropout), training, rng);
            Mat dropped(n);
            for (std::size_t i = 0; i < n; ++i) {
                dropped[i].resize(w.size());
                for (std::size_t j = 0; j < w.size(); ++j)
                    dropped[i][j] = transformed[i][j] * mask[i * w.size() + j];
            }
            Mat next(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& neighbors = g.adjacency[i];
                Vec scores(neighbors.size());
                for (std::size_t k = 0; k < neighbors.size(); ++k) {
                    ld s = 0.0L;
                    for (std::size_t j = 0; j < w.size(); ++j)
                        s += a[j] * transformed[i][j] + a[w.size() + j] * transformed[neighbors[k]][j];
                    scores[k] = s >= 0.0L ? s : static_cast<ld>(cfg.leaky_slope) * s;
                }
                const Vec alpha = softmax_v(scores);
                next[i].assign(w.size(), 0.0L);
                for (std::size_t k = 0; k < neighbors.size(); ++k)
                    for (std::size_t j = 0; j < w.size(); ++j)
                        next[i][j] += alpha[k] * dropped[neighbors[k]][j];
                for (ld& x : next[i]) x = sigmoid1(x);
            }
            v = std::move(next);
        }
    }

    // pooled mean, then batch norm; a single sample always normalizes with
    // the running estimates
    Vec pooled(cfg.embed_dim, 0.0L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) pooled[j] += v[i][j];
    for (ld& x : pooled) x /= static_cast<ld>(n);

    const Vec bn_mean = to_vec(params.bn.running_mean);
    const Vec bn_var = to_vec(params.bn.running_var);
    const Vec bn_scale = to_vec(params.bn.scale);
    const Vec bn_shift = to_vec(params.bn.shift);
    Vec normalized(cfg.embed_dim);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j)
        normalized[j] = (pooled[j] - bn_mean[j]) /
                            std::sqrt(bn_var[j] + static_cast<ld>(params.bn.eps)) * bn_scale[j] +
                        bn_shift[j];

    Vec h = mlp_ref(params.decoder.init_h, normalized);
    Vec c = mlp_ref(params.decoder.init_c, normalized);

    const Mat word_embed = to_mat(params.decoder.word_embed);
    const Mat w_input = to_mat(params.decoder.lstm.w_input);
    const Mat w_hidden = to_mat(params.decoder.lstm.w_hidden);
    const Vec lstm_bias = to_vec(params.decoder.lstm.bias);
    const Mat out_proj = to_mat(params.decoder.out_proj);
    const Mat hidden_proj = to_mat(params.decoder.hidden_proj);

    Mat attn_projected;
    Mat ctx_proj;
    Mat attn_hidden;
    Vec score_vec;
    if (cfg.attention) {
        const Mat node_proj = to_mat(params.decoder.attn.node_proj);
        attn_projected.resize(n);
        for (std::size_t i = 0; i < n; ++i) attn_projected[i] = mat_apply(node_proj, v[i]);
        ctx_proj = to_mat(params.decoder.ctx_proj);
        attn_hidden = to_mat(params.decoder.attn.hidden_proj);
        score_vec = to_vec(params.decoder.attn.score_vec);
    }

    std::vector<TokenId> sequence;
    sequence.push_back(Vocabulary::kStart);
    sequence.insert(sequence.end(), sample.tokens.begin(), sample.tokens.end());
    sequence.push_back(Vocabulary::kEnd);

    const std::size_t hidden = cfg.hidden_dim;
    ld total = 0.0L;
    for (std::size_t t = 1; t < sequence.size(); ++t) {
        const TokenId prev = sequence[t - 1];
        const TokenId target = sequence[t];

        Vec x = word_embed[prev];
        Vec z;
        if (cfg.attention) {
            const Vec hidden_part = mat_apply(attn_hidden, h);
            Vec scores(n);
            for (std::size_t i = 0; i < n; ++i) {
                ld s = 0.0L;
                for (std::size_t j = 0; j < score_vec.size(); ++j)
                    s += score_vec[j] * std::tanh(attn_projected[i][j] + hidden_part[j]);
                scores[i] = s;
            }
            const Vec alpha = softmax_v(scores);
            z.assign(cfg.embed_dim, 0.0L);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < cfg.embed_dim; ++j) z[j] += alpha[i] * v[i][j];
            x.insert(x.end(), z.begin(), z.end());
        }

        Vec gates = add_v(add_v(mat_apply(w_input, x), mat_apply(w_hidden, h)), lstm_bias);
        for (std::size_t j = 0; j < hidden; ++j) {
            const ld in_gate = sigmoid1(gates[j]);
            const ld forget_gate = sigmoid1(gates[hidden + j]);
            const ld candidate = std::tanh(gates[2 * hidden + j]);
            const ld out_gate = sigmoid1(gates[3 * hidden + j]);
            c[j] = forget_gate * c[j] + in_gate * candidate;
            h[j] = out_gate * std::tanh(c[j]);
        }

        const Vec mask =
            dropout_mask(hidden, static_cast<ld>(cfg.decoder_dropout), training, rng);
        Vec h_used(hidden);
        for (std::size_t j = 0; j < hidden; ++j) h_used[j] = h[j] * mask[j];

        Vec pre = add_v(word_embed[prev], mat_apply(hidden_proj, h_used));
        if (cfg.attention) pre = add_v(pre, mat_apply(ctx_proj, z));
        const Vec logits = mat_apply(out_proj, tanh_v(std::move(pre)));

        ld mx = logits[0];
        for (ld l : logits) mx = std::max(mx, l);
        ld z_sum = 0.0L;
        for (ld l : logits) z_sum += std::exp(l - mx);
        total += -(logits[target] - mx - std::log(z_sum));
    }
    return total / static_cast<ld>(sequence.size() - 1);
}

}  // namespace gcap
