#include "gcap/model.hpp"

namespace gcap {

Variant parse_variant(const std::string& flag) {
    if (flag == "base") return Variant::base;
    if (flag == "att") return Variant::att;
    if (flag == "enc") return Variant::enc;
    if (flag == "enc_att") return Variant::enc_att;
    throw ConfigError("unknown variant '" + flag + "' (expected base, att, enc or enc_att)");
}

std::string variant_flag(Variant v) {
    switch (v) {
        case Variant::base: return "base";
        case Variant::att: return "att";
        case Variant::enc: return "enc";
        case Variant::enc_att: return "enc_att";
    }
    return "base";
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::base: return "G-LSTM";
        case Variant::att: return "G-LSTM+att";
        case Variant::enc: return "G-LSTM+enc";
        case Variant::enc_att: return "G-LSTM+enc+att";
    }
    return "G-LSTM";
}

Variant ModelConfig::variant() const {
    if (encoder) return attention ? Variant::enc_att : Variant::enc;
    return attention ? Variant::att : Variant::base;
}

void ModelConfig::set_variant(Variant v) {
    attention = v == Variant::att || v == Variant::enc_att;
    encoder = v == Variant::enc || v == Variant::enc_att;
}

void ModelConfig::validate() const {
    if (embed_dim == 0 || hidden_dim == 0 || attn_dim == 0)
        throw ConfigError("model dims must be positive");
    if (vocab_size <= Vocabulary::kReservedCount)
        throw ConfigError("vocabulary has no content tokens");
    if (label_count == 0) throw ConfigError("label space is empty");
    if (encoder && gat_layers == 0)
        throw ConfigError("encoder variant needs at least one GAT layer");
    if (!(gat_dropout >= real(0) && gat_dropout < real(1)) ||
        !(decoder_dropout >= real(0) && decoder_dropout < real(1)))
        throw ConfigError("dropout rates must be in [0,1)");
}

namespace {

Tensor init_normal(Rng& rng, Shape shape, double stddev) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<real> v(n);
    for (real& x : v) x = static_cast<real>(rng.normal() * stddev);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor init_uniform(Rng& rng, Shape shape, double lo, double hi) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<real> v(n);
    for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor fan_in_normal(Rng& rng, Shape shape, std::size_t fan_in) {
    return init_normal(rng, std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Mlp init_mlp(Rng& rng, std::size_t in, std::size_t hidden) {
    Mlp m;
    m.w1 = fan_in_normal(rng, {hidden, in}, in);
    m.b1 = Tensor::zeros({hidden}, true);
    m.w2 = fan_in_normal(rng, {hidden, hidden}, hidden);
    m.b2 = Tensor::zeros({hidden}, true);
    return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t d = config.embed_dim;
    const std::size_t h = config.hidden_dim;
    const std::size_t a = config.attn_dim;

    Rng rng(seed);
    ModelParams p;
    p.config = config;

    p.node_embed.matrix = fan_in_normal(rng, {config.label_count, d}, d);

    if (config.encoder) {
        p.gat.reserve(config.gat_layers);
        for (std::size_t i = 0; i < config.gat_layers; ++i) {
            GatLayerParams layer;
            layer.weight = fan_in_normal(rng, {d, d}, d);
            layer.attn_vec = fan_in_normal(rng, {2 * d}, 2 * d);
            p.gat.push_back(std::move(layer));
        }
    }

    p.bn = BatchNormState::fresh(d);

    const std::size_t lstm_in = config.attention ? 2 * d : d;
    p.decoder.word_embed = fan_in_normal(rng, {config.vocab_size, d}, d);
    p.decoder.lstm.w_input = init_uniform(rng, {4 * h, lstm_in}, -0.08, 0.08);
    p.decoder.lstm.w_hidden = init_uniform(rng, {4 * h, h}, -0.08, 0.08);
    p.decoder.lstm.bias = Tensor::zeros({4 * h}, true);
    p.decoder.init_h = init_mlp(rng, d, h);
    p.decoder.init_c = init_mlp(rng, d, h);
    p.decoder.out_proj = fan_in_normal(rng, {config.vocab_size, d}, d);
    p.decoder.hidden_proj = fan_in_normal(rng, {d, h}, h);
    if (config.attention) {
        p.decoder.ctx_proj = fan_in_normal(rng, {d, d}, d);
        p.decoder.attn.node_proj = fan_in_normal(rng, {a, d}, d);
        p.decoder.attn.hidden_proj = fan_in_normal(rng, {a, h}, h);
        p.decoder.attn.score_vec = fan_in_normal(rng, {a}, a);
    }
    return p;
}

NamedParams ModelParams::named_tensors() {
    NamedParams out;
    out.emplace_back("embed/nodes", &node_embed.matrix);
    for (std::size_t i = 0; i < gat.size(); ++i) {
        const std::string base = "gat/" + std::to_string(i) + "/";
        out.emplace_back(base + "weight", &gat[i].weight);
        out.emplace_back(base + "attn_vec", &gat[i].attn_vec);
    }
    out.emplace_back("bn/scale", &bn.scale);
    out.emplace_back("bn/shift", &bn.shift);
    out.emplace_back("bn/running_mean", &bn.running_mean);
    out.emplace_back("bn/running_var", &bn.running_var);
    out.emplace_back("dec/word_embed", &decoder.word_embed);
    out.emplace_back("dec/lstm/w_input", &decoder.lstm.w_input);
    out.emplace_back("dec/lstm/w_hidden", &decoder.lstm.w_hidden);
    out.emplace_back("dec/lstm/bias", &decoder.lstm.bias);
    const auto add_mlp = [&out](const std::string& base, Mlp& m) {
        out.emplace_back(base + "w1", &m.w1);
        out.emplace_back(base + "b1", &m.b1);
        out.emplace_back(base + "w2", &m.w2);
        out.emplace_back(base + "b2", &m.b2);
    };
    add_mlp("dec/init_h/", decoder.init_h);
    add_mlp("dec/init_c/", decoder.init_c);
    out.emplace_back("dec/out_proj", &decoder.out_proj);
    out.emplace_back("dec/hidden_proj", &decoder.hidden_proj);
    if (config.attention) {
        out.emplace_back("dec/ctx_proj", &decoder.ctx_proj);
        out.emplace_back("dec/attn/node_proj", &decoder.attn.node_proj);
        out.emplace_back("dec/attn/hidden_proj", &decoder.attn.hidden_proj);
        out.emplace_back("dec/attn/score_vec", &decoder.attn.score_vec);
    }
    return out;
}

NamedParams ModelParams::trainable() {
    NamedParams all = named_tensors();
    NamedParams out;
    for (auto& [name, t] : all)
        if (t->requires_grad()) out.emplace_back(name, t);
    return out;
}

}  // namespace gcap
