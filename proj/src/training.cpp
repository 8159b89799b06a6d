#include "gcap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gcap {

void TrainConfig::validate() const {
    if (!(lr >= real(0))) throw ConfigError("learning rate must be >= 0");
    if (!(beta1 >= real(0) && beta1 < real(1)) || !(beta2 >= real(0) && beta2 < real(1)))
        throw ConfigError("Adam betas must be in [0,1)");
    if (!(eps > real(0))) throw ConfigError("Adam eps must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

TrainingSample make_training_sample(std::shared_ptr<const ReifiedGraph> graph,
                                    const std::vector<std::string>& caption_tokens,
                                    const LabelSpace& labels, const Vocabulary& vocab) {
    if (!graph || graph->size() == 0) throw DataError("training sample needs a non-empty graph");
    if (caption_tokens.empty()) throw DataError("training sample needs a non-empty caption");
    TrainingSample s;
    s.node_ids.reserve(graph->size());
    for (const ReifiedNode& n : graph->nodes) s.node_ids.push_back(node_label_index(n, labels));
    s.graph = std::move(graph);
    s.tokens = vocab.encode_all(caption_tokens);
    return s;
}

namespace {

Tensor sample_sequence_loss(const TrainingSample& sample, const GraphEmbedding& v,
                            Tensor h, Tensor c, ModelParams& params, bool training, Rng& rng) {
    const ModelConfig& cfg = params.config;
    for (TokenId t : sample.tokens)
        if (t >= cfg.vocab_size)
            throw VocabError("token id " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(cfg.vocab_size));

    std::vector<TokenId> sequence;
    sequence.reserve(sample.tokens.size() + 2);
    sequence.push_back(Vocabulary::kStart);
    sequence.insert(sequence.end(), sample.tokens.begin(), sample.tokens.end());
    sequence.push_back(Vocabulary::kEnd);

    AttendContext ctx;
    if (cfg.attention) ctx = attend_context(v, params.decoder.attn);

    Tensor total;
    for (std::size_t t = 1; t < sequence.size(); ++t) {
        const TokenId prev = sequence[t - 1];
        const TokenId target = sequence[t];
        Tensor z;
        Tensor x = embedding_lookup(params.decoder.word_embed, prev);
        if (cfg.attention) {
            z = attend(v, h, params.decoder.attn, ctx).first;
            x = concat(x, z);
        }
        std::tie(h, c) = lstm_step(params.decoder.lstm, x, h, c);
        const Tensor p = output_distribution(prev, h, cfg.attention ? &z : nullptr, params.decoder,
                                             cfg.decoder_dropout, training, rng);
        const Tensor step_loss = neg(log(at_index(p, target)));
        total = total.defined() ? add(total, step_loss) : step_loss;
    }
    return cmul(total, real(1) / static_cast<real>(sequence.size() - 1));
}

}  // namespace

Tensor batch_teacher_forced_loss(std::span<const TrainingSample> batch, ModelParams& params,
                                 bool training, Rng& rng) {
    if (batch.empty()) throw DataError("batch loss: empty batch");
    const ModelConfig& cfg = params.config;

    std::vector<GraphEmbedding> encoded;
    encoded.reserve(batch.size());
    for (const TrainingSample& s : batch) {
        GraphEmbedding embedded{gather_rows(params.node_embed.matrix, s.node_ids), s.graph.get()};
        if (cfg.encoder)
            embedded = encode(embedded, params.gat, cfg.gat_dropout, training, rng, cfg.leaky_slope);
        encoded.push_back(std::move(embedded));
    }

    auto states = init_states_batch(encoded, params.decoder, params.bn, training);

    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor loss = sample_sequence_loss(batch[i], encoded[i], states[i].first,
                                           states[i].second, params, training, rng);
        total = total.defined() ? add(total, loss) : std::move(loss);
    }
    return cmul(total, real(1) / static_cast<real>(batch.size()));
}

Tensor teacher_forced_loss(const TrainingSample& sample, ModelParams& params, bool training,
                           Rng& rng) {
    return batch_teacher_forced_loss({&sample, 1}, params, training, rng);
}

GradMap collect_grads(ModelParams& params, const Tape& tape) {
    GradMap grads;
    for (auto& [name, tensor] : params.trainable()) grads.emplace(name, tape.grad(*tensor));
    return grads;
}

void adam_step(ModelParams& params, const GradMap& grads, AdamState& state,
               const TrainConfig& config) {
    config.validate();
    NamedParams trainable = params.trainable();
    for (auto& [name, tensor] : trainable)
        if (!grads.count(name)) throw DataError("adam_step: missing gradient for " + name);

    double clip_scale = 1.0;
    if (config.grad_clip > real(0)) {
        double sq = 0.0;
        for (auto& [name, g] : grads)
            for (real x : g) sq += static_cast<double>(x) * static_cast<double>(x);
        const double norm = std::sqrt(sq);
        if (norm > static_cast<double>(config.grad_clip))
            clip_scale = static_cast<double>(config.grad_clip) / norm;
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(static_cast<double>(config.beta1), t);
    const double bc2 = 1.0 - std::pow(static_cast<double>(config.beta2), t);

    for (auto& [name, tensor] : trainable) {
        const std::vector<real>& g = grads.at(name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(g.size(), real(0));
        if (v.empty()) v.assign(g.size(), real(0));
        if (m.size() != g.size())
            throw ShapeError("adam_step: moment size mismatch for " + name);

        auto data = tensor->mutable_data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const real gi = static_cast<real>(static_cast<double>(g[i]) * clip_scale);
            if (!std::isfinite(static_cast<double>(gi)))
                throw NumericError("adam_step: non-finite gradient in " + name);
            m[i] = config.beta1 * m[i] + (real(1) - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (real(1) - config.beta2) * gi * gi;
            const real m_hat = static_cast<real>(static_cast<double>(m[i]) / bc1);
            const real v_hat = static_cast<real>(static_cast<double>(v[i]) / bc2);
            data[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

TrainResult train(ModelParams& params, const std::vector<TrainingSample>& samples,
                  const TrainConfig& config, AdamState& adam, const TrainHooks& hooks) {
    config.validate();
    if (samples.empty()) throw DataError("train: empty training set");

    Rng rng(config.seed);
    TrainResult result;
    bool stop = false;

    for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
        // seeded shuffle, then stable grouping by graph size
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);

        std::map<std::size_t, std::vector<std::size_t>> by_size;
        for (std::size_t idx : order) by_size[samples[idx].graph->size()].push_back(idx);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (auto& [size, bucket] : by_size) {
            for (std::size_t begin = 0; begin < bucket.size() && !stop;
                 begin += config.batch_size) {
                const std::size_t count = std::min(config.batch_size, bucket.size() - begin);
                std::vector<TrainingSample> batch;
                batch.reserve(count);
                for (std::size_t k = 0; k < count; ++k)
                    batch.push_back(samples[bucket[begin + k]]);

                Tape tape;
                GradMap grads;
                double loss_value = 0.0;
                {
                    Tape::Scope scope(tape);
                    Tensor loss = batch_teacher_forced_loss(batch, params, true, rng);
                    loss_value = static_cast<double>(loss.value());
                    if (!std::isfinite(loss_value))
                        throw NumericError("train: non-finite loss at step " +
                                           std::to_string(result.steps + 1));
                    tape.backward(loss);
                    grads = collect_grads(params, tape);
                }
                adam_step(params, grads, adam, config);
                epoch_loss += loss_value * static_cast<double>(count);
                seen += count;
                result.steps += 1;
                if (config.max_steps > 0 && result.steps >= config.max_steps) stop = true;
            }
        }

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.mean_loss = epoch_loss / static_cast<double>(seen);
        if (hooks.validation) entry.val_metric = hooks.validation();
        result.final_mean_loss = entry.mean_loss;
        if (config.stop_loss > real(0) && entry.mean_loss < static_cast<double>(config.stop_loss))
            stop = true;
        result.log.push_back(entry);
        if (hooks.on_epoch) hooks.on_epoch(result.log.back());
    }
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

class Reader {
  public:
    Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::string_view take(std::size_t n) {
        if (pos_ + n > bytes_.size())
            throw FormatError("checkpoint " + path_ + " is truncated");
        std::string_view v(bytes_.data() + pos_, n);
        pos_ += n;
        return v;
    }

    std::uint32_t u32() {
        auto v = take(4);
        std::uint32_t r = 0;
        for (int i = 3; i >= 0; --i) r = (r << 8) | static_cast<unsigned char>(v[static_cast<std::size_t>(i)]);
        return r;
    }

    std::uint64_t u64() {
        auto v = take(8);
        std::uint64_t r = 0;
        for (int i = 7; i >= 0; --i) r = (r << 8) | static_cast<unsigned char>(v[static_cast<std::size_t>(i)]);
        return r;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    const std::string& path() const { return path_; }

  private:
    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'G', 'C', 'A', 'P'};
constexpr std::uint8_t kTagF64 = 0;
constexpr std::uint8_t kTagF32 = 1;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, entries.size());
    for (const auto& [name, tensor] : entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        out.push_back(static_cast<char>(sizeof(real) == 8 ? kTagF64 : kTagF32));
        put_u32(out, static_cast<std::uint32_t>(tensor->rank()));
        for (std::size_t dim : tensor->shape()) put_u64(out, dim);
        for (real v : tensor->data()) {
            if (sizeof(real) == 8)
                put_f64(out, static_cast<double>(v));
            else
                put_f32(out, static_cast<float>(v));
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write checkpoint: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader in(std::move(bytes), path);

    if (in.take(4) != std::string_view(kMagic, 4))
        throw FormatError("checkpoint " + path + " has the wrong magic bytes");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint " + path + " has unsupported format version " +
                          std::to_string(version));

    Checkpoint cp;
    const std::uint64_t count = in.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = in.u32();
        std::string name(in.take(name_len));
        const auto tag = static_cast<std::uint8_t>(in.take(1)[0]);
        if (tag != kTagF64 && tag != kTagF32)
            throw FormatError("checkpoint " + path + ": unknown dtype tag for " + name);
        const std::uint32_t rank = in.u32();
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = in.u64();
            numel *= shape[d];
        }
        std::vector<real> values(numel);
        for (std::size_t k = 0; k < numel; ++k)
            values[k] = tag == kTagF64 ? static_cast<real>(in.f64()) : static_cast<real>(in.f32());
        cp.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!in.at_end()) throw FormatError("checkpoint " + path + " has trailing bytes");
    return cp;
}

namespace {

constexpr std::size_t kMetaLength = 11;

Tensor config_to_meta(const ModelConfig& c) {
    return Tensor::vector({static_cast<real>(c.embed_dim), static_cast<real>(c.hidden_dim),
                           static_cast<real>(c.attn_dim), static_cast<real>(c.gat_layers),
                           c.attention ? real(1) : real(0), c.encoder ? real(1) : real(0),
                           c.gat_dropout, c.decoder_dropout, c.leaky_slope,
                           static_cast<real>(c.vocab_size), static_cast<real>(c.label_count)});
}

ModelConfig meta_to_config(const Tensor& meta, const std::string& path) {
    if (meta.numel() != kMetaLength)
        throw FormatError("checkpoint " + path + ": malformed meta/config entry");
    ModelConfig c;
    c.embed_dim = static_cast<std::size_t>(meta.at(0));
    c.hidden_dim = static_cast<std::size_t>(meta.at(1));
    c.attn_dim = static_cast<std::size_t>(meta.at(2));
    c.gat_layers = static_cast<std::size_t>(meta.at(3));
    c.attention = meta.at(4) != real(0);
    c.encoder = meta.at(5) != real(0);
    c.gat_dropout = meta.at(6);
    c.decoder_dropout = meta.at(7);
    c.leaky_slope = meta.at(8);
    c.vocab_size = static_cast<std::size_t>(meta.at(9));
    c.label_count = static_cast<std::size_t>(meta.at(10));
    return c;
}

}  // namespace

void save_model_checkpoint(const std::string& path, ModelParams& params, const AdamState* adam) {
    const Tensor meta = config_to_meta(params.config);
    std::vector<std::pair<std::string, const Tensor*>> entries;
    entries.emplace_back("meta/config", &meta);
    NamedParams named = params.named_tensors();
    for (auto& [name, tensor] : named) entries.emplace_back(name, tensor);

    Tensor adam_step_tensor;
    std::vector<std::pair<std::string, Tensor>> adam_tensors;
    if (adam) {
        adam_step_tensor = Tensor::scalar(static_cast<real>(adam->step));
        entries.emplace_back("adam/step", &adam_step_tensor);
        for (auto& [name, tensor] : named) {
            auto mi = adam->m.find(name);
            auto vi = adam->v.find(name);
            if (mi == adam->m.end() || vi == adam->v.end()) continue;
            adam_tensors.emplace_back("adam/m/" + name, Tensor(tensor->shape(), mi->second));
            adam_tensors.emplace_back("adam/v/" + name, Tensor(tensor->shape(), vi->second));
        }
        for (auto& [name, tensor] : adam_tensors) entries.emplace_back(name, &tensor);
    }
    save_checkpoint(path, entries);
}

LoadedModel load_model_checkpoint(const std::string& path) {
    Checkpoint cp = load_checkpoint(path);
    const Tensor* meta = cp.find("meta/config");
    if (!meta) throw FormatError("checkpoint " + path + " is missing meta/config");

    LoadedModel loaded;
    loaded.params = init_params(meta_to_config(*meta, path), 0);
    for (auto& [name, tensor] : loaded.params.named_tensors()) {
        const Tensor* stored = cp.find(name);
        if (!stored) throw FormatError("checkpoint " + path + " is missing tensor " + name);
        if (stored->shape() != tensor->shape())
            throw FormatError("checkpoint " + path + ": tensor " + name + " has shape " +
                              shape_str(stored->shape()) + ", expected " +
                              shape_str(tensor->shape()));
        std::copy(stored->data().begin(), stored->data().end(), tensor->mutable_data().begin());
    }
    if (const Tensor* step = cp.find("adam/step")) {
        loaded.has_adam = true;
        loaded.adam.step = static_cast<std::uint64_t>(step->value());
        for (const auto& [name, tensor] : cp.entries) {
            if (name.rfind("adam/m/", 0) == 0)
                loaded.adam.m[name.substr(7)] =
                    std::vector<real>(tensor.data().begin(), tensor.data().end());
            else if (name.rfind("adam/v/", 0) == 0)
                loaded.adam.v[name.substr(7)] =
                    std::vector<real>(tensor.data().begin(), tensor.data().end());
        }
    }
    return loaded;
}

}  // namespace gcap
