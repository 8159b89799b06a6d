#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcap/model.hpp"

namespace gcap {

struct TrainConfig {
    real lr = real(1e-4);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    real grad_clip = real(0);    // global-norm clip; 0 disables
    std::size_t max_steps = 0;   // 0 = epochs only
    real stop_loss = real(0);    // early stop below this epoch mean; 0 disables

    void validate() const;
};

struct AdamState {
    std::map<std::string, std::vector<real>> m;
    std::map<std::string, std::vector<real>> v;
    std::uint64_t step = 0;
};

// One (graph, caption) training sample; graphs are shared between the
// samples of one record.
struct TrainingSample {
    std::shared_ptr<const ReifiedGraph> graph;
    std::vector<std::size_t> node_ids;  // embedding rows, reified node order
    std::vector<TokenId> tokens;        // content tokens, specials excluded
};

TrainingSample make_training_sample(std::shared_ptr<const ReifiedGraph> graph,
                                    const std::vector<std::string>& caption_tokens,
                                    const LabelSpace& labels, const Vocabulary& vocab);

// Mean per-token NLL under teacher forcing: start prepended, end appended,
// gold history fed at every step. The batch loss is the mean of the
// per-sample losses; batch normalization runs on the pooled vectors of the
// batch (running statistics when the batch has a single sample).
Tensor batch_teacher_forced_loss(std::span<const TrainingSample> batch, ModelParams& params,
                                 bool training, Rng& rng);
Tensor teacher_forced_loss(const TrainingSample& sample, ModelParams& params, bool training,
                           Rng& rng);

using GradMap = std::map<std::string, std::vector<real>>;

GradMap collect_grads(ModelParams& params, const Tape& tape);

// Standard bias-corrected Adam update over the trainable tensors. Non-finite
// gradients abort with NumericError naming the tensor.
void adam_step(ModelParams& params, const GradMap& grads, AdamState& state,
               const TrainConfig& config);

struct TrainLogEntry {
    std::size_t epoch = 0;
    double mean_loss = 0;
    std::optional<double> val_metric;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    std::size_t steps = 0;
    double final_mean_loss = 0;
};

struct TrainHooks {
    // evaluated once per epoch when set (validation METEOR)
    std::function<double()> validation;
    // called after each epoch with the fresh log entry
    std::function<void(const TrainLogEntry&)> on_epoch;
};

// Epoch loop with seeded shuffling. Batches group samples of equal graph
// size; the optimizer is the only thing that mutates the parameters.
TrainResult train(ModelParams& params, const std::vector<TrainingSample>& samples,
                  const TrainConfig& config, AdamState& adam, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// checkpoints
//
// Binary format: magic "GCAP", format version (u32 LE), tensor count
// (u64 LE), then per tensor: name length (u32 LE), UTF-8 name, dtype tag
// (u8: 0 = float64, 1 = float32), rank (u32 LE), dims (u64 LE each), raw
// row-major little-endian payload. Optimizer state lives under "adam/",
// model hyperparameters under "meta/config".

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> entries;  // file order
    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries);
Checkpoint load_checkpoint(const std::string& path);

void save_model_checkpoint(const std::string& path, ModelParams& params,
                           const AdamState* adam = nullptr);

struct LoadedModel {
    ModelParams params;
    AdamState adam;
    bool has_adam = false;
};

LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace gcap
