#pragma once

#include "gcap/dataset.hpp"
#include "gcap/metrics.hpp"
#include "gcap/training.hpp"

namespace gcap {

enum class GraphSource { gold, detection };

struct EvalOptions {
    GraphSource source = GraphSource::gold;
    double threshold = 0.4;    // detection path only
    std::size_t max_nodes = 0; // detection cap from the training stats
    DecodeConfig decode;       // attention flag is taken from the model
};

struct DecodedRecord {
    long image_id = 0;
    std::size_t record_index = 0;
    std::vector<std::string> tokens;
};

struct RejectedRecord {
    long image_id = 0;
    std::size_t record_index = 0;
    std::string reason;
};

struct DecodeRun {
    std::vector<DecodedRecord> captions;
    std::vector<RejectedRecord> rejected;
};

// Reify one scene graph and run it through the (optional) encoder, eval mode.
GraphEmbedding encode_for_eval(ModelParams& params, const ReifiedGraph& graph,
                               const LabelSpace& labels);

// Build each record's graph (gold or post-processed detection), apply the
// minimum-two-nodes rule, decode the survivors. `sample_rng` is only needed
// in sample mode.
DecodeRun decode_records(ModelParams& params, const std::vector<DatasetRecord>& records,
                         const LabelSpace& labels, const Vocabulary& vocab,
                         const EvalOptions& options, Rng* sample_rng = nullptr);

// Greedy-decode every accepted record and score against all its captions.
// Rejected samples are counted, not scored; everything rejected is an error.
MetricReport evaluate_model(ModelParams& params, const std::vector<DatasetRecord>& records,
                            const LabelSpace& labels, const Vocabulary& vocab,
                            const EvalOptions& options);

}  // namespace gcap
