#include "gcap/evaluate.hpp"

namespace gcap {

GraphEmbedding encode_for_eval(ModelParams& params, const ReifiedGraph& graph,
                               const LabelSpace& labels) {
    GraphEmbedding embedded = embed_nodes(graph, params.node_embed, labels);
    if (params.config.encoder) {
        Rng unused(0);  // eval-mode dropout draws nothing
        embedded = encode(embedded, params.gat, params.config.gat_dropout, false, unused,
                          params.config.leaky_slope);
    }
    return embedded;
}

DecodeRun decode_records(ModelParams& params, const std::vector<DatasetRecord>& records,
                         const LabelSpace& labels, const Vocabulary& vocab,
                         const EvalOptions& options, Rng* sample_rng) {
    DecodeConfig decode_config = options.decode;
    decode_config.attention = params.config.attention;

    DecodeRun run;
    for (std::size_t index = 0; index < records.size(); ++index) {
        const DatasetRecord& record = records[index];
        SceneGraph graph;
        if (options.source == GraphSource::gold) {
            if (record.detector_form)
                throw DataError("record " + std::to_string(record.image_id) +
                                " is in detector form but the gold graph source was requested");
            graph = to_scene_graph(record);
            if (!validate_min_nodes(graph)) {
                run.rejected.push_back(
                    RejectedRecord{record.image_id, index, "fewer than two object nodes"});
                continue;
            }
        } else {
            if (!record.detector_form)
                throw DataError("record " + std::to_string(record.image_id) +
                                " carries fixed relations but the detection source was requested");
            if (options.max_nodes < 2)
                throw ConfigError("detection path needs the training max graph size (got " +
                                  std::to_string(options.max_nodes) + ")");
            auto processed = postprocess_detection(record.objects, record.relation_scores,
                                                   options.threshold, options.max_nodes, labels);
            if (!processed) {
                run.rejected.push_back(RejectedRecord{
                    record.image_id, index, "fewer than two object nodes after post-processing"});
                continue;
            }
            graph = std::move(*processed);
            graph.image_id = record.image_id;
        }

        const ReifiedGraph reified = reify(graph);
        const GraphEmbedding embedded = encode_for_eval(params, reified, labels);
        const std::vector<TokenId> ids =
            decode(embedded, params.decoder, params.bn, decode_config, sample_rng);

        DecodedRecord out;
        out.image_id = record.image_id;
        out.record_index = index;
        out.tokens.reserve(ids.size());
        for (TokenId id : ids) out.tokens.push_back(vocab.token(id));
        run.captions.push_back(std::move(out));
    }
    return run;
}

MetricReport evaluate_model(ModelParams& params, const std::vector<DatasetRecord>& records,
                            const LabelSpace& labels, const Vocabulary& vocab,
                            const EvalOptions& options) {
    if (records.empty()) throw DataError("evaluate_model: empty split");

    EvalOptions opts = options;
    opts.decode.mode = DecodeConfig::Mode::greedy;
    DecodeRun run = decode_records(params, records, labels, vocab, opts);

    if (run.captions.empty())
        throw DataError("evaluate_model: all " + std::to_string(run.rejected.size()) +
                        " samples were rejected");

    std::vector<EvalRecord> scored;
    scored.reserve(run.captions.size());
    for (const DecodedRecord& decoded : run.captions) {
        const DatasetRecord& record = records[decoded.record_index];
        if (record.captions.empty())
            throw DataError("record " + std::to_string(record.image_id) +
                            " has no captions to score against");
        EvalRecord er;
        er.image_id = decoded.image_id;
        er.hypothesis = decoded.tokens;
        for (const std::string& caption : record.captions) er.references.push_back(tokenize(caption));
        scored.push_back(std::move(er));
    }

    const std::vector<double> bleu = bleu_corpus(scored, 4);
    MetricReport report;
    for (std::size_t i = 0; i < 4; ++i) report.bleu[i] = bleu[i];
    report.meteor = meteor_corpus(scored);
    report.samples = scored.size();
    report.rejected = run.rejected.size();
    return report;
}

}  // namespace gcap
