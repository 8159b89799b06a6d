#include "gcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

namespace gcap {

namespace {

// n-gram keyed by its tokens joined with an unprintable separator
std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            key.push_back('\x1f');
            key.append(tokens[i + j]);
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

std::vector<double> bleu_corpus(std::span<const EvalRecord> records, int max_n) {
    if (records.empty()) throw DataError("bleu_corpus: no records to score");
    if (max_n < 1 || max_n > 4) throw ConfigError("bleu_corpus: max_n must be in 1..4");

    const auto n_orders = static_cast<std::size_t>(max_n);
    std::vector<std::size_t> clipped(n_orders, 0);
    std::vector<std::size_t> total(n_orders, 0);
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;

    for (const EvalRecord& rec : records) {
        if (rec.references.empty())
            throw DataError("bleu_corpus: record " + std::to_string(rec.image_id) +
                            " has no references");
        const std::size_t c = rec.hypothesis.size();
        hyp_length += c;

        // closest reference length, ties toward the shorter
        std::size_t best = rec.references.front().size();
        for (const auto& ref : rec.references) {
            const std::size_t len = ref.size();
            const auto diff = [c](std::size_t l) {
                return l > c ? l - c : c - l;
            };
            if (diff(len) < diff(best) || (diff(len) == diff(best) && len < best)) best = len;
        }
        ref_length += best;

        for (std::size_t n = 1; n <= n_orders; ++n) {
            const auto hyp_counts = ngram_counts(rec.hypothesis, n);
            std::map<std::string, std::size_t> max_ref;
            for (const auto& ref : rec.references)
                for (const auto& [gram, count] : ngram_counts(ref, n))
                    max_ref[gram] = std::max(max_ref[gram], count);
            for (const auto& [gram, count] : hyp_counts) {
                total[n - 1] += count;
                auto it = max_ref.find(gram);
                if (it != max_ref.end()) clipped[n - 1] += std::min(count, it->second);
            }
        }
    }

    const double bp =
        hyp_length == 0
            ? 0.0
            : std::min(1.0, std::exp(1.0 - static_cast<double>(ref_length) /
                                               static_cast<double>(hyp_length)));

    std::vector<double> scores(n_orders, 0.0);
    double log_sum = 0.0;
    bool zeroed = false;
    for (std::size_t n = 1; n <= n_orders; ++n) {
        if (clipped[n - 1] == 0 || total[n - 1] == 0) zeroed = true;
        if (!zeroed)
            log_sum += std::log(static_cast<double>(clipped[n - 1]) /
                                static_cast<double>(total[n - 1]));
        scores[n - 1] =
            zeroed ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
    }
    return scores;
}

namespace {

struct Alignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

// Greedy left-to-right unigram alignment, exact stage first, then stems.
Alignment align(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    std::vector<int> hyp_to_ref(hyp.size(), -1);
    std::vector<bool> ref_used(ref.size(), false);

    for (std::size_t i = 0; i < hyp.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!ref_used[j] && ref[j] == hyp[i]) {
                hyp_to_ref[i] = static_cast<int>(j);
                ref_used[j] = true;
                break;
            }

    std::vector<std::string> hyp_stems(hyp.size());
    for (std::size_t i = 0; i < hyp.size(); ++i) hyp_stems[i] = porter_stem(hyp[i]);
    std::vector<std::string> ref_stems(ref.size());
    for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = porter_stem(ref[j]);

    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (hyp_to_ref[i] != -1) continue;
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!ref_used[j] && ref_stems[j] == hyp_stems[i]) {
                hyp_to_ref[i] = static_cast<int>(j);
                ref_used[j] = true;
                break;
            }
    }

    Alignment a;
    int prev_hyp = -2, prev_ref = -2;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (hyp_to_ref[i] == -1) continue;
        ++a.matches;
        const bool contiguous =
            static_cast<int>(i) == prev_hyp + 1 && hyp_to_ref[i] == prev_ref + 1;
        if (!contiguous) ++a.chunks;
        prev_hyp = static_cast<int>(i);
        prev_ref = hyp_to_ref[i];
    }
    return a;
}

}  // namespace

double meteor_lite(const EvalRecord& record, const MeteorParams& params) {
    if (record.references.empty())
        throw DataError("meteor_lite: record " + std::to_string(record.image_id) +
                        " has no references");
    double best = 0.0;
    for (const auto& ref : record.references) {
        const Alignment a = align(record.hypothesis, ref);
        if (a.matches == 0) continue;
        const double m = static_cast<double>(a.matches);
        const double precision = m / static_cast<double>(record.hypothesis.size());
        const double recall = m / static_cast<double>(ref.size());
        const double f_mean =
            precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
        const double penalty =
            params.gamma * std::pow(static_cast<double>(a.chunks) / m, params.beta);
        best = std::max(best, f_mean * (1.0 - penalty));
    }
    return best;
}

double meteor_corpus(std::span<const EvalRecord> records, const MeteorParams& params) {
    if (records.empty()) throw DataError("meteor_corpus: no records to score");
    double total = 0.0;
    for (const EvalRecord& rec : records) total += meteor_lite(rec, params);
    return total / static_cast<double>(records.size());
}

}  // namespace gcap
