#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gcap/error.hpp"

namespace gcap {

// Classic Porter stemming for the METEOR stem-match stage. Input must be
// lowercase; words of length <= 2 come back unchanged.
std::string porter_stem(const std::string& word);

struct EvalRecord {
    long image_id = 0;
    std::vector<std::string> hypothesis;
    std::vector<std::vector<std::string>> references;  // at least one
};

// Corpus-level multi-reference BLEU: modified n-gram precision clipped by
// the maximum reference count, reference length chosen as the closest to the
// hypothesis (ties toward the shorter), BP = min(1, exp(1 - r/c)). Returns
// B-1..B-max_n; a zero precision at order n zeroes every B-k with k >= n.
std::vector<double> bleu_corpus(std::span<const EvalRecord> records, int max_n = 4);

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};

// METEOR variant with exact + stem matching stages only (no synonym or
// paraphrase resources): greedy left-to-right unigram alignment per
// reference, harmonic F weighted by alpha, fragmentation penalty
// gamma * (chunks/matches)^beta, best reference wins.
double meteor_lite(const EvalRecord& record, const MeteorParams& params = {});

// Arithmetic mean of per-record meteor_lite.
double meteor_corpus(std::span<const EvalRecord> records, const MeteorParams& params = {});

// Scores scaled to [0,1]; CLI output multiplies by 100.
struct MetricReport {
    std::array<double, 4> bleu{0, 0, 0, 0};
    double meteor = 0;
    std::size_t samples = 0;
    std::size_t rejected = 0;
};

}  // namespace gcap
