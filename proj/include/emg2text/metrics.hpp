#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emg2text::metrics {

// Minimal-cost alignment counts. Among co-optimal alignments the one
// with the most substitutions is reported (substitution preferred over
// insert+delete), which fixes S/I/D deterministically.
struct ErrorReport {
  uint64_t substitutions = 0;
  uint64_t insertions = 0;
  uint64_t deletions = 0;
  uint64_t reference_length = 0;
  bool empty_reference = false;  // rate denominator floored at 1

  uint64_t distance() const { return substitutions + insertions + deletions; }
  double rate() const {
    const uint64_t denom = reference_length ? reference_length : 1;
    return static_cast<double>(distance()) / static_cast<double>(denom);
  }
};

ErrorReport levenshtein(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);
ErrorReport levenshtein_ids(const std::vector<int>& reference, const std::vector<int>& hypothesis);

struct CorpusRates {
  double pooled = 0.0;            // sum(S+I+D) / sum(ref length)
  double per_sentence_mean = 0.0; // mean of per-sentence rates
  uint64_t sentences = 0;
  uint64_t total_errors = 0;
  uint64_t total_reference = 0;
};

CorpusRates corpus_rates(const std::vector<std::vector<std::string>>& references,
                         const std::vector<std::vector<std::string>>& hypotheses);

// Monte-Carlo estimate of the corpus error rate when both references
// and hypotheses are uniform random sequences of the given lengths.
double chance_rate(int inventory_size, const std::vector<size_t>& reference_lengths, int trials,
                   uint64_t seed);

struct ScalingFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (N, E)
};

// Least squares on (ln N, ln E): E = alpha / N^beta.
ScalingFit fit_scaling(const std::vector<std::pair<double, double>>& points);

// Paired two-sided permutation test on per-sentence error counts of two
// systems (random sign flips of the paired differences).
double paired_permutation_test(const std::vector<double>& a, const std::vector<double>& b, int permutations,
                               uint64_t seed);

}  // namespace emg2text::metrics
