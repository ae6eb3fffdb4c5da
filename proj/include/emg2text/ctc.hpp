#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace emg2text::ctc {

// Frame-major lattice of per-class log-probabilities: row t holds the
// log posterior over all classes (phonemes + blank) at frame t.
using Lattice = Eigen::MatrixXd;

inline double log_zero() { return -std::numeric_limits<double>::infinity(); }

inline double log_add(double a, double b) {
  if (a == log_zero()) return b;
  if (b == log_zero()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

struct LossResult {
  double loss = 0.0;   // -log p(labels | lattice)
  Lattice grad;        // d loss / d log_prob, same shape as the lattice
};

// Forward-backward over the blank-augmented label sequence, summing all
// valid alignments in the log domain. Throws DataError when the lattice
// is too short to admit any alignment of the labels.
LossResult ctc_loss(const Lattice& log_probs, const std::vector<int>& labels, int blank_id);

// Smallest frame count that admits an alignment: label count plus one
// mandatory blank between each adjacent repeated pair.
int min_frames_for(const std::vector<int>& labels);

// Per-frame argmax (ties to the lower class index), collapse adjacent
// repeats, drop blanks.
std::vector<int> greedy_decode(const Lattice& log_probs, int blank_id);

// Optional per-symbol language model hook for shallow fusion: returns
// the natural-log probability of `next` given the emitted prefix.
using SymbolLm = std::function<double(const std::vector<int>& prefix, int next)>;

struct BeamHypothesis {
  std::vector<int> ids;
  double score = log_zero();  // log of the summed path probability (+ LM terms)
};

// CTC prefix beam search: merges alignments per emitted prefix, keeping
// blank and non-blank path mass separately. Ties in ranking are broken
// toward the lexicographically smaller (thus shorter-prefix-first)
// label sequence. Returns hypotheses best-first, at most `width`.
std::vector<BeamHypothesis> beam_decode(const Lattice& log_probs, int blank_id, size_t width = 50,
                                        const SymbolLm& lm = nullptr, double lm_weight = 1.0);

}  // namespace emg2text::ctc
