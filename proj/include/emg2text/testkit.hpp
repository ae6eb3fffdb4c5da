#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emg2text/ctc.hpp"
#include "emg2text/signal_io.hpp"
#include "emg2text/spd_geometry.hpp"

namespace emg2text::testkit {

// Desk-scale synthetic corpus: each phoneme class is a distinct SPD
// spatial covariance; sentences are dwell sequences of class-conditioned
// Gaussian noise. Labels are recorded without alignments.
struct SyntheticSpec {
  int n_classes = 5;
  int dim = 31;  // data channels; one reference channel is appended
  uint64_t seed = 0;
  int min_frames_per_phoneme = 3;
  int max_frames_per_phoneme = 8;
  int min_sentence_length = 3;
  int max_sentence_length = 6;
  double noise_scale = 0.05;
  double spectrum_min = 0.2;
  double spectrum_max = 5.0;
  int train_sentences = 400;
  int validation_sentences = 50;
  int test_sentences = 50;
  uint32_t sample_rate = 5000;
  double window_ms = 50.0;
  double hop_ms = 20.0;

  static SyntheticSpec load(const std::string& path);
  void save(const std::string& path) const;
};

// Class covariances built as Q diag(spectrum) Q^T with a random
// orthogonal Q and log-uniform spectra; deterministic in the spec seed.
// Throws if any pair is closer than 0.5 in log-Cholesky distance.
std::vector<spd::Matrix> class_covariances(const SyntheticSpec& spec);

struct CorpusSummary {
  uint64_t sentences = 0;
  std::string manifest_path;
  std::string split_path;
  std::string inventory_path;
  std::string lexicon_path;
};

// Writes recordings (EMG binary), manifest.jsonl, split.json,
// inventory.txt and a one-word-per-phoneme lexicon.txt under out_dir.
CorpusSummary generate_corpus(const SyntheticSpec& spec, const std::string& out_dir);

// Sum of path probabilities over every frame path whose collapse equals
// `labels`. Exponential enumeration; refuses oversized instances.
// Shares no code with ctc_loss.
double brute_force_ctc(const ctc::Lattice& log_probs, const std::vector<int>& labels, int blank_id);

// Exhaustively scores every label sequence reachable from the lattice
// (up to max_len) by summed path probability; ties break toward the
// lexicographically smaller sequence.
std::vector<int> brute_force_decode(const ctc::Lattice& log_probs, int blank_id, size_t max_len);

// All label sequences with their exact path-sum probabilities.
std::vector<std::pair<std::vector<int>, double>> brute_force_posteriors(const ctc::Lattice& log_probs,
                                                                        int blank_id);

}  // namespace emg2text::testkit
