#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emg2text/preprocess.hpp"
#include "emg2text/signal_io.hpp"
#include "emg2text/spd_geometry.hpp"

namespace emg2text::feat {

enum class FeatureKind { kSpd, kSpectrogram };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

// Model-ready feature sequence: frames x frame_dim, row-major.
struct FeatureSequence {
  uint64_t frames = 0;
  uint64_t frame_dim = 0;
  FeatureKind kind = FeatureKind::kSpd;
  double hop_ms = 20.0;
  std::vector<double> values;

  double at(uint64_t t, uint64_t d) const { return values[t * frame_dim + d]; }
};

// Per window: edge_matrix -> regularize(eta) -> diagonalize(Q), flattened
// row-major. With diag_only, only the 31 diagonal entries are kept.
FeatureSequence spd_features(const dsp::EmgSegment& seg, const dsp::WindowSpec& spec,
                             const spd::Eigenbasis& basis, double eta, bool diag_only = false);

// Per channel log-magnitude STFT (n_fft = 256, 129 bins) average-pooled
// to 31 frequency bins: 26 groups of 4 then 5 groups of 5, the larger
// groups at the high-frequency end.
FeatureSequence spectrogram_features(const dsp::EmgSegment& seg, const dsp::WindowSpec& spec);

// In-place radix-2 FFT over 2^k points (bit-reversal + butterflies).
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

struct FeaturizeConfig {
  FeatureKind kind = FeatureKind::kSpd;
  double eta = 0.1;
  dsp::WindowSpec window;
  bool diag_only = false;
  int jobs = 1;
};

struct FeaturizeResult {
  std::optional<spd::Eigenbasis> basis;  // present for the SPD kind
  uint64_t featurized = 0;
  uint64_t skipped_too_short = 0;  // sentences shorter than one window
};

// Index entry of the on-disk feature store (index.jsonl).
struct FeatureIndexEntry {
  std::string id;
  std::string path;
  uint64_t frames = 0;
  uint64_t frame_dim = 0;
  FeatureKind kind = FeatureKind::kSpd;
};

// Computes the eigenbasis from training-split frames only, then
// featurizes every manifest sentence with it and writes the store:
// one tensor file per sentence plus index.jsonl (and the basis tensors
// for the SPD kind). `manifest_dir` anchors relative emg paths.
FeaturizeResult featurize_corpus(const std::vector<io::SentenceRecord>& manifest,
                                 const std::string& manifest_dir, const io::DatasetSplit& split,
                                 const FeaturizeConfig& config, const std::string& out_dir);

// Feature store access.
std::vector<FeatureIndexEntry> load_feature_index(const std::string& store_dir);
FeatureSequence load_features(const std::string& store_dir, const FeatureIndexEntry& entry);
std::optional<spd::Eigenbasis> load_store_basis(const std::string& store_dir);

// Loads a sentence's segment from its recording file and window [start, end).
dsp::EmgSegment load_segment(const io::SentenceRecord& record, const std::string& manifest_dir);

}  // namespace emg2text::feat
