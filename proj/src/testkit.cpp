#include "emg2text/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "emg2text/errors.hpp"
#include "emg2text/rng.hpp"

namespace emg2text::testkit {

namespace fs = std::filesystem;
using nlohmann::json;

SyntheticSpec SyntheticSpec::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open synthetic spec: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("synthetic spec " + path + " is not valid JSON: " + e.what());
  }
  SyntheticSpec spec;
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("n_classes", spec.n_classes);
  opt("dim", spec.dim);
  opt("seed", spec.seed);
  if (j.contains("frames_per_phoneme")) {
    spec.min_frames_per_phoneme = j.at("frames_per_phoneme").at(0).get<int>();
    spec.max_frames_per_phoneme = j.at("frames_per_phoneme").at(1).get<int>();
  }
  if (j.contains("sentence_length")) {
    spec.min_sentence_length = j.at("sentence_length").at(0).get<int>();
    spec.max_sentence_length = j.at("sentence_length").at(1).get<int>();
  }
  opt("noise_scale", spec.noise_scale);
  if (j.contains("spectrum_range")) {
    spec.spectrum_min = j.at("spectrum_range").at(0).get<double>();
    spec.spectrum_max = j.at("spectrum_range").at(1).get<double>();
  }
  if (j.contains("sentences")) {
    spec.train_sentences = j.at("sentences").at("train").get<int>();
    spec.validation_sentences = j.at("sentences").at("validation").get<int>();
    spec.test_sentences = j.at("sentences").at("test").get<int>();
  }
  opt("sample_rate", spec.sample_rate);
  opt("window_ms", spec.window_ms);
  opt("hop_ms", spec.hop_ms);
  return spec;
}

void SyntheticSpec::save(const std::string& path) const {
  json j;
  j["n_classes"] = n_classes;
  j["dim"] = dim;
  j["seed"] = seed;
  j["frames_per_phoneme"] = {min_frames_per_phoneme, max_frames_per_phoneme};
  j["sentence_length"] = {min_sentence_length, max_sentence_length};
  j["noise_scale"] = noise_scale;
  j["spectrum_range"] = {spectrum_min, spectrum_max};
  j["sentences"] = {{"train", train_sentences}, {"validation", validation_sentences}, {"test", test_sentences}};
  j["sample_rate"] = sample_rate;
  j["window_ms"] = window_ms;
  j["hop_ms"] = hop_ms;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write synthetic spec: " + path);
  f << j.dump(2) << "\n";
}

std::vector<spd::Matrix> class_covariances(const SyntheticSpec& spec) {
  if (spec.n_classes < 1 || spec.dim < 2) throw ParamError("synthetic spec needs n_classes >= 1, dim >= 2");
  std::vector<spd::Matrix> covs;
  for (int k = 0; k < spec.n_classes; ++k) {
    Rng rng(derive_seed(spec.seed, "class" + std::to_string(k)));
    spd::Matrix gaussian(spec.dim, spec.dim);
    for (int i = 0; i < spec.dim; ++i)
      for (int j = 0; j < spec.dim; ++j) gaussian(i, j) = rng.next_normal();
    Eigen::HouseholderQR<spd::Matrix> qr(gaussian);
    spd::Matrix q = qr.householderQ();
    const spd::Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < spec.dim; ++i)
      if (r(i, i) < 0) q.col(i) = -q.col(i);
    Eigen::VectorXd spectrum(spec.dim);
    const double log_lo = std::log(spec.spectrum_min), log_hi = std::log(spec.spectrum_max);
    for (int i = 0; i < spec.dim; ++i) spectrum(i) = std::exp(rng.next_uniform(log_lo, log_hi));
    covs.push_back(q * spectrum.asDiagonal() * q.transpose());
  }
  for (size_t a = 0; a < covs.size(); ++a)
    for (size_t b = a + 1; b < covs.size(); ++b)
      if (spd::log_cholesky_distance(covs[a], covs[b]) <= 0.5)
        throw DataError("synthetic classes " + std::to_string(a) + " and " + std::to_string(b) +
                        " are not separable (log-Cholesky distance <= 0.5)");
  return covs;
}

CorpusSummary generate_corpus(const SyntheticSpec& spec, const std::string& out_dir) {
  const auto covs = class_covariances(spec);
  std::vector<spd::Matrix> factors;
  for (const auto& c : covs) factors.push_back(spd::cholesky(c));

  fs::create_directories(fs::path(out_dir) / "recordings");

  std::vector<std::string> symbols;
  for (int k = 0; k < spec.n_classes; ++k) symbols.push_back("p" + std::to_string(k));
  io::PhonemeInventory inventory(symbols);

  const uint64_t window = static_cast<uint64_t>(std::llround(spec.window_ms * spec.sample_rate / 1000.0));
  const uint64_t hop = static_cast<uint64_t>(std::llround(spec.hop_ms * spec.sample_rate / 1000.0));

  std::vector<io::SentenceRecord> manifest;
  io::DatasetSplit split;
  const int total =
      spec.train_sentences + spec.validation_sentences + spec.test_sentences;
  for (int s = 0; s < total; ++s) {
    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "s%05d", s);
    const std::string id(id_buf);
    Rng rng(derive_seed(spec.seed, id));

    const int n_phones =
        static_cast<int>(rng.next_int(spec.min_sentence_length, spec.max_sentence_length));
    std::vector<int> classes(n_phones);
    std::vector<int> dwells(n_phones);
    uint64_t frames = 0;
    for (int i = 0; i < n_phones; ++i) {
      classes[i] = static_cast<int>(rng.next_below(spec.n_classes));
      dwells[i] = static_cast<int>(rng.next_int(spec.min_frames_per_phoneme, spec.max_frames_per_phoneme));
      frames += static_cast<uint64_t>(dwells[i]);
    }
    const uint64_t samples = frames * hop + (window - hop);

    io::EmgRecording rec;
    rec.channels = static_cast<uint32_t>(spec.dim + 1);
    rec.sample_rate = spec.sample_rate;
    rec.samples = samples;
    rec.reference_index = rec.channels - 1;
    rec.data.assign(static_cast<size_t>(rec.channels) * samples, 0.0);

    Eigen::VectorXd g(spec.dim), x(spec.dim);
    uint64_t t = 0;
    for (int i = 0; i < n_phones; ++i) {
      uint64_t span = static_cast<uint64_t>(dwells[i]) * hop;
      if (i == n_phones - 1) span += window - hop;
      const spd::Matrix& l = factors[static_cast<size_t>(classes[i])];
      for (uint64_t s_i = 0; s_i < span; ++s_i, ++t) {
        for (int d = 0; d < spec.dim; ++d) g(d) = rng.next_normal();
        x.noalias() = l * g;
        for (int d = 0; d < spec.dim; ++d)
          rec.data[static_cast<size_t>(d) * samples + t] = x(d) + spec.noise_scale * rng.next_normal();
        rec.data[static_cast<size_t>(spec.dim) * samples + t] = spec.noise_scale * rng.next_normal();
      }
    }

    const std::string rel = "recordings/" + id + ".emg";
    io::save_recording((fs::path(out_dir) / rel).string(), rec);

    io::SentenceRecord record;
    record.id = id;
    record.emg_path = rel;
    record.start_sample = 0;
    record.end_sample = samples;
    for (int c : classes) {
      record.phonemes.push_back(inventory.symbol(c));
      record.transcript.push_back(inventory.symbol(c));
    }
    manifest.push_back(std::move(record));

    if (s < spec.train_sentences)
      split.train.push_back(id);
    else if (s < spec.train_sentences + spec.validation_sentences)
      split.validation.push_back(id);
    else
      split.test.push_back(id);
  }

  CorpusSummary summary;
  summary.sentences = manifest.size();
  summary.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  summary.split_path = (fs::path(out_dir) / "split.json").string();
  summary.inventory_path = (fs::path(out_dir) / "inventory.txt").string();
  summary.lexicon_path = (fs::path(out_dir) / "lexicon.txt").string();
  io::save_manifest(summary.manifest_path, manifest);
  split.save(summary.split_path);
  inventory.save(summary.inventory_path);
  std::ofstream lex(summary.lexicon_path, std::ios::trunc);
  for (const auto& sym : symbols) lex << sym << " " << sym << "\n";
  return summary;
}

namespace {

// Guard for the exponential path enumerations.
void check_enumerable(int classes, int frames) {
  double paths = 1.0;
  for (int t = 0; t < frames; ++t) paths *= classes;
  if (paths > 2e7)
    throw ParamError("brute-force enumeration refused: " + std::to_string(classes) + "^" +
                     std::to_string(frames) + " paths");
}

std::vector<int> collapse_path(const std::vector<int>& path, int blank_id) {
  std::vector<int> out;
  int prev = blank_id;
  for (int c : path) {
    if (c != blank_id && c != prev) out.push_back(c);
    prev = c;
  }
  return out;
}

template <typename Fn>
void enumerate_paths(int classes, int frames, Fn&& fn) {
  std::vector<int> path(static_cast<size_t>(frames), 0);
  while (true) {
    fn(path);
    int pos = frames - 1;
    while (pos >= 0 && ++path[static_cast<size_t>(pos)] == classes) {
      path[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

}  // namespace

double brute_force_ctc(const ctc::Lattice& log_probs, const std::vector<int>& labels, int blank_id) {
  const int frames = static_cast<int>(log_probs.rows());
  const int classes = static_cast<int>(log_probs.cols());
  check_enumerable(classes, frames);
  double total = 0.0;
  enumerate_paths(classes, frames, [&](const std::vector<int>& path) {
    if (collapse_path(path, blank_id) != labels) return;
    double p = 1.0;
    for (int t = 0; t < frames; ++t) p *= std::exp(log_probs(t, path[static_cast<size_t>(t)]));
    total += p;
  });
  return total;
}

std::vector<std::pair<std::vector<int>, double>> brute_force_posteriors(const ctc::Lattice& log_probs,
                                                                        int blank_id) {
  const int frames = static_cast<int>(log_probs.rows());
  const int classes = static_cast<int>(log_probs.cols());
  check_enumerable(classes, frames);
  std::map<std::vector<int>, double> acc;
  enumerate_paths(classes, frames, [&](const std::vector<int>& path) {
    double p = 1.0;
    for (int t = 0; t < frames; ++t) p *= std::exp(log_probs(t, path[static_cast<size_t>(t)]));
    acc[collapse_path(path, blank_id)] += p;
  });
  return {acc.begin(), acc.end()};
}

std::vector<int> brute_force_decode(const ctc::Lattice& log_probs, int blank_id, size_t max_len) {
  const auto posteriors = brute_force_posteriors(log_probs, blank_id);
  std::vector<int> best;
  double best_p = -1.0;
  for (const auto& [seq, p] : posteriors) {
    if (seq.size() > max_len) continue;
    if (p > best_p || (p == best_p && seq < best)) {
      best = seq;
      best_p = p;
    }
  }
  return best;
}

}  // namespace emg2text::testkit
