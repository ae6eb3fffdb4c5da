#include "emg2text/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>

#include <json.hpp>

#include "emg2text/errors.hpp"

namespace emg2text::feat {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(FeatureKind kind) { return kind == FeatureKind::kSpd ? "spd" : "spectrogram"; }

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "spd") return FeatureKind::kSpd;
  if (s == "spectrogram") return FeatureKind::kSpectrogram;
  throw ParamError("unknown feature kind: " + s + " (expected spd or spectrogram)");
}

FeatureSequence spd_features(const dsp::EmgSegment& seg, const dsp::WindowSpec& spec,
                             const spd::Eigenbasis& basis, double eta, bool diag_only) {
  if (basis.dim() != static_cast<int>(seg.channels))
    throw ParamError("eigenbasis dimension does not match segment channel count");
  const auto blocks = dsp::windows(seg, spec);
  const int dim = basis.dim();
  FeatureSequence out;
  out.frames = blocks.size();
  out.frame_dim = diag_only ? static_cast<uint64_t>(dim) : static_cast<uint64_t>(dim) * dim;
  out.kind = FeatureKind::kSpd;
  out.hop_ms = spec.hop_ms;
  out.values.resize(out.frames * out.frame_dim);
  for (size_t k = 0; k < blocks.size(); ++k) {
    const spd::Matrix e = spd::edge_matrix(blocks[k], dim);
    const spd::Matrix reg = spd::regularize(e, eta);
    const spd::Matrix sigma = spd::diagonalize(reg, basis);
    double* dst = out.values.data() + k * out.frame_dim;
    if (diag_only) {
      for (int i = 0; i < dim; ++i) dst[i] = sigma(i, i);
    } else {
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) dst[i * dim + j] = sigma(i, j);
    }
  }
  return out;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw ParamError("fft size must be a power of two with matching real/imag lengths");
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cur_r = 1.0, cur_i = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cur_r - im[b] * cur_i;
        const double ti = re[b] * cur_i + im[b] * cur_r;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double nr = cur_r * wr - cur_i * wi;
        cur_i = cur_r * wi + cur_i * wr;
        cur_r = nr;
      }
    }
  }
}

namespace {

constexpr size_t kFftSize = 256;
constexpr size_t kLinearBins = kFftSize / 2 + 1;  // 129
constexpr int kPooledBins = 31;
constexpr double kLogFloor = 1e-6;

// 129 linear bins -> 31 groups: 26 groups of 4 bins, then 5 groups of 5.
int pooled_group_of_bin(size_t bin) { return bin < 104 ? static_cast<int>(bin / 4) : 26 + static_cast<int>((bin - 104) / 5); }

}  // namespace

FeatureSequence spectrogram_features(const dsp::EmgSegment& seg, const dsp::WindowSpec& spec) {
  const uint64_t win = spec.window_samples(seg.sample_rate);
  if (win > kFftSize)
    throw ParamError("spectrogram window of " + std::to_string(win) + " samples exceeds the 256-point FFT");
  const auto blocks = dsp::windows(seg, spec);
  FeatureSequence out;
  out.frames = blocks.size();
  out.frame_dim = static_cast<uint64_t>(seg.channels) * kPooledBins;
  out.kind = FeatureKind::kSpectrogram;
  out.hop_ms = spec.hop_ms;
  out.values.resize(out.frames * out.frame_dim);

  std::vector<double> re(kFftSize), im(kFftSize);
  std::vector<double> pooled(kPooledBins);
  std::vector<int> group_size(kPooledBins, 0);
  for (size_t b = 0; b < kLinearBins; ++b) ++group_size[pooled_group_of_bin(b)];

  for (size_t k = 0; k < blocks.size(); ++k) {
    const auto& block = blocks[k];
    for (uint32_t ch = 0; ch < seg.channels; ++ch) {
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (uint64_t t = 0; t < win; ++t) re[t] = block[ch * win + t];
      fft_radix2(re, im);
      std::fill(pooled.begin(), pooled.end(), 0.0);
      for (size_t b = 0; b < kLinearBins; ++b) {
        const double mag = std::hypot(re[b], im[b]);
        pooled[pooled_group_of_bin(b)] += std::log(mag + kLogFloor);
      }
      double* dst = out.values.data() + k * out.frame_dim + static_cast<uint64_t>(ch) * kPooledBins;
      for (int g = 0; g < kPooledBins; ++g) dst[g] = pooled[g] / group_size[g];
    }
  }
  return out;
}

dsp::EmgSegment load_segment(const io::SentenceRecord& record, const std::string& manifest_dir) {
  fs::path p(record.emg_path);
  if (p.is_relative()) p = fs::path(manifest_dir) / p;
  io::EmgRecording rec = io::load_recording(p.string());
  if (record.end_sample > rec.samples)
    throw ParamError("sentence " + record.id + " ends past the recording (" + std::to_string(record.end_sample) +
                     " > " + std::to_string(rec.samples) + ")");
  dsp::EmgSegment all;
  all.channels = rec.channels;
  all.samples = rec.samples;
  all.sample_rate = rec.sample_rate;
  all.data = std::move(rec.data);
  return dsp::segment(all, record.start_sample, record.end_sample);
}

namespace {

void save_feature_file(const std::string& path, const FeatureSequence& f) {
  io::Tensor2d t;
  t.rows = static_cast<uint32_t>(f.frames);
  t.row_rate = static_cast<uint32_t>(std::llround(1000.0 / f.hop_ms));
  t.cols = f.frame_dim;
  t.values = f.values;
  io::save_tensor(path, t);
}

}  // namespace

FeaturizeResult featurize_corpus(const std::vector<io::SentenceRecord>& manifest,
                                 const std::string& manifest_dir, const io::DatasetSplit& split,
                                 const FeaturizeConfig& config, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "features");
  FeaturizeResult result;

  std::set<std::string> train_ids(split.train.begin(), split.train.end());
  spd::Eigenbasis basis;
  if (config.kind == FeatureKind::kSpd) {
    // Pass 1: Frechet mean over regularized edge matrices of training
    // frames only. Parallel chunks are merged in chunk order so the
    // result does not depend on the job count's scheduling.
    std::vector<const io::SentenceRecord*> train_records;
    for (const auto& r : manifest)
      if (train_ids.count(r.id)) train_records.push_back(&r);
    if (train_records.empty()) throw ParamError("no training sentences found in manifest for basis estimation");

    const int jobs = std::max(1, config.jobs);
    const size_t chunk = (train_records.size() + jobs - 1) / jobs;
    std::vector<std::future<spd::FrechetAccumulator>> futures;
    for (int j = 0; j < jobs; ++j) {
      const size_t lo = j * chunk;
      const size_t hi = std::min(train_records.size(), lo + chunk);
      if (lo >= hi) break;
      futures.push_back(std::async(std::launch::async, [&, lo, hi]() {
        spd::FrechetAccumulator acc;
        for (size_t i = lo; i < hi; ++i) {
          dsp::EmgSegment seg = load_segment(*train_records[i], manifest_dir);
          if (config.window.frame_count(seg.samples, seg.sample_rate) == 0) continue;
          for (const auto& block : dsp::windows(seg, config.window)) {
            const spd::Matrix e = spd::edge_matrix(block, static_cast<int>(seg.channels));
            acc.add_spd(spd::regularize(e, config.eta));
          }
        }
        return acc;
      }));
    }
    spd::FrechetAccumulator total;
    for (auto& f : futures) total.merge(f.get());
    if (total.count() == 0) throw DataError("no training frames available for the Frechet mean");
    basis = spd::eigenbasis(total.mean());
    result.basis = basis;

    io::Tensor2d tq;
    tq.rows = static_cast<uint32_t>(basis.dim());
    tq.cols = static_cast<uint64_t>(basis.dim());
    tq.values.assign(basis.q.data(), basis.q.data() + basis.q.size());
    // Eigen stores column-major; serialize row-major.
    for (int i = 0; i < basis.dim(); ++i)
      for (int j = 0; j < basis.dim(); ++j) tq.values[static_cast<size_t>(i) * basis.dim() + j] = basis.q(i, j);
    io::save_tensor((fs::path(out_dir) / "basis_q.emgt").string(), tq);
    io::Tensor2d tl;
    tl.rows = 1;
    tl.cols = static_cast<uint64_t>(basis.dim());
    tl.values.assign(basis.lambda.data(), basis.lambda.data() + basis.lambda.size());
    io::save_tensor((fs::path(out_dir) / "basis_lambda.emgt").string(), tl);
  }

  // Pass 2: featurize every sentence with the fixed basis.
  struct Row {
    std::string id;
    std::string rel_path;
    uint64_t frames, frame_dim;
    bool ok;
  };
  std::vector<Row> rows(manifest.size());
  const int jobs = std::max(1, config.jobs);
  const size_t chunk = (manifest.size() + jobs - 1) / jobs;
  std::vector<std::future<void>> futures;
  for (int j = 0; j < jobs; ++j) {
    const size_t lo = j * chunk;
    const size_t hi = std::min(manifest.size(), lo + chunk);
    if (lo >= hi) break;
    futures.push_back(std::async(std::launch::async, [&, lo, hi]() {
      for (size_t i = lo; i < hi; ++i) {
        const auto& rec = manifest[i];
        Row& row = rows[i];
        row.id = rec.id;
        dsp::EmgSegment seg = load_segment(rec, manifest_dir);
        if (config.window.frame_count(seg.samples, seg.sample_rate) == 0) {
          row.ok = false;
          continue;
        }
        FeatureSequence f = config.kind == FeatureKind::kSpd
                                ? spd_features(seg, config.window, basis, config.eta, config.diag_only)
                                : spectrogram_features(seg, config.window);
        row.rel_path = "features/" + rec.id + ".emgt";
        save_feature_file((fs::path(out_dir) / row.rel_path).string(), f);
        row.frames = f.frames;
        row.frame_dim = f.frame_dim;
        row.ok = true;
      }
    }));
  }
  for (auto& f : futures) f.get();

  std::ofstream index(fs::path(out_dir) / "index.jsonl", std::ios::trunc);
  if (!index) throw FormatError("cannot write feature index in " + out_dir);
  for (const Row& row : rows) {
    if (!row.ok) {
      ++result.skipped_too_short;
      continue;
    }
    json j;
    j["id"] = row.id;
    j["path"] = row.rel_path;
    j["frames"] = row.frames;
    j["frame_dim"] = row.frame_dim;
    j["kind"] = to_string(config.kind);
    index << j.dump() << "\n";
    ++result.featurized;
  }
  return result;
}

std::vector<FeatureIndexEntry> load_feature_index(const std::string& store_dir) {
  std::ifstream f(fs::path(store_dir) / "index.jsonl");
  if (!f) throw FormatError("cannot open feature index in " + store_dir);
  std::vector<FeatureIndexEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("feature index line " + std::to_string(line_no) + ": " + e.what());
    }
    FeatureIndexEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.frames = j.at("frames").get<uint64_t>();
    e.frame_dim = j.at("frame_dim").get<uint64_t>();
    e.kind = feature_kind_from_string(j.at("kind").get<std::string>());
    entries.push_back(std::move(e));
  }
  return entries;
}

FeatureSequence load_features(const std::string& store_dir, const FeatureIndexEntry& entry) {
  io::Tensor2d t = io::load_tensor((fs::path(store_dir) / entry.path).string());
  if (t.rows != entry.frames || t.cols != entry.frame_dim)
    throw FormatError("feature file shape disagrees with index for id " + entry.id);
  FeatureSequence f;
  f.frames = t.rows;
  f.frame_dim = t.cols;
  f.kind = entry.kind;
  f.hop_ms = t.row_rate > 0 ? 1000.0 / t.row_rate : 20.0;
  f.values = std::move(t.values);
  return f;
}

std::optional<spd::Eigenbasis> load_store_basis(const std::string& store_dir) {
  const fs::path qp = fs::path(store_dir) / "basis_q.emgt";
  if (!fs::exists(qp)) return std::nullopt;
  io::Tensor2d tq = io::load_tensor(qp.string());
  io::Tensor2d tl = io::load_tensor((fs::path(store_dir) / "basis_lambda.emgt").string());
  spd::Eigenbasis basis;
  const int n = static_cast<int>(tq.rows);
  basis.q = spd::Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) basis.q(i, j) = tq.values[static_cast<size_t>(i) * n + j];
  basis.lambda = spd::Vector(n);
  for (int i = 0; i < n; ++i) basis.lambda(i) = tl.values[static_cast<size_t>(i)];
  return basis;
}

}  // namespace emg2text::feat
