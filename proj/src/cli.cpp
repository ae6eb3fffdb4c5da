#include "emg2text/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "emg2text/ctc.hpp"
#include "emg2text/decode_lm.hpp"
#include "emg2text/errors.hpp"
#include "emg2text/features.hpp"
#include "emg2text/metrics.hpp"
#include "emg2text/neural.hpp"
#include "emg2text/preprocess.hpp"
#include "emg2text/signal_io.hpp"
#include "emg2text/testkit.hpp"

#ifndef EMG2TEXT_BUILD_HASH
#define EMG2TEXT_BUILD_HASH "unknown"
#endif

namespace emg2text {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Flat key=value configuration. Flags override file values; the
// effective configuration is serialized next to every artifact so a run
// can be replayed exactly.
std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  if (path.empty()) return kv;
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config file: " + path);
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

void write_config(const std::string& dir, const std::map<std::string, std::string>& config) {
  json j(config);
  std::ofstream f(fs::path(dir) / "config.json", std::ios::trunc);
  if (!f) throw FormatError("cannot write config.json in " + dir);
  f << j.dump(2) << "\n";
}

// Applies config-file defaults to CLI11 options that the user did not
// pass explicitly, then records the effective values.
class ConfigBinder {
 public:
  explicit ConfigBinder(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_, "flat key=value config file (flags win)");
  }

  void finalize() {
    const auto file_values = load_config_file(config_path_);
    for (const auto& [key, value] : file_values) {
      CLI::Option* opt = nullptr;
      try {
        opt = cmd_->get_option("--" + key);
      } catch (const CLI::OptionNotFound&) {
        throw ParamError("config file key '" + key + "' does not match any option of this subcommand");
      }
      if (opt->count() == 0) {
        opt->add_result(value);
        opt->run_callback();
      }
    }
  }

  std::map<std::string, std::string> effective(CLI::App* cmd) const {
    std::map<std::string, std::string> out;
    for (const CLI::Option* opt : cmd->get_options()) {
      const std::string name = opt->get_name();
      if (name.rfind("--", 0) != 0 || name == "--help" || name == "--config") continue;
      if (opt->count() > 0) {
        std::string joined;
        for (const auto& r : opt->results()) {
          if (!joined.empty()) joined += ",";
          joined += r;
        }
        out[name.substr(2)] = joined;
      } else if (!opt->get_default_str().empty()) {
        out[name.substr(2)] = opt->get_default_str();
      }
    }
    return out;
  }

 private:
  CLI::App* cmd_;
  std::string config_path_;
};

io::PhonemeInventory inventory_for(const std::string& flag_path, const std::string& manifest_path) {
  if (!flag_path.empty()) return io::PhonemeInventory::load(flag_path);
  const fs::path sibling = fs::path(manifest_path).parent_path() / "inventory.txt";
  if (fs::exists(sibling)) return io::PhonemeInventory::load(sibling.string());
  return io::default_inventory();
}

struct LabelMap {
  std::map<std::string, const io::SentenceRecord*> by_id;
};

LabelMap index_manifest(const std::vector<io::SentenceRecord>& records) {
  LabelMap map;
  for (const auto& r : records) map.by_id[r.id] = &r;
  return map;
}

std::vector<nn::LabeledFeatures> gather_labeled(const std::string& store_dir,
                                                const std::vector<feat::FeatureIndexEntry>& index,
                                                const LabelMap& labels, const io::PhonemeInventory& inventory,
                                                const std::vector<std::string>& ids) {
  std::map<std::string, const feat::FeatureIndexEntry*> by_id;
  for (const auto& e : index) by_id[e.id] = &e;
  std::vector<nn::LabeledFeatures> out;
  for (const auto& id : ids) {
    auto fit = by_id.find(id);
    if (fit == by_id.end()) continue;  // skipped at featurization
    auto lit = labels.by_id.find(id);
    if (lit == labels.by_id.end()) throw DataError("id '" + id + "' has features but no manifest entry");
    nn::LabeledFeatures item;
    item.id = id;
    item.features = feat::load_features(store_dir, *fit->second);
    item.labels = inventory.encode(lit->second->phonemes);
    out.push_back(std::move(item));
  }
  return out;
}

// ---- subcommand implementations ----

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::map<std::string, std::string>& config) {
  testkit::SyntheticSpec spec = testkit::SyntheticSpec::load(spec_path);
  fs::create_directories(out_dir);
  const auto summary = testkit::generate_corpus(spec, out_dir);
  spec.save((fs::path(out_dir) / "spec.json").string());
  write_config(out_dir, config);
  std::cerr << "synth: wrote " << summary.sentences << " sentences to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const std::string& manifest_path, const std::string& out_dir, double low_hz, double high_hz,
                   int order, bool zero_phase, double window_ms, double hop_ms, const std::string& inventory_path,
                   int jobs, const std::map<std::string, std::string>& config) {
  (void)jobs;
  const io::PhonemeInventory inventory = inventory_for(inventory_path, manifest_path);
  const auto records = io::load_manifest(manifest_path, inventory);
  const std::string manifest_dir = fs::path(manifest_path).parent_path().string();
  fs::create_directories(fs::path(out_dir) / "segments");

  dsp::WindowSpec wspec;
  wspec.window_ms = window_ms;
  wspec.hop_ms = hop_ms;

  std::vector<io::SentenceRecord> out_records;
  uint64_t too_short = 0;
  for (const auto& record : records) {
    fs::path emg = record.emg_path;
    if (emg.is_relative()) emg = fs::path(manifest_dir) / emg;
    io::EmgRecording rec = io::load_recording(emg.string());
    if (record.reference_index) rec.reference_index = *record.reference_index;
    dsp::EmgSegment seg = dsp::subtract_reference(rec);
    dsp::bandpass(seg, low_hz, high_hz, order, zero_phase);
    seg = dsp::segment(seg, record.start_sample, record.end_sample);
    dsp::znormalize(seg);
    if (wspec.frame_count(seg.samples, seg.sample_rate) == 0) ++too_short;

    io::EmgRecording out;
    out.channels = seg.channels;
    out.sample_rate = seg.sample_rate;
    out.samples = seg.samples;
    out.data = seg.data;
    const std::string rel = "segments/" + record.id + ".emg";
    io::save_recording((fs::path(out_dir) / rel).string(), out);

    io::SentenceRecord nr = record;
    nr.emg_path = rel;
    nr.start_sample = 0;
    nr.end_sample = seg.samples;
    nr.reference_index.reset();
    out_records.push_back(std::move(nr));
  }
  io::save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), out_records);
  inventory.save((fs::path(out_dir) / "inventory.txt").string());
  write_config(out_dir, config);
  std::cerr << "preprocess: " << out_records.size() << " sentences";
  if (too_short) std::cerr << " (" << too_short << " shorter than one window)";
  std::cerr << "\n";
  return 0;
}

int cmd_featurize(const std::string& manifest_path, const std::string& split_path, const std::string& out_dir,
                  const std::string& kind, double eta, double window_ms, double hop_ms, bool diag_only,
                  const std::string& inventory_path, int jobs,
                  const std::map<std::string, std::string>& config) {
  const io::PhonemeInventory inventory = inventory_for(inventory_path, manifest_path);
  const auto records = io::load_manifest(manifest_path, inventory);
  const io::DatasetSplit split = io::DatasetSplit::load(split_path);

  feat::FeaturizeConfig fc;
  fc.kind = feat::feature_kind_from_string(kind);
  fc.eta = eta;
  fc.window.window_ms = window_ms;
  fc.window.hop_ms = hop_ms;
  fc.diag_only = diag_only;
  fc.jobs = jobs;
  fs::create_directories(out_dir);
  const auto result =
      feat::featurize_corpus(records, fs::path(manifest_path).parent_path().string(), split, fc, out_dir);
  write_config(out_dir, config);
  std::cerr << "featurize: " << result.featurized << " sentences";
  if (result.skipped_too_short) std::cerr << " (" << result.skipped_too_short << " skipped: too short)";
  std::cerr << "\n";
  return 0;
}

int cmd_train(const std::string& features_dir, const std::string& manifest_path, const std::string& split_path,
              const std::string& out_dir, int layers, int hidden, int epochs, double lr, double weight_decay,
              int batch_size, uint64_t seed, const std::string& inventory_path,
              const std::map<std::string, std::string>& config) {
  const io::PhonemeInventory inventory = inventory_for(inventory_path, manifest_path);
  const auto records = io::load_manifest(manifest_path, inventory);
  const io::DatasetSplit split = io::DatasetSplit::load(split_path);
  const auto index = feat::load_feature_index(features_dir);
  const LabelMap labels = index_manifest(records);

  auto train_set = gather_labeled(features_dir, index, labels, inventory, split.train);
  auto val_set = gather_labeled(features_dir, index, labels, inventory, split.validation);
  if (train_set.empty()) throw DataError("no training sentences available");

  const int input_dim = static_cast<int>(train_set.front().features.frame_dim);
  const int output_dim = static_cast<int>(inventory.size()) + 1;
  nn::AcousticModel model = nn::init_model(layers, hidden, input_dim, output_dim, seed);
  model.inventory_symbols = inventory.symbols();
  model.feature_kind = train_set.front().features.kind;
  model.run_config = config;
  if (auto basis = feat::load_store_basis(features_dir)) model.basis = std::move(*basis);

  fs::create_directories(out_dir);
  nn::TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.weight_decay = weight_decay;
  tc.batch_size = batch_size;
  tc.seed = seed;
  tc.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();

  std::cerr << "train: " << train_set.size() << " train / " << val_set.size() << " val sentences, N="
            << model.param_count() << " parameters\n";
  const nn::TrainResult result = nn::train(model, std::move(train_set), val_set, tc);
  nn::write_train_log((fs::path(out_dir) / "train_log.csv").string(), result.log);
  write_config(out_dir, config);
  for (const auto& row : result.log)
    std::cerr << "epoch " << row.epoch << " train " << row.train_loss << " val " << row.val_loss << "\n";
  std::cerr << "train: best epoch " << result.best_epoch << " val loss " << result.best_val_loss << "\n";
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& features_dir, const std::string& split_path,
               const std::string& mode, const std::string& out_path, size_t beam_width,
               const std::string& lexicon_path, const std::string& lm_path, double lm_weight, double wip,
               bool allow_silence, const std::map<std::string, std::string>& config) {
  (void)config;
  const nn::AcousticModel model = nn::load_checkpoint(model_path);
  const io::PhonemeInventory inventory((std::vector<std::string>(model.inventory_symbols)));
  const auto index = feat::load_feature_index(features_dir);
  const io::DatasetSplit split = io::DatasetSplit::load(split_path);

  std::map<std::string, const feat::FeatureIndexEntry*> by_id;
  for (const auto& e : index) by_id[e.id] = &e;

  std::optional<io::Lexicon> lexicon;
  std::optional<lm::LexiconTrie> trie;
  std::optional<lm::NGramModel> grammar;
  if (mode == "wer") {
    if (lexicon_path.empty()) throw ParamError("--mode wer requires --lexicon");
    lexicon = io::load_lexicon(lexicon_path, inventory);
    trie.emplace(*lexicon, inventory);
    if (!lm_path.empty()) grammar = lm::NGramModel::load_arpa(lm_path);
  } else if (mode != "per") {
    throw ParamError("--mode must be per or wer");
  }

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw FormatError("cannot write hypotheses: " + out_path);

  uint64_t decoded = 0, empty_outputs = 0;
  for (const auto& id : split.test) {
    auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    const feat::FeatureSequence features = feat::load_features(features_dir, *it->second);
    const auto t0 = std::chrono::steady_clock::now();
    const ctc::Lattice lattice = nn::forward(model, features);
    json j;
    j["id"] = id;
    if (mode == "per") {
      const auto hyps = ctc::beam_decode(lattice, inventory.blank_id(), beam_width);
      const auto& best = hyps.front();
      j["hypothesis"] = inventory.decode(best.ids);
      j["score"] = best.score;
    } else {
      lm::DecodingGraph graph;
      graph.lexicon = &*trie;
      graph.grammar = grammar ? &*grammar : nullptr;
      graph.lm_weight = lm_weight;
      graph.word_insertion_penalty = wip;
      graph.silence_id = (allow_silence && inventory.contains("sil")) ? inventory.id_of("sil") : -1;
      const lm::HlgResult result = lm::hlg_decode(lattice, inventory.blank_id(), graph, beam_width);
      if (result.empty_output) {
        ++empty_outputs;
        j["hypothesis"] = std::vector<std::string>{};
        j["score"] = nullptr;
      } else {
        std::vector<std::string> words;
        for (int w : result.hypotheses.front().word_ids) words.push_back(trie->word(w));
        j["hypothesis"] = words;
        j["score"] = result.hypotheses.front().score;
      }
    }
    j["time_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    out << j.dump() << "\n";
    ++decoded;
  }
  std::cerr << "decode: " << decoded << " sentences";
  if (empty_outputs) std::cerr << " (" << empty_outputs << " empty outputs)";
  std::cerr << "\n";
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& hyps_path, const std::string& unit,
             const std::string& split_path, const std::string& out_path, const std::string& sentence_csv,
             bool per_sentence_mean, const std::string& inventory_path) {
  const io::PhonemeInventory inventory = inventory_for(inventory_path, manifest_path);
  const auto records = io::load_manifest(manifest_path, inventory);
  const LabelMap refs = index_manifest(records);

  std::ifstream hf(hyps_path);
  if (!hf) throw FormatError("cannot open hypotheses: " + hyps_path);
  std::map<std::string, std::vector<std::string>> hyps;
  std::string line;
  size_t line_no = 0;
  while (std::getline(hf, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("hypotheses " + hyps_path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    std::vector<std::string> tokens;
    for (const auto& t : j.at("hypothesis")) tokens.push_back(t.get<std::string>());
    hyps[j.at("id").get<std::string>()] = std::move(tokens);
  }

  std::vector<std::string> expected_ids;
  if (!split_path.empty()) {
    expected_ids = io::DatasetSplit::load(split_path).test;
  } else {
    for (const auto& r : records) expected_ids.push_back(r.id);
  }
  if (expected_ids.size() != hyps.size())
    throw DataError("hypothesis/reference count mismatch: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(expected_ids.size()) + " references");

  auto tokens_of = [&](const io::SentenceRecord& r) -> std::vector<std::string> {
    if (unit == "phoneme") return r.phonemes;
    if (unit == "word") return r.transcript;
    if (unit == "char") {
      std::string joined;
      for (size_t i = 0; i < r.transcript.size(); ++i) {
        if (i) joined += ' ';
        joined += r.transcript[i];
      }
      std::vector<std::string> chars;
      for (char c : joined) chars.emplace_back(1, c);
      return chars;
    }
    throw ParamError("--unit must be phoneme, word or char");
  };

  std::vector<std::vector<std::string>> ref_seqs, hyp_seqs;
  std::vector<std::string> ids;
  for (const auto& id : expected_ids) {
    auto hit = hyps.find(id);
    if (hit == hyps.end()) throw DataError("no hypothesis for reference id '" + id + "'");
    auto rit = refs.by_id.find(id);
    if (rit == refs.by_id.end()) throw DataError("hypothesis id '" + id + "' is not in the manifest");
    std::vector<std::string> hyp = hit->second;
    if (unit == "char") {
      std::string joined;
      for (size_t i = 0; i < hyp.size(); ++i) {
        if (i) joined += ' ';
        joined += hyp[i];
      }
      hyp.clear();
      for (char c : joined) hyp.emplace_back(1, c);
    }
    ref_seqs.push_back(tokens_of(*rit->second));
    hyp_seqs.push_back(std::move(hyp));
    ids.push_back(id);
  }

  const metrics::CorpusRates rates = metrics::corpus_rates(ref_seqs, hyp_seqs);
  const double rate = per_sentence_mean ? rates.per_sentence_mean : rates.pooled;

  json report;
  report[unit == "phoneme" ? "per" : unit == "word" ? "wer" : "cer"] = rate;
  report["n_sentences"] = rates.sentences;
  report["pooled"] = !per_sentence_mean;
  std::ofstream rf(out_path, std::ios::trunc);
  if (!rf) throw FormatError("cannot write report: " + out_path);
  rf << report.dump(2) << "\n";
  std::cout << report.dump() << "\n";

  if (!sentence_csv.empty()) {
    std::ofstream cf(sentence_csv, std::ios::trunc);
    if (!cf) throw FormatError("cannot write per-sentence CSV: " + sentence_csv);
    cf << "id,errors,reference_length,rate\n";
    for (size_t i = 0; i < ids.size(); ++i) {
      const auto rep = metrics::levenshtein(ref_seqs[i], hyp_seqs[i]);
      cf << ids[i] << "," << rep.distance() << "," << rep.reference_length << "," << format_double(rep.rate())
         << "\n";
    }
  }
  return 0;
}

int cmd_fit_scaling(const std::string& points_path, const std::string& out_path, const std::string& plot_csv) {
  std::ifstream f(points_path);
  if (!f) throw FormatError("cannot open points CSV: " + points_path);
  std::vector<std::pair<double, double>> points;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.find_first_of("0123456789") == std::string::npos) continue;  // header
    std::istringstream ss(line);
    std::string n_str, e_str;
    if (!std::getline(ss, n_str, ',') || !std::getline(ss, e_str, ','))
      throw FormatError("points CSV expects 'N,E' rows");
    points.emplace_back(std::stod(n_str), std::stod(e_str));
  }
  const metrics::ScalingFit fit = metrics::fit_scaling(points);
  json j;
  j["alpha"] = fit.alpha;
  j["beta"] = fit.beta;
  j["r_squared"] = fit.r_squared;
  std::ofstream rf(out_path, std::ios::trunc);
  if (!rf) throw FormatError("cannot write fit: " + out_path);
  rf << j.dump(2) << "\n";
  std::cout << j.dump() << "\n";
  if (!plot_csv.empty()) {
    std::ofstream pf(plot_csv, std::ios::trunc);
    pf << "N,E,fitted\n";
    for (const auto& [n, e] : fit.points)
      pf << format_double(n) << "," << format_double(e) << ","
         << format_double(fit.alpha / std::pow(n, fit.beta)) << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Silent-speech EMG-to-text decoding pipeline"};
  app.set_version_flag("--version", std::string("emg2text ") + kVersion + " (" + EMG2TEXT_BUILD_HASH + ")");
  app.require_subcommand(0, 1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus from a spec JSON");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "synthetic spec JSON")->required();
  synth->add_option("--out", synth_out, "output corpus directory")->required();
  ConfigBinder synth_cfg(synth);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "reference subtraction, bandpass, segmentation, z-normalization");
  std::string pre_manifest, pre_out, pre_inventory;
  double pre_low = 80.0, pre_high = 1000.0, pre_window = 50.0, pre_hop = 20.0;
  int pre_order = 3, pre_jobs = 1;
  bool pre_zero_phase = false;
  pre->add_option("--manifest", pre_manifest)->required();
  pre->add_option("--out-dir", pre_out)->required();
  pre->add_option("--low-hz", pre_low, "bandpass low cutoff")->capture_default_str();
  pre->add_option("--high-hz", pre_high, "bandpass high cutoff")->capture_default_str();
  pre->add_option("--order", pre_order, "filter order")->capture_default_str();
  pre->add_flag("--zero-phase", pre_zero_phase, "forward-backward filtering");
  pre->add_option("--window-ms", pre_window)->capture_default_str();
  pre->add_option("--hop-ms", pre_hop)->capture_default_str();
  pre->add_option("--inventory", pre_inventory, "phoneme inventory file");
  pre->add_option("--jobs", pre_jobs)->capture_default_str();
  ConfigBinder pre_cfg(pre);

  // featurize
  auto* featz = app.add_subcommand("featurize", "compute SPD or spectrogram features and the eigenbasis");
  std::string feat_manifest, feat_split, feat_out, feat_kind = "spd", feat_inventory;
  double feat_eta = 0.1, feat_window = 50.0, feat_hop = 20.0;
  bool feat_diag_only = false;
  int feat_jobs = 1;
  featz->add_option("--manifest", feat_manifest)->required();
  featz->add_option("--split", feat_split)->required();
  featz->add_option("--out-dir", feat_out)->required();
  featz->add_option("--kind", feat_kind, "spd or spectrogram")->capture_default_str();
  featz->add_option("--eta", feat_eta, "regularization strength")->capture_default_str();
  featz->add_option("--window-ms", feat_window)->capture_default_str();
  featz->add_option("--hop-ms", feat_hop)->capture_default_str();
  featz->add_flag("--diag-only", feat_diag_only, "keep only the 31 diagonal entries");
  featz->add_option("--inventory", feat_inventory);
  featz->add_option("--jobs", feat_jobs)->capture_default_str();
  ConfigBinder feat_cfg(featz);

  // train
  auto* train = app.add_subcommand("train", "train the BiGRU acoustic model with CTC");
  std::string train_features, train_manifest, train_split, train_out, train_inventory;
  int train_layers = 3, train_hidden = 256, train_epochs = 100, train_batch = 16;
  double train_lr = 1e-3, train_wd = 0.0;
  uint64_t train_seed = 0;
  train->add_option("--features", train_features)->required();
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--split", train_split)->required();
  train->add_option("--out-dir", train_out)->required();
  train->add_option("--layers", train_layers)->capture_default_str();
  train->add_option("--hidden", train_hidden)->capture_default_str();
  train->add_option("--epochs", train_epochs)->capture_default_str();
  train->add_option("--lr", train_lr)->capture_default_str();
  train->add_option("--weight-decay", train_wd)->capture_default_str();
  train->add_option("--batch-size", train_batch)->capture_default_str();
  train->add_option("--seed", train_seed)->capture_default_str();
  train->add_option("--inventory", train_inventory);
  ConfigBinder train_cfg(train);

  // decode
  auto* decode = app.add_subcommand("decode", "decode test sentences to phonemes (per) or words (wer)");
  std::string dec_model, dec_features, dec_split, dec_mode = "per", dec_out, dec_lexicon, dec_lm;
  size_t dec_width = 50;
  double dec_lm_weight = 1.0, dec_wip = 0.0;
  bool dec_allow_silence = false;
  decode->add_option("--model", dec_model)->required();
  decode->add_option("--features", dec_features)->required();
  decode->add_option("--split", dec_split)->required();
  decode->add_option("--mode", dec_mode, "per or wer")->capture_default_str();
  decode->add_option("--out", dec_out)->required();
  decode->add_option("--beam-width", dec_width)->capture_default_str();
  decode->add_option("--lexicon", dec_lexicon);
  decode->add_option("--lm", dec_lm, "ARPA language model");
  decode->add_option("--lm-weight", dec_lm_weight)->capture_default_str();
  decode->add_option("--wip", dec_wip, "word insertion penalty")->capture_default_str();
  decode->add_flag("--allow-silence", dec_allow_silence, "allow sil loops between words");
  ConfigBinder dec_cfg(decode);

  // eval
  auto* eval = app.add_subcommand("eval", "score hypotheses against manifest references");
  std::string eval_manifest, eval_hyps, eval_unit = "phoneme", eval_split, eval_out = "report.json",
              eval_csv, eval_inventory;
  bool eval_mean = false;
  eval->add_option("--refs", eval_manifest, "reference manifest")->required();
  eval->add_option("--hyps", eval_hyps, "decode output JSONL")->required();
  eval->add_option("--unit", eval_unit, "phoneme, word or char")->capture_default_str();
  eval->add_option("--split", eval_split, "restrict references to this split's test ids");
  eval->add_option("--out", eval_out)->capture_default_str();
  eval->add_option("--per-sentence-csv", eval_csv);
  eval->add_flag("--per-sentence-mean", eval_mean, "report mean of per-sentence rates instead of pooled");
  eval->add_option("--inventory", eval_inventory);

  // fit-scaling
  auto* fit_cmd = app.add_subcommand("fit-scaling", "fit E = alpha / N^beta to (N,E) points");
  std::string fit_points, fit_out = "fit.json", fit_plot;
  fit_cmd->add_option("--points", fit_points, "CSV of N,E rows")->required();
  fit_cmd->add_option("--out", fit_out)->capture_default_str();
  fit_cmd->add_option("--plot-csv", fit_plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // prints usage/help; 0 for --help/--version
  }

  try {
    if (synth->parsed()) {
      synth_cfg.finalize();
      return cmd_synth(synth_spec, synth_out, synth_cfg.effective(synth));
    }
    if (pre->parsed()) {
      pre_cfg.finalize();
      return cmd_preprocess(pre_manifest, pre_out, pre_low, pre_high, pre_order, pre_zero_phase, pre_window,
                            pre_hop, pre_inventory, pre_jobs, pre_cfg.effective(pre));
    }
    if (featz->parsed()) {
      feat_cfg.finalize();
      return cmd_featurize(feat_manifest, feat_split, feat_out, feat_kind, feat_eta, feat_window, feat_hop,
                           feat_diag_only, feat_inventory, feat_jobs, feat_cfg.effective(featz));
    }
    if (train->parsed()) {
      train_cfg.finalize();
      return cmd_train(train_features, train_manifest, train_split, train_out, train_layers, train_hidden,
                       train_epochs, train_lr, train_wd, train_batch, train_seed, train_inventory,
                       train_cfg.effective(train));
    }
    if (decode->parsed()) {
      dec_cfg.finalize();
      return cmd_decode(dec_model, dec_features, dec_split, dec_mode, dec_out, dec_width, dec_lexicon, dec_lm,
                        dec_lm_weight, dec_wip, dec_allow_silence, dec_cfg.effective(decode));
    }
    if (eval->parsed())
      return cmd_eval(eval_manifest, eval_hyps, eval_unit, eval_split, eval_out, eval_csv, eval_mean,
                      eval_inventory);
    if (fit_cmd->parsed()) return cmd_fit_scaling(fit_points, fit_out, fit_plot);
    std::cout << app.help() << "\n";
    return 0;
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace emg2text
