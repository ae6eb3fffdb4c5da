#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace emg2text::io {

// One multichannel EMG recording, channel-major float payload.
// The on-disk format is "EMGS" magic, u16 version=1, u32 channels,
// u32 sample_rate, u64 samples, then channels*samples float32 LE.
struct EmgRecording {
  uint32_t channels = 0;
  uint32_t sample_rate = 0;
  uint64_t samples = 0;
  uint32_t reference_index = 0;  // not serialized; defaults to last channel
  std::vector<double> data;      // channel-major, channels * samples

  double at(uint32_t channel, uint64_t sample) const { return data[channel * samples + sample]; }
  double& at(uint32_t channel, uint64_t sample) { return data[channel * samples + sample]; }
};

struct SentenceRecord {
  std::string id;
  std::string emg_path;
  uint64_t start_sample = 0;
  uint64_t end_sample = 0;
  std::vector<std::string> transcript;  // words
  std::vector<std::string> phonemes;    // label sequence L
  std::optional<uint32_t> reference_index;  // per-record override
};

// Ordered phoneme symbol list; blank is the reserved extra class with
// index size(). The paper's inventory has 40 symbols; synthetic corpora
// use smaller ones, so the size is data-driven rather than fixed.
class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::string> symbols);

  static PhonemeInventory load(const std::string& path);
  void save(const std::string& path) const;

  size_t size() const { return symbols_.size(); }
  int blank_id() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(int id) const { return symbols_.at(static_cast<size_t>(id)); }
  bool contains(const std::string& s) const { return index_.count(s) != 0; }
  int id_of(const std::string& s) const;  // VocabError if unknown

  std::vector<int> encode(const std::vector<std::string>& seq) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

// The default 40-symbol inventory: lowercase ARPABET-39 plus "sil".
PhonemeInventory default_inventory();

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  static DatasetSplit load(const std::string& path);
  void save(const std::string& path) const;
  void validate_disjoint() const;  // ParamError on overlap
};

// Recording file I/O.
EmgRecording load_recording(const std::string& path);
void save_recording(const std::string& path, const EmgRecording& rec);

// Generic 2-D float32 tensor in the same container format. For tensor
// files the header's channel field counts rows and the sample field
// counts columns; rows are contiguous ("frame-major" for features).
struct Tensor2d {
  uint32_t rows = 0;
  uint32_t row_rate = 0;  // rows per second where meaningful, else 0
  uint64_t cols = 0;
  std::vector<double> values;  // row-major

  double at(uint32_t r, uint64_t c) const { return values[r * cols + c]; }
};

Tensor2d load_tensor(const std::string& path);
void save_tensor(const std::string& path, const Tensor2d& t);

// JSON-Lines manifest. Validates phoneme symbols against the inventory.
std::vector<SentenceRecord> load_manifest(const std::string& path, const PhonemeInventory& inventory);
void save_manifest(const std::string& path, const std::vector<SentenceRecord>& records);

// Lexicon: "WORD ph1 ph2 ..." per line, '#' starts a comment. Multiple
// pronunciations per word are preserved in file order.
using Lexicon = std::map<std::string, std::vector<std::vector<std::string>>>;
Lexicon load_lexicon(const std::string& path, const PhonemeInventory& inventory);

}  // namespace emg2text::io
