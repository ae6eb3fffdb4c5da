#include "emg2text/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "emg2text/binio.hpp"
#include "emg2text/errors.hpp"

namespace emg2text::io {

using nlohmann::json;

namespace {

constexpr char kEmgMagic[4] = {'E', 'M', 'G', 'S'};
constexpr uint16_t kEmgVersion = 1;

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open file: " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open file for writing: " + path);
  return f;
}

void read_header(std::istream& is, const std::string& path, uint32_t& a, uint32_t& rate, uint64_t& b) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kEmgMagic, 4) != 0)
    throw FormatError("bad magic in " + path + " (expected EMGS)");
  const uint16_t version = binio::get_le<uint16_t>(is, "version");
  if (version != kEmgVersion)
    throw FormatError("unsupported version " + std::to_string(version) + " in " + path);
  a = binio::get_le<uint32_t>(is, "channels");
  rate = binio::get_le<uint32_t>(is, "sample_rate");
  b = binio::get_le<uint64_t>(is, "samples");
}

void write_header(std::ostream& os, uint32_t a, uint32_t rate, uint64_t b) {
  binio::put_bytes(os, kEmgMagic, 4);
  binio::put_le<uint16_t>(os, kEmgVersion);
  binio::put_le<uint32_t>(os, a);
  binio::put_le<uint32_t>(os, rate);
  binio::put_le<uint64_t>(os, b);
}

std::vector<double> read_payload(std::istream& is, const std::string& path, uint64_t count) {
  std::vector<float> raw = binio::get_f32_block(is, count, path.c_str());
  // A well-formed file ends exactly at the payload boundary.
  char extra;
  if (is.read(&extra, 1))
    throw FormatError("trailing bytes after payload in " + path);
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i]))
      throw DataError("non-finite value at element " + std::to_string(i) + " in " + path);
    out[i] = static_cast<double>(raw[i]);
  }
  return out;
}

}  // namespace

EmgRecording load_recording(const std::string& path) {
  auto f = open_in(path);
  EmgRecording rec;
  read_header(f, path, rec.channels, rec.sample_rate, rec.samples);
  if (rec.channels < 2)
    throw FormatError("recording " + path + " has fewer than 2 channels");
  rec.data = read_payload(f, path, static_cast<uint64_t>(rec.channels) * rec.samples);
  rec.reference_index = rec.channels - 1;
  return rec;
}

void save_recording(const std::string& path, const EmgRecording& rec) {
  if (rec.data.size() != static_cast<size_t>(rec.channels) * rec.samples)
    throw ParamError("recording data length does not match channels*samples");
  auto f = open_out(path);
  write_header(f, rec.channels, rec.sample_rate, rec.samples);
  for (double v : rec.data) binio::put_f32(f, static_cast<float>(v));
  if (!f) throw FormatError("write failed: " + path);
}

Tensor2d load_tensor(const std::string& path) {
  auto f = open_in(path);
  Tensor2d t;
  read_header(f, path, t.rows, t.row_rate, t.cols);
  t.values = read_payload(f, path, static_cast<uint64_t>(t.rows) * t.cols);
  return t;
}

void save_tensor(const std::string& path, const Tensor2d& t) {
  if (t.values.size() != static_cast<size_t>(t.rows) * t.cols)
    throw ParamError("tensor value count does not match rows*cols");
  auto f = open_out(path);
  write_header(f, t.rows, t.row_rate, t.cols);
  for (double v : t.values) binio::put_f32(f, static_cast<float>(v));
  if (!f) throw FormatError("write failed: " + path);
}

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw ParamError("empty phoneme symbol at index " + std::to_string(i));
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second)
      throw ParamError("duplicate phoneme symbol: " + symbols_[i]);
  }
  if (symbols_.empty()) throw ParamError("phoneme inventory is empty");
}

PhonemeInventory PhonemeInventory::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open inventory: " + path);
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(f, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) symbols.push_back(tok);
  }
  return PhonemeInventory(std::move(symbols));
}

void PhonemeInventory::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write inventory: " + path);
  for (const auto& s : symbols_) f << s << "\n";
}

int PhonemeInventory::id_of(const std::string& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) throw VocabError("unknown phoneme symbol: " + s);
  return it->second;
}

std::vector<int> PhonemeInventory::encode(const std::vector<std::string>& seq) const {
  std::vector<int> ids;
  ids.reserve(seq.size());
  for (const auto& s : seq) ids.push_back(id_of(s));
  return ids;
}

std::vector<std::string> PhonemeInventory::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(symbol(id));
  return out;
}

PhonemeInventory default_inventory() {
  return PhonemeInventory({
      "aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh",
      "eh", "er", "ey", "f",  "g",  "hh", "ih", "iy", "jh", "k",
      "l",  "m",  "n",  "ng", "ow", "oy", "p",  "r",  "s",  "sh",
      "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh", "sil",
  });
}

DatasetSplit DatasetSplit::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open split file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("split file " + path + " is not valid JSON: " + e.what());
  }
  DatasetSplit s;
  auto grab = [&](const char* key, std::vector<std::string>& out) {
    if (!j.contains(key)) throw FormatError("split file missing key: " + std::string(key));
    for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
  };
  grab("train", s.train);
  grab("validation", s.validation);
  grab("test", s.test);
  s.validate_disjoint();
  return s;
}

void DatasetSplit::save(const std::string& path) const {
  validate_disjoint();
  json j;
  j["train"] = train;
  j["validation"] = validation;
  j["test"] = test;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write split file: " + path);
  f << j.dump(2) << "\n";
}

void DatasetSplit::validate_disjoint() const {
  std::set<std::string> tr(train.begin(), train.end());
  std::set<std::string> va(validation.begin(), validation.end());
  for (const auto& id : validation)
    if (tr.count(id)) throw ParamError("split overlap: id '" + id + "' in train and validation");
  for (const auto& id : test) {
    if (tr.count(id)) throw ParamError("split overlap: id '" + id + "' in train and test");
    if (va.count(id)) throw ParamError("split overlap: id '" + id + "' in validation and test");
  }
}

std::vector<SentenceRecord> load_manifest(const std::string& path, const PhonemeInventory& inventory) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest: " + path);
  std::vector<SentenceRecord> records;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    SentenceRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.emg_path = j.at("emg_path").get<std::string>();
      r.start_sample = j.at("start_sample").get<uint64_t>();
      r.end_sample = j.at("end_sample").get<uint64_t>();
      if (j.at("transcript").is_string()) {
        std::istringstream ss(j.at("transcript").get<std::string>());
        std::string w;
        while (ss >> w) r.transcript.push_back(w);
      } else {
        for (const auto& w : j.at("transcript")) r.transcript.push_back(w.get<std::string>());
      }
      for (const auto& p : j.at("phonemes")) r.phonemes.push_back(p.get<std::string>());
      if (j.contains("reference_index")) r.reference_index = j.at("reference_index").get<uint32_t>();
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.start_sample >= r.end_sample)
      throw FormatError("manifest line " + std::to_string(line_no) + ": start_sample must be < end_sample");
    for (const auto& p : r.phonemes)
      if (!inventory.contains(p))
        throw VocabError("manifest " + path + " line " + std::to_string(line_no) + ": unknown phoneme symbol '" +
                         p + "'");
    if (!seen.insert(r.id).second)
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void save_manifest(const std::string& path, const std::vector<SentenceRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write manifest: " + path);
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["emg_path"] = r.emg_path;
    j["start_sample"] = r.start_sample;
    j["end_sample"] = r.end_sample;
    j["transcript"] = r.transcript;
    j["phonemes"] = r.phonemes;
    if (r.reference_index) j["reference_index"] = *r.reference_index;
    f << j.dump() << "\n";
  }
}

Lexicon load_lexicon(const std::string& path, const PhonemeInventory& inventory) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open lexicon: " + path);
  Lexicon lex;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<std::string> phones;
    std::string p;
    while (ss >> p) phones.push_back(p);
    if (phones.empty())
      throw FormatError("lexicon " + path + " line " + std::to_string(line_no) + ": word '" + word +
                        "' has no phonemes");
    for (const auto& ph : phones)
      if (!inventory.contains(ph))
        throw VocabError("lexicon " + path + " line " + std::to_string(line_no) + ": unknown phoneme symbol '" +
                         ph + "'");
    lex[word].push_back(std::move(phones));
  }
  return lex;
}

}  // namespace emg2text::io
