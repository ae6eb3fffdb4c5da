#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "emg2text/errors.hpp"
#include "emg2text/rng.hpp"
#include "emg2text/signal_io.hpp"

using namespace emg2text;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "emg2text_test_signal_io";
  fs::create_directories(dir);
  return dir;
}

// Independent byte-level writer used as the round-trip oracle; shares no
// code with io::save_recording.
void oracle_write_emg(const std::string& path, uint32_t channels, uint32_t rate, uint64_t samples,
                      const std::vector<float>& payload) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write("EMGS", 4);
  auto le = [&f](uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      const char b = static_cast<char>((v >> (8 * i)) & 0xff);
      f.write(&b, 1);
    }
  };
  le(1, 2);
  le(channels, 4);
  le(rate, 4);
  le(samples, 8);
  for (float v : payload) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits, 4);
  }
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("recording round trip against the oracle writer") {
  const auto dir = temp_dir();
  const std::string oracle = (dir / "oracle.emg").string();
  const std::string ours = (dir / "ours.emg").string();

  SUBCASE("2x3 example decodes channel-major") {
    oracle_write_emg(oracle, 2, 5000, 3, {1, 2, 3, 4, 5, 6});
    const io::EmgRecording rec = io::load_recording(oracle);
    CHECK(rec.channels == 2);
    CHECK(rec.sample_rate == 5000);
    CHECK(rec.samples == 3);
    CHECK(rec.at(0, 0) == 1.0);
    CHECK(rec.at(0, 2) == 3.0);
    CHECK(rec.at(1, 0) == 4.0);
    CHECK(rec.at(1, 2) == 6.0);
    CHECK(rec.reference_index == 1);
  }

  SUBCASE("32-channel 5000 Hz file is byte-identical after save/load") {
    Rng rng(7);
    const uint32_t channels = 32;
    const uint64_t samples = 500;
    std::vector<float> payload(channels * samples);
    for (auto& v : payload) v = static_cast<float>(rng.next_normal());
    oracle_write_emg(oracle, channels, 5000, samples, payload);

    const io::EmgRecording rec = io::load_recording(oracle);
    io::save_recording(ours, rec);
    CHECK(slurp(oracle) == slurp(ours));

    const io::EmgRecording again = io::load_recording(ours);
    CHECK(again.data == rec.data);
  }

  SUBCASE("payload one value short is a truncation error") {
    oracle_write_emg(oracle, 2, 5000, 3, {1, 2, 3, 4, 5});
    CHECK_THROWS_AS(io::load_recording(oracle), FormatError);
  }

  SUBCASE("trailing bytes are rejected") {
    oracle_write_emg(oracle, 2, 5000, 3, {1, 2, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(io::load_recording(oracle), FormatError);
  }

  SUBCASE("bad magic is a format error") {
    std::ofstream f(oracle, std::ios::binary | std::ios::trunc);
    f << "NOPE followed by junk";
    f.close();
    CHECK_THROWS_AS(io::load_recording(oracle), FormatError);
  }

  SUBCASE("non-finite payload is a data error") {
    const float inf = std::numeric_limits<float>::infinity();
    oracle_write_emg(oracle, 2, 5000, 2, {1, inf, 3, 4});
    CHECK_THROWS_AS(io::load_recording(oracle), DataError);
  }
}

TEST_CASE("manifest loading") {
  const auto dir = temp_dir();
  const std::string path = (dir / "manifest.jsonl").string();
  const io::PhonemeInventory inventory = io::default_inventory();

  SUBCASE("friday example yields one record with 5 phonemes") {
    std::ofstream f(path, std::ios::trunc);
    f << R"({"id":"s1","emg_path":"a.emg","start_sample":0,"end_sample":10,)"
      << R"("transcript":["friday"],"phonemes":["f","r","iy","d","ay"]})" << "\n";
    f.close();
    const auto records = io::load_manifest(path, inventory);
    REQUIRE(records.size() == 1);
    CHECK(records[0].id == "s1");
    CHECK(records[0].phonemes.size() == 5);
    CHECK(records[0].transcript == std::vector<std::string>{"friday"});
  }

  SUBCASE("empty file gives an empty list") {
    std::ofstream(path, std::ios::trunc).close();
    CHECK(io::load_manifest(path, inventory).empty());
  }

  SUBCASE("unknown phoneme names the symbol") {
    std::ofstream f(path, std::ios::trunc);
    f << R"({"id":"s1","emg_path":"a.emg","start_sample":0,"end_sample":10,)"
      << R"("transcript":["x"],"phonemes":["zz"]})" << "\n";
    f.close();
    CHECK_THROWS_WITH_AS(io::load_manifest(path, inventory), doctest::Contains("zz"), VocabError);
  }

  SUBCASE("duplicate id is a manifest error") {
    std::ofstream f(path, std::ios::trunc);
    for (int i = 0; i < 2; ++i)
      f << R"({"id":"dup","emg_path":"a.emg","start_sample":0,"end_sample":10,)"
        << R"("transcript":["f"],"phonemes":["f"]})" << "\n";
    f.close();
    CHECK_THROWS_AS(io::load_manifest(path, inventory), FormatError);
  }

  SUBCASE("loading twice yields identical sequences") {
    std::ofstream f(path, std::ios::trunc);
    for (int i = 0; i < 5; ++i)
      f << R"({"id":"s)" << i << R"(","emg_path":"a.emg","start_sample":0,"end_sample":10,)"
        << R"("transcript":["f"],"phonemes":["f","r"]})" << "\n";
    f.close();
    const auto first = io::load_manifest(path, inventory);
    const auto second = io::load_manifest(path, inventory);
    REQUIRE(first.size() == second.size());
    for (size_t i = 0; i < first.size(); ++i) CHECK(first[i].id == second[i].id);
  }
}

TEST_CASE("lexicon loading") {
  const auto dir = temp_dir();
  const std::string path = (dir / "lexicon.txt").string();
  const io::PhonemeInventory inventory = io::default_inventory();

  SUBCASE("friday maps to its pronunciation") {
    std::ofstream f(path, std::ios::trunc);
    f << "# comment line\n";
    f << "friday f r iy d ay\n";
    f.close();
    const io::Lexicon lex = io::load_lexicon(path, inventory);
    REQUIRE(lex.count("friday") == 1);
    CHECK(lex.at("friday")[0] == std::vector<std::string>{"f", "r", "iy", "d", "ay"});
  }

  SUBCASE("duplicate word keeps both pronunciations in order") {
    std::ofstream f(path, std::ios::trunc);
    f << "either iy dh er\n";
    f << "either ay dh er\n";
    f.close();
    const io::Lexicon lex = io::load_lexicon(path, inventory);
    REQUIRE(lex.at("either").size() == 2);
    CHECK(lex.at("either")[0][0] == "iy");
    CHECK(lex.at("either")[1][0] == "ay");
  }

  SUBCASE("word without phonemes is a format error") {
    std::ofstream f(path, std::ios::trunc);
    f << "orphan\n";
    f.close();
    CHECK_THROWS_AS(io::load_lexicon(path, inventory), FormatError);
  }

  SUBCASE("ten words load and are queryable") {
    std::ofstream f(path, std::ios::trunc);
    for (int i = 0; i < 10; ++i) f << "w" << i << " f r\n";
    f.close();
    const io::Lexicon lex = io::load_lexicon(path, inventory);
    CHECK(lex.size() == 10);
    CHECK(lex.count("w7") == 1);
  }
}

TEST_CASE("inventory contract") {
  const io::PhonemeInventory inventory = io::default_inventory();
  CHECK(inventory.size() == 40);
  CHECK(inventory.blank_id() == 40);
  CHECK(inventory.contains("sil"));
  CHECK(inventory.id_of("f") >= 0);
  CHECK_THROWS_AS(inventory.id_of("blank"), VocabError);
  CHECK_THROWS_AS(io::PhonemeInventory({"a", "a"}), ParamError);

  const auto ids = inventory.encode({"f", "r", "iy", "d", "ay"});
  CHECK(inventory.decode(ids) == std::vector<std::string>{"f", "r", "iy", "d", "ay"});
}

TEST_CASE("dataset split disjointness") {
  io::DatasetSplit split;
  split.train = {"a", "b"};
  split.validation = {"c"};
  split.test = {"d"};
  CHECK_NOTHROW(split.validate_disjoint());

  split.test.push_back("a");
  CHECK_THROWS_AS(split.validate_disjoint(), ParamError);

  const auto dir = temp_dir();
  const std::string path = (dir / "split.json").string();
  split.test = {"d"};
  split.save(path);
  const io::DatasetSplit loaded = io::DatasetSplit::load(path);
  CHECK(loaded.train == split.train);
  CHECK(loaded.validation == split.validation);
  CHECK(loaded.test == split.test);
}

TEST_CASE("tensor container round trip") {
  const auto dir = temp_dir();
  const std::string path = (dir / "tensor.emgt").string();
  io::Tensor2d t;
  t.rows = 3;
  t.row_rate = 50;
  t.cols = 4;
  t.values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  io::save_tensor(path, t);
  const io::Tensor2d back = io::load_tensor(path);
  CHECK(back.rows == 3);
  CHECK(back.row_rate == 50);
  CHECK(back.cols == 4);
  CHECK(back.values == t.values);
  CHECK(back.at(1, 2) == 7.0);
}
