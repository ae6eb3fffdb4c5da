#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emg2text/ctc.hpp"
#include "emg2text/signal_io.hpp"

namespace emg2text::lm {

// Backoff n-gram model with ARPA-convention log10 probabilities.
// Queries are total: any in-vocabulary token resolves through the
// backoff recursion; unknown tokens fall back to <unk> or a -99 floor.
class NGramModel {
 public:
  NGramModel() = default;

  int order() const { return order_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  bool has_token(const std::string& token) const { return token_ids_.count(token) != 0; }

  // log10 p(token | context), context trimmed to the last order-1 tokens.
  double log10_prob(const std::vector<std::string>& context, const std::string& token) const;

  // log10 probability of a sentence: tokens after an implicit <s>,
  // including the </s> transition.
  double log10_sentence(const std::vector<std::string>& tokens) const;

  void save_arpa(const std::string& path) const;
  static NGramModel load_arpa(const std::string& path);

  // Interpolated Kneser-Ney with a fixed absolute discount for orders
  // >= 2; the unigram level uses continuation counts (plain ML counts
  // for an order-1 model). Sentences are padded with <s> and </s>.
  static NGramModel train(const std::vector<std::vector<std::string>>& corpus, int order,
                          double discount = 0.75);

  // Exposed for the normalization property tests: every context that
  // has at least one stored continuation.
  std::vector<std::vector<std::string>> stored_contexts() const;

  static constexpr const char* kSentenceStart = "<s>";
  static constexpr const char* kSentenceEnd = "</s>";
  static constexpr const char* kUnknown = "<unk>";
  static constexpr double kLogFloor = -99.0;

 private:
  int id_or_unk(const std::string& token) const;
  double log10_prob_ids(const int* context, size_t len, int token) const;

  int order_ = 0;
  std::vector<std::string> vocab_;
  std::map<std::string, int> token_ids_;
  std::map<std::vector<int>, double> entries_;   // full gram -> log10 p
  std::map<std::vector<int>, double> backoffs_;  // context -> log10 bow
};

// Phoneme-labeled trie over lexicon pronunciations; terminal nodes emit
// the words whose pronunciation ends there.
class LexiconTrie {
 public:
  LexiconTrie(const io::Lexicon& lexicon, const io::PhonemeInventory& inventory);

  struct Node {
    std::map<int, int> children;  // phoneme id -> node index
    std::vector<int> words;       // word ids emitted at this node
  };

  const Node& node(int index) const { return nodes_[static_cast<size_t>(index)]; }
  int root() const { return 0; }
  size_t node_count() const { return nodes_.size(); }
  const std::string& word(int word_id) const { return words_[static_cast<size_t>(word_id)]; }
  size_t word_count() const { return words_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::string> words_;
};

// CTC topology + lexicon + grammar with composition weights. The search
// runs over dynamically composed (trie node, LM context, last symbol)
// states instead of a materialized HLG automaton.
struct DecodingGraph {
  const LexiconTrie* lexicon = nullptr;
  const NGramModel* grammar = nullptr;  // null -> no LM term
  double lm_weight = 1.0;
  double word_insertion_penalty = 0.0;
  int silence_id = -1;  // phoneme id allowed to loop between words, or -1
};

struct WordHypothesis {
  std::vector<int> word_ids;
  double score = -std::numeric_limits<double>::infinity();
};

struct HlgResult {
  std::vector<WordHypothesis> hypotheses;  // best first; empty if none survived
  bool empty_output = false;               // no complete word hypothesis
};

// Frame-synchronous beam search over the composed space. Hypothesis
// scores are summed CTC path probabilities plus lm_weight * LM log prob
// (natural log) plus the insertion penalty per word; the LM end-of-
// sentence transition is applied at finalization.
HlgResult hlg_decode(const ctc::Lattice& log_probs, int blank_id, const DecodingGraph& graph,
                     size_t width = 50);

struct ScoredSequence {
  std::vector<std::string> tokens;
  double score = 0.0;
};

// Shallow rescoring: score' = score + weight * ln p_LM(tokens), stable
// re-sort best first.
std::vector<ScoredSequence> char_lm_rescore(std::vector<ScoredSequence> hypotheses,
                                            const NGramModel& char_lm, double weight);

}  // namespace emg2text::lm
