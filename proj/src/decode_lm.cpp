#include "emg2text/decode_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "emg2text/errors.hpp"

namespace emg2text::lm {

namespace {
constexpr double kLn10 = 2.302585092994045684;
}

int NGramModel::id_or_unk(const std::string& token) const {
  auto it = token_ids_.find(token);
  if (it != token_ids_.end()) return it->second;
  auto unk = token_ids_.find(kUnknown);
  return unk != token_ids_.end() ? unk->second : -1;
}

double NGramModel::log10_prob_ids(const int* context, size_t len, int token) const {
  if (token < 0) return kLogFloor;
  std::vector<int> gram(context, context + len);
  gram.push_back(token);
  auto it = entries_.find(gram);
  if (it != entries_.end()) return it->second;
  if (len == 0) return kLogFloor;  // unigram missing entirely
  double bow = 0.0;
  const std::vector<int> ctx(context, context + len);
  auto bo = backoffs_.find(ctx);
  if (bo != backoffs_.end()) bow = bo->second;
  return bow + log10_prob_ids(context + 1, len - 1, token);
}

double NGramModel::log10_prob(const std::vector<std::string>& context, const std::string& token) const {
  if (order_ < 1) throw ParamError("query on an empty language model");
  std::vector<int> ctx;
  const size_t keep = std::min(context.size(), static_cast<size_t>(order_ - 1));
  for (size_t i = context.size() - keep; i < context.size(); ++i) {
    const int id = id_or_unk(context[i]);
    if (id < 0) {
      ctx.clear();  // unmappable context token: truncate to shorter context
      continue;
    }
    ctx.push_back(id);
  }
  return log10_prob_ids(ctx.data(), ctx.size(), id_or_unk(token));
}

double NGramModel::log10_sentence(const std::vector<std::string>& tokens) const {
  std::vector<std::string> context{kSentenceStart};
  double total = 0.0;
  for (const auto& tok : tokens) {
    total += log10_prob(context, tok);
    context.push_back(tok);
  }
  total += log10_prob(context, kSentenceEnd);
  return total;
}

std::vector<std::vector<std::string>> NGramModel::stored_contexts() const {
  std::vector<std::vector<std::string>> out;
  std::vector<int> last;
  bool have_last = false;
  for (const auto& [gram, logp] : entries_) {
    (void)logp;
    std::vector<int> ctx(gram.begin(), gram.end() - 1);
    if (have_last && ctx == last) continue;
    last = ctx;
    have_last = true;
    std::vector<std::string> named;
    for (int id : ctx) named.push_back(vocab_[static_cast<size_t>(id)]);
    out.push_back(std::move(named));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NGramModel NGramModel::train(const std::vector<std::vector<std::string>>& corpus, int order,
                             double discount) {
  if (order < 1) throw ParamError("n-gram order must be >= 1");
  if (corpus.empty()) throw ParamError("cannot train a language model on an empty corpus");
  if (!(discount > 0.0 && discount < 1.0)) throw ParamError("discount must lie in (0, 1)");

  NGramModel model;
  model.order_ = order;
  auto intern = [&model](const std::string& token) {
    auto it = model.token_ids_.find(token);
    if (it != model.token_ids_.end()) return it->second;
    const int id = static_cast<int>(model.vocab_.size());
    model.vocab_.push_back(token);
    model.token_ids_.emplace(token, id);
    return id;
  };
  // An order-1 model is a plain maximum-likelihood unigram distribution
  // over corpus tokens; sentence padding only matters for real contexts.
  const bool pad = order >= 2;
  const int bos = pad ? intern(kSentenceStart) : -1;
  const int eos = pad ? intern(kSentenceEnd) : -1;

  std::vector<std::vector<int>> sentences;
  for (const auto& sent : corpus) {
    std::vector<int> ids;
    if (pad) ids.push_back(bos);
    for (const auto& tok : sent) ids.push_back(intern(tok));
    if (pad) ids.push_back(eos);
    sentences.push_back(std::move(ids));
  }

  // Raw counts for every gram length up to the order (plus order+0 for
  // continuation derivation below).
  std::vector<std::map<std::vector<int>, uint64_t>> raw(order + 1);
  for (const auto& sent : sentences) {
    for (int k = 1; k <= order; ++k) {
      if (sent.size() < static_cast<size_t>(k)) continue;
      for (size_t i = 0; i + k <= sent.size(); ++i)
        ++raw[k][std::vector<int>(sent.begin() + i, sent.begin() + i + k)];
    }
  }

  // Adjusted counts: raw at the top level; continuation counts below
  // (how many distinct tokens precede the gram), except grams starting
  // with <s>, which can never be extended left and keep raw counts.
  std::vector<std::map<std::vector<int>, uint64_t>> adj(order + 1);
  adj[order] = raw[order];
  for (int k = order - 1; k >= 1; --k) {
    for (const auto& [gram, count] : raw[k]) {
      (void)count;
      if (gram.front() == bos) adj[k][gram] = raw[k][gram];
    }
    for (const auto& [gram, count] : raw[k + 1]) {
      (void)count;
      std::vector<int> suffix(gram.begin() + 1, gram.end());
      if (suffix.front() != bos) ++adj[k][suffix];
    }
  }

  // Unigram level: continuation-count distribution over everything but
  // <s>. An order-1 model reduces to plain maximum likelihood.
  uint64_t uni_total = 0;
  for (const auto& [gram, count] : adj[1])
    if (gram.front() != bos) uni_total += count;
  if (uni_total == 0) throw ParamError("degenerate corpus: no predictable tokens");
  for (const auto& [gram, count] : adj[1]) {
    if (gram.front() == bos) {
      model.entries_[gram] = kLogFloor;  // <s> is never predicted
    } else {
      model.entries_[gram] = std::log10(static_cast<double>(count) / static_cast<double>(uni_total));
    }
  }

  // Higher levels with interpolation; the lower levels are complete by
  // the time each level is built, so interpolation can use the model's
  // own backoff query.
  for (int k = 2; k <= order; ++k) {
    // Group grams by context.
    std::map<std::vector<int>, std::pair<uint64_t, uint64_t>> ctx_stats;  // total, distinct
    for (const auto& [gram, count] : adj[k]) {
      std::vector<int> ctx(gram.begin(), gram.end() - 1);
      auto& [total, types] = ctx_stats[ctx];
      total += count;
      types += 1;
    }
    for (const auto& [gram, count] : adj[k]) {
      std::vector<int> ctx(gram.begin(), gram.end() - 1);
      const auto& [total, types] = ctx_stats.at(ctx);
      const double lambda = discount * static_cast<double>(types) / static_cast<double>(total);
      const double direct = std::max(static_cast<double>(count) - discount, 0.0) / static_cast<double>(total);
      const double lower =
          std::pow(10.0, model.log10_prob_ids(ctx.data() + 1, ctx.size() - 1, gram.back()));
      const double p = direct + lambda * lower;
      model.entries_[gram] = std::log10(p);
    }
    for (const auto& [ctx, stats] : ctx_stats) {
      const double lambda = discount * static_cast<double>(stats.second) / static_cast<double>(stats.first);
      model.backoffs_[ctx] = std::log10(lambda);
    }
  }
  return model;
}

void NGramModel::save_arpa(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write ARPA file: " + path);

  std::vector<std::vector<std::pair<std::vector<int>, double>>> by_order(order_ + 1);
  for (const auto& [gram, logp] : entries_) by_order[gram.size()].emplace_back(gram, logp);
  auto gram_text = [this](const std::vector<int>& gram) {
    std::string s;
    for (size_t i = 0; i < gram.size(); ++i) {
      if (i) s += ' ';
      s += vocab_[static_cast<size_t>(gram[i])];
    }
    return s;
  };
  for (auto& level : by_order)
    std::sort(level.begin(), level.end(), [&](const auto& a, const auto& b) {
      return gram_text(a.first) < gram_text(b.first);
    });

  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  f << "\\data\\\n";
  for (int k = 1; k <= order_; ++k) f << "ngram " << k << "=" << by_order[k].size() << "\n";
  for (int k = 1; k <= order_; ++k) {
    f << "\n\\" << k << "-grams:\n";
    for (const auto& [gram, logp] : by_order[k]) {
      f << fmt(logp) << "\t" << gram_text(gram);
      auto bo = backoffs_.find(gram);
      if (bo != backoffs_.end()) f << "\t" << fmt(bo->second);
      f << "\n";
    }
  }
  f << "\n\\end\\\n";
}

NGramModel NGramModel::load_arpa(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open ARPA file: " + path);

  NGramModel model;
  auto intern = [&model](const std::string& token) {
    auto it = model.token_ids_.find(token);
    if (it != model.token_ids_.end()) return it->second;
    const int id = static_cast<int>(model.vocab_.size());
    model.vocab_.push_back(token);
    model.token_ids_.emplace(token, id);
    return id;
  };

  std::string line;
  size_t line_no = 0;
  auto next_line = [&](std::string& out) {
    if (!std::getline(f, out)) return false;
    ++line_no;
    while (!out.empty() && (out.back() == '\r' || out.back() == '\n')) out.pop_back();
    return true;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError("ARPA " + path + " line " + std::to_string(line_no) + ": " + msg);
  };

  // Header.
  bool found_data = false;
  while (next_line(line)) {
    if (line == "\\data\\") {
      found_data = true;
      break;
    }
    if (!line.empty() && line.find_first_not_of(" \t") != std::string::npos)
      fail("expected \\data\\ section");
  }
  if (!found_data) throw FormatError("ARPA " + path + ": missing \\data\\ section");

  std::vector<size_t> declared;  // declared[k-1] = count for order k
  while (next_line(line)) {
    if (line.empty()) break;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word != "ngram") fail("expected 'ngram k=N' in the \\data\\ section");
    std::string rest;
    ss >> rest;
    const auto eq = rest.find('=');
    if (eq == std::string::npos) fail("malformed ngram count line");
    const int k = std::stoi(rest.substr(0, eq));
    const size_t n = static_cast<size_t>(std::stoull(rest.substr(eq + 1)));
    if (k != static_cast<int>(declared.size()) + 1) fail("ngram orders must be consecutive from 1");
    declared.push_back(n);
  }
  if (declared.empty()) throw FormatError("ARPA " + path + ": no ngram counts declared");
  model.order_ = static_cast<int>(declared.size());

  bool saw_end = false;
  int current_order = 0;
  std::vector<size_t> parsed(model.order_, 0);
  while (next_line(line)) {
    if (line.empty()) continue;
    if (line == "\\end\\") {
      saw_end = true;
      break;
    }
    if (line.front() == '\\') {
      const auto dash = line.find("-grams:");
      if (dash == std::string::npos) fail("unrecognized section header: " + line);
      current_order = std::stoi(line.substr(1, dash - 1));
      if (current_order < 1 || current_order > model.order_) fail("section order out of declared range");
      continue;
    }
    if (current_order == 0) fail("entry before any \\k-grams: section");
    std::istringstream ss(line);
    double logp;
    if (!(ss >> logp)) fail("expected log10 probability");
    std::vector<int> gram;
    for (int i = 0; i < current_order; ++i) {
      std::string tok;
      if (!(ss >> tok)) fail("expected " + std::to_string(current_order) + " tokens");
      gram.push_back(intern(tok));
    }
    double bow;
    if (ss >> bow) model.backoffs_[gram] = bow;
    std::string extra;
    if (ss >> extra) fail("trailing tokens after backoff weight");
    model.entries_[gram] = logp;
    ++parsed[current_order - 1];
  }
  if (!saw_end) throw FormatError("ARPA " + path + ": missing \\end\\ marker");
  for (int k = 1; k <= model.order_; ++k) {
    if (parsed[k - 1] != declared[k - 1])
      throw FormatError("ARPA " + path + ": declared " + std::to_string(declared[k - 1]) + " " +
                        std::to_string(k) + "-grams but parsed " + std::to_string(parsed[k - 1]));
  }
  return model;
}

LexiconTrie::LexiconTrie(const io::Lexicon& lexicon, const io::PhonemeInventory& inventory) {
  nodes_.emplace_back();
  for (const auto& [word, pronunciations] : lexicon) {
    const int word_id = static_cast<int>(words_.size());
    words_.push_back(word);
    for (const auto& pron : pronunciations) {
      int node = 0;
      for (const auto& phoneme : pron) {
        const int pid = inventory.id_of(phoneme);
        auto it = nodes_[node].children.find(pid);
        if (it == nodes_[node].children.end()) {
          nodes_.emplace_back();
          it = nodes_[node].children.emplace(pid, static_cast<int>(nodes_.size() - 1)).first;
        }
        node = it->second;
      }
      auto& emitted = nodes_[node].words;
      if (std::find(emitted.begin(), emitted.end(), word_id) == emitted.end()) emitted.push_back(word_id);
    }
  }
}

namespace {

struct HlgKey {
  std::vector<int> words;
  std::vector<int> pending;
  int last;  // last emitted phoneme id, -1 if none

  bool operator<(const HlgKey& o) const {
    if (words != o.words) return words < o.words;
    if (pending != o.pending) return pending < o.pending;
    return last < o.last;
  }
};

struct HlgMass {
  double blank = ctc::log_zero();
  double non_blank = ctc::log_zero();
  double lm = 0.0;  // accumulated weighted LM + insertion terms (natural log)
  int node = 0;     // trie node reached by `pending`
  double total() const { return ctc::log_add(blank, non_blank); }
  double score() const { return total() + lm; }
};

double word_lm_term(const DecodingGraph& graph, const std::vector<int>& history, int word_id) {
  double term = graph.word_insertion_penalty;
  if (graph.grammar) {
    std::vector<std::string> ctx{NGramModel::kSentenceStart};
    for (int w : history) ctx.push_back(graph.lexicon->word(w));
    term += graph.lm_weight * kLn10 * graph.grammar->log10_prob(ctx, graph.lexicon->word(word_id));
  }
  return term;
}

}  // namespace

HlgResult hlg_decode(const ctc::Lattice& log_probs, int blank_id, const DecodingGraph& graph,
                     size_t width) {
  if (!graph.lexicon) throw ParamError("decoding graph has no lexicon");
  if (width < 1) throw ParamError("beam width must be >= 1");
  const LexiconTrie& trie = *graph.lexicon;
  const int frames = static_cast<int>(log_probs.rows());
  const int classes = static_cast<int>(log_probs.cols());

  std::map<HlgKey, HlgMass> beam;
  {
    HlgMass init;
    init.blank = 0.0;
    init.node = trie.root();
    beam.emplace(HlgKey{{}, {}, -1}, init);
  }

  auto add_mass = [](std::map<HlgKey, HlgMass>& dst, const HlgKey& key, double blank, double non_blank,
                     double lm, int node) {
    auto [it, inserted] = dst.try_emplace(key);
    HlgMass& m = it->second;
    if (inserted) {
      m.lm = lm;
      m.node = node;
    }
    m.blank = ctc::log_add(m.blank, blank);
    m.non_blank = ctc::log_add(m.non_blank, non_blank);
  };

  for (int t = 0; t < frames; ++t) {
    std::map<HlgKey, HlgMass> next;
    for (const auto& [key, mass] : beam) {
      const double total = mass.total();
      // Blank: stay in place.
      add_mass(next, key, total + log_probs(t, blank_id), ctc::log_zero(), mass.lm, mass.node);
      // Repeat of the last emitted symbol: no trie movement.
      if (key.last >= 0 && mass.non_blank != ctc::log_zero())
        add_mass(next, key, ctc::log_zero(), mass.non_blank + log_probs(t, key.last), mass.lm, mass.node);
      // Silence loop between words.
      if (graph.silence_id >= 0 && key.pending.empty() && graph.silence_id < classes) {
        const double base = (key.last == graph.silence_id) ? mass.blank : total;
        if (base != ctc::log_zero()) {
          HlgKey sil_key{key.words, {}, graph.silence_id};
          add_mass(next, sil_key, ctc::log_zero(), base + log_probs(t, graph.silence_id), mass.lm,
                   mass.node);
        }
      }
      // Advance along trie edges.
      for (const auto& [phoneme, child] : trie.node(mass.node).children) {
        if (phoneme >= classes || phoneme == blank_id) continue;
        const double base = (phoneme == key.last) ? mass.blank : total;
        if (base == ctc::log_zero()) continue;
        const double contrib = base + log_probs(t, phoneme);
        const auto& child_node = trie.node(child);
        if (!child_node.children.empty()) {
          HlgKey open{key.words, key.pending, phoneme};
          open.pending.push_back(phoneme);
          add_mass(next, open, ctc::log_zero(), contrib, mass.lm, child);
        }
        for (int word_id : child_node.words) {
          HlgKey closed{key.words, {}, phoneme};
          closed.words.push_back(word_id);
          add_mass(next, closed, ctc::log_zero(), contrib,
                   mass.lm + word_lm_term(graph, key.words, word_id), trie.root());
        }
      }
    }
    // Per-frame top-k pruning.
    std::vector<const std::pair<const HlgKey, HlgMass>*> order;
    order.reserve(next.size());
    for (const auto& kv : next) order.push_back(&kv);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      const double sa = a->second.score(), sb = b->second.score();
      if (sa != sb) return sa > sb;
      return a->first < b->first;
    });
    if (order.size() > width) order.resize(width);
    std::map<HlgKey, HlgMass> pruned;
    for (const auto* kv : order) pruned.emplace(kv->first, kv->second);
    beam = std::move(pruned);
  }

  // Finalize: complete hypotheses only, merged across CTC end states.
  std::map<std::vector<int>, double> by_words;
  for (const auto& [key, mass] : beam) {
    if (!key.pending.empty()) continue;
    double score = mass.score();
    if (graph.grammar) {
      std::vector<std::string> ctx{NGramModel::kSentenceStart};
      for (int w : key.words) ctx.push_back(trie.word(w));
      score += graph.lm_weight * kLn10 * graph.grammar->log10_prob(ctx, NGramModel::kSentenceEnd);
    }
    auto [it, inserted] = by_words.emplace(key.words, score);
    if (!inserted) it->second = ctc::log_add(it->second, score);
  }

  HlgResult result;
  if (by_words.empty()) {
    result.empty_output = true;
    return result;
  }
  for (const auto& [words, score] : by_words) result.hypotheses.push_back({words, score});
  std::sort(result.hypotheses.begin(), result.hypotheses.end(), [](const WordHypothesis& a, const WordHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.word_ids < b.word_ids;
  });
  return result;
}

std::vector<ScoredSequence> char_lm_rescore(std::vector<ScoredSequence> hypotheses,
                                            const NGramModel& char_lm, double weight) {
  for (auto& hyp : hypotheses) hyp.score += weight * kLn10 * char_lm.log10_sentence(hyp.tokens);
  std::stable_sort(hypotheses.begin(), hypotheses.end(),
                   [](const ScoredSequence& a, const ScoredSequence& b) { return a.score > b.score; });
  return hypotheses;
}

}  // namespace emg2text::lm
