#include "emg2text/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "emg2text/errors.hpp"

namespace emg2text::ctc {

int min_frames_for(const std::vector<int>& labels) {
  int needed = static_cast<int>(labels.size());
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++needed;
  return needed;
}

LossResult ctc_loss(const Lattice& log_probs, const std::vector<int>& labels, int blank_id) {
  const int frames = static_cast<int>(log_probs.rows());
  const int classes = static_cast<int>(log_probs.cols());
  if (blank_id < 0 || blank_id >= classes) throw ParamError("blank id outside lattice class range");
  for (int label : labels)
    if (label < 0 || label >= classes || label == blank_id)
      throw ParamError("label id " + std::to_string(label) + " outside the non-blank class range");
  if (frames < min_frames_for(labels))
    throw DataError("infeasible alignment: " + std::to_string(frames) + " frames cannot align " +
                    std::to_string(labels.size()) + " labels (need at least " +
                    std::to_string(min_frames_for(labels)) + ")");

  // Blank-augmented sequence: blank, l1, blank, l2, ..., blank.
  const int s_len = 2 * static_cast<int>(labels.size()) + 1;
  auto ext = [&](int s) { return (s % 2 == 0) ? blank_id : labels[s / 2]; };
  auto can_skip = [&](int s) {
    // A diagonal skip from s-2 is allowed unless it lands on a blank or
    // crosses a repeated label.
    return s >= 2 && ext(s) != blank_id && ext(s) != ext(s - 2);
  };

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(frames, s_len, log_zero());
  alpha(0, 0) = log_probs(0, ext(0));
  if (s_len > 1) alpha(0, 1) = log_probs(0, ext(1));
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = (acc == log_zero()) ? log_zero() : acc + log_probs(t, ext(s));
    }
  }
  double log_p = alpha(frames - 1, s_len - 1);
  if (s_len > 1) log_p = log_add(log_p, alpha(frames - 1, s_len - 2));
  if (log_p == log_zero()) throw DataError("all alignments have zero probability");

  // beta(t, s) excludes the emission at frame t, so that
  // p = sum_s exp(alpha(t, s) + beta(t, s)) holds at every t.
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(frames, s_len, log_zero());
  beta(frames - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta(frames - 1, s_len - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = beta(t + 1, s) == log_zero() ? log_zero() : beta(t + 1, s) + log_probs(t + 1, ext(s));
      if (s + 1 < s_len && beta(t + 1, s + 1) != log_zero())
        acc = log_add(acc, beta(t + 1, s + 1) + log_probs(t + 1, ext(s + 1)));
      if (s + 2 < s_len && can_skip(s + 2) && beta(t + 1, s + 2) != log_zero())
        acc = log_add(acc, beta(t + 1, s + 2) + log_probs(t + 1, ext(s + 2)));
      beta(t, s) = acc;
    }
  }

  LossResult result;
  result.loss = -log_p;
  result.grad = Lattice::Zero(frames, classes);
  for (int t = 0; t < frames; ++t) {
    // Group posterior mass by emitted class.
    std::map<int, double> by_class;
    for (int s = 0; s < s_len; ++s) {
      const double ab = alpha(t, s) + beta(t, s);
      if (ab == log_zero()) continue;
      auto [it, inserted] = by_class.emplace(ext(s), ab);
      if (!inserted) it->second = log_add(it->second, ab);
    }
    for (const auto& [cls, lse] : by_class) result.grad(t, cls) = -std::exp(lse - log_p);
  }
  return result;
}

std::vector<int> greedy_decode(const Lattice& log_probs, int blank_id) {
  std::vector<int> out;
  int prev = blank_id;
  for (int t = 0; t < log_probs.rows(); ++t) {
    int arg = 0;
    for (int k = 1; k < log_probs.cols(); ++k)
      if (log_probs(t, k) > log_probs(t, arg)) arg = k;
    if (arg != blank_id && arg != prev) out.push_back(arg);
    prev = arg;
  }
  return out;
}

namespace {

struct PrefixMass {
  double blank = log_zero();      // paths ending in blank
  double non_blank = log_zero();  // paths ending in the prefix's last symbol
  double total() const { return log_add(blank, non_blank); }
};

bool better(const std::pair<std::vector<int>, double>& a, const std::pair<std::vector<int>, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;  // lexicographic; shorter prefix wins
}

}  // namespace

std::vector<BeamHypothesis> beam_decode(const Lattice& log_probs, int blank_id, size_t width,
                                        const SymbolLm& lm, double lm_weight) {
  if (width < 1) throw ParamError("beam width must be >= 1");
  const int frames = static_cast<int>(log_probs.rows());
  const int classes = static_cast<int>(log_probs.cols());

  std::map<std::vector<int>, PrefixMass> beam;
  beam[{}].blank = 0.0;

  for (int t = 0; t < frames; ++t) {
    std::map<std::vector<int>, PrefixMass> next;
    for (const auto& [prefix, mass] : beam) {
      const double total = mass.total();
      // Stay on the same prefix via blank.
      {
        PrefixMass& dst = next[prefix];
        dst.blank = log_add(dst.blank, total + log_probs(t, blank_id));
      }
      // Stay via a repeat of the last symbol (no new emission).
      if (!prefix.empty() && mass.non_blank != log_zero()) {
        PrefixMass& dst = next[prefix];
        dst.non_blank = log_add(dst.non_blank, mass.non_blank + log_probs(t, prefix.back()));
      }
      // Extend with a new symbol. Extending with the previous symbol
      // requires an intervening blank, so only blank-ending mass moves.
      for (int k = 0; k < classes; ++k) {
        if (k == blank_id) continue;
        const double base = (!prefix.empty() && k == prefix.back()) ? mass.blank : total;
        if (base == log_zero()) continue;
        double add = log_probs(t, k);
        if (lm) add += lm_weight * lm(prefix, k);
        std::vector<int> extended = prefix;
        extended.push_back(k);
        PrefixMass& dst = next[extended];
        dst.non_blank = log_add(dst.non_blank, base + add);
      }
    }
    // Prune to the beam width.
    std::vector<std::pair<std::vector<int>, double>> scored;
    scored.reserve(next.size());
    for (const auto& [prefix, mass] : next) scored.emplace_back(prefix, mass.total());
    std::sort(scored.begin(), scored.end(), better);
    if (scored.size() > width) scored.resize(width);
    std::map<std::vector<int>, PrefixMass> pruned;
    for (const auto& [prefix, score] : scored) pruned.emplace(prefix, next.at(prefix));
    beam = std::move(pruned);
  }

  std::vector<std::pair<std::vector<int>, double>> final_scored;
  final_scored.reserve(beam.size());
  for (const auto& [prefix, mass] : beam) final_scored.emplace_back(prefix, mass.total());
  std::sort(final_scored.begin(), final_scored.end(), better);

  std::vector<BeamHypothesis> out;
  out.reserve(final_scored.size());
  for (auto& [prefix, score] : final_scored) out.push_back({std::move(prefix), score});
  return out;
}

}  // namespace emg2text::ctc
