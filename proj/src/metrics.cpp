#include "emg2text/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "emg2text/errors.hpp"
#include "emg2text/rng.hpp"

namespace emg2text::metrics {

namespace {

// Lexicographic DP on (cost asc, substitutions desc). With cost and S
// fixed, I and D are determined by the length difference, so no
// traceback is needed.
template <typename Token>
ErrorReport levenshtein_impl(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  const size_t rows = ref.size() + 1;
  const size_t cols = hyp.size() + 1;
  struct Cell {
    uint64_t cost;
    uint64_t subs;
  };
  std::vector<Cell> prev(cols), cur(cols);
  for (size_t j = 0; j < cols; ++j) prev[j] = {j, 0};
  for (size_t i = 1; i < rows; ++i) {
    cur[0] = {i, 0};
    for (size_t j = 1; j < cols; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell best{prev[j - 1].cost + (match ? 0 : 1), prev[j - 1].subs + (match ? 0 : 1)};
      const Cell del{prev[j].cost + 1, prev[j].subs};
      const Cell ins{cur[j - 1].cost + 1, cur[j - 1].subs};
      for (const Cell& cand : {del, ins}) {
        if (cand.cost < best.cost || (cand.cost == best.cost && cand.subs > best.subs)) best = cand;
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell final = prev[cols - 1];
  ErrorReport report;
  report.reference_length = ref.size();
  report.empty_reference = ref.empty() && !hyp.empty();
  report.substitutions = final.subs;
  // cost = S + I + D and D - I = len(ref) - len(hyp).
  const int64_t len_diff = static_cast<int64_t>(ref.size()) - static_cast<int64_t>(hyp.size());
  const int64_t id_sum = static_cast<int64_t>(final.cost - final.subs);
  report.deletions = static_cast<uint64_t>((id_sum + len_diff) / 2);
  report.insertions = static_cast<uint64_t>((id_sum - len_diff) / 2);
  return report;
}

}  // namespace

ErrorReport levenshtein(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis) {
  return levenshtein_impl(reference, hypothesis);
}

ErrorReport levenshtein_ids(const std::vector<int>& reference, const std::vector<int>& hypothesis) {
  return levenshtein_impl(reference, hypothesis);
}

CorpusRates corpus_rates(const std::vector<std::vector<std::string>>& references,
                         const std::vector<std::vector<std::string>>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ParamError("reference and hypothesis counts differ: " + std::to_string(references.size()) + " vs " +
                     std::to_string(hypotheses.size()));
  CorpusRates rates;
  rates.sentences = references.size();
  double rate_sum = 0.0;
  for (size_t i = 0; i < references.size(); ++i) {
    const ErrorReport rep = levenshtein(references[i], hypotheses[i]);
    rates.total_errors += rep.distance();
    rates.total_reference += rep.reference_length ? rep.reference_length : 1;
    rate_sum += rep.rate();
  }
  rates.pooled = rates.total_reference
                     ? static_cast<double>(rates.total_errors) / static_cast<double>(rates.total_reference)
                     : 0.0;
  rates.per_sentence_mean = rates.sentences ? rate_sum / static_cast<double>(rates.sentences) : 0.0;
  return rates;
}

double chance_rate(int inventory_size, const std::vector<size_t>& reference_lengths, int trials,
                   uint64_t seed) {
  if (trials < 1) throw ParamError("chance rate needs at least one trial");
  if (inventory_size < 1) throw ParamError("inventory size must be >= 1");
  Rng rng(seed);
  double rate_sum = 0.0;
  std::vector<int> ref, hyp;
  for (int trial = 0; trial < trials; ++trial) {
    uint64_t errors = 0, total = 0;
    for (size_t len : reference_lengths) {
      ref.resize(len);
      hyp.resize(len);
      for (size_t i = 0; i < len; ++i) ref[i] = static_cast<int>(rng.next_below(inventory_size));
      for (size_t i = 0; i < len; ++i) hyp[i] = static_cast<int>(rng.next_below(inventory_size));
      const ErrorReport rep = levenshtein_ids(ref, hyp);
      errors += rep.distance();
      total += len ? len : 1;
    }
    rate_sum += total ? static_cast<double>(errors) / static_cast<double>(total) : 0.0;
  }
  return rate_sum / trials;
}

ScalingFit fit_scaling(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw ParamError("scaling fit needs at least two points");
  for (const auto& [n, e] : points)
    if (!(n > 0.0) || !(e > 0.0)) throw ParamError("scaling fit requires positive N and E");

  const double count = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [n, e] : points) {
    const double x = std::log(n), y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = count * sxx - sx * sx;
  if (denom == 0.0) throw ParamError("scaling fit is degenerate: all N equal");
  const double slope = (count * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / count;

  ScalingFit fit;
  fit.points = points;
  fit.beta = -slope;
  fit.alpha = std::exp(intercept);
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_y = sy / count;
  for (const auto& [n, e] : points) {
    const double y = std::log(e);
    const double pred = intercept + slope * std::log(n);
    ss_res += (y - pred) * (y - pred);
    ss_tot += (y - mean_y) * (y - mean_y);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-24 ? 1.0 : 0.0);
  return fit;
}

double paired_permutation_test(const std::vector<double>& a, const std::vector<double>& b, int permutations,
                               uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw ParamError("paired test requires equal non-empty samples");
  std::vector<double> diff(a.size());
  double observed = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
  }
  observed = std::abs(observed / a.size());
  Rng rng(seed);
  int at_least = 0;
  for (int p = 0; p < permutations; ++p) {
    double sum = 0.0;
    for (double d : diff) sum += (rng.next_u64() & 1) ? d : -d;
    if (std::abs(sum / a.size()) >= observed - 1e-15) ++at_least;
  }
  return (at_least + 1.0) / (permutations + 1.0);
}

}  // namespace emg2text::metrics
