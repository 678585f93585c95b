#include "advrep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "advrep/common.hpp"
#include "advrep/log.hpp"

namespace advrep {

double accuracy(const std::vector<int>& preds,
                const std::vector<int>& labels) {
  ADVREP_REQUIRE(!preds.empty(), DataError, "accuracy on empty input");
  ADVREP_REQUIRE(preds.size() == labels.size(), DataError,
                 "accuracy size mismatch: ", preds.size(), " vs ",
                 labels.size());
  size_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(preds.size());
}

double roc_auc_binary(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  ADVREP_REQUIRE(scores.size() == labels.size(), DataError,
                 "auc size mismatch");
  size_t pos = 0, neg = 0;
  for (int y : labels) {
    ADVREP_REQUIRE(y == 0 || y == 1, DataError, "auc labels must be 0/1");
    (y == 1 ? pos : neg) += 1;
  }
  ADVREP_REQUIRE(pos > 0 && neg > 0, DataError,
                 "auc undefined with a single class (", pos, " positive, ",
                 neg, " negative)");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores[a] < scores[b];
  });

  double num = 0.0;
  size_t neg_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    size_t p_here = 0, n_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? p_here : n_here) += 1;
      ++j;
    }
    num += static_cast<double>(p_here) * static_cast<double>(neg_below) +
           0.5 * static_cast<double>(p_here) * static_cast<double>(n_here);
    neg_below += n_here;
    i = j;
  }
  return num / (static_cast<double>(pos) * static_cast<double>(neg));
}

double multiclass_auc(const std::vector<double>& scores, size_t n, size_t k,
                      const std::vector<int>& labels) {
  ADVREP_REQUIRE(scores.size() == n * k, DataError,
                 "score matrix size mismatch");
  ADVREP_REQUIRE(labels.size() == n, DataError, "label count mismatch");
  std::vector<size_t> count(k, 0);
  for (int y : labels) {
    ADVREP_REQUIRE(y >= 0 && static_cast<size_t>(y) < k, DataError,
                   "label ", y, " outside [0,", k, ")");
    ++count[static_cast<size_t>(y)];
  }
  size_t present = 0;
  for (size_t c = 0; c < k; ++c)
    if (count[c] > 0) ++present;
  ADVREP_REQUIRE(present >= 2, DataError,
                 "multiclass auc needs at least 2 classes present");

  double total = 0.0;
  size_t used = 0;
  for (size_t c = 0; c < k; ++c) {
    if (count[c] == 0 || count[c] == n) {
      LOG_DEBUG("multiclass_auc: class %zu skipped (%zu of %zu samples)", c,
                count[c], n);
      continue;
    }
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = scores[i * k + c];
      y[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    total += roc_auc_binary(s, y);
    ++used;
  }
  ADVREP_CHECK(used > 0, "no usable classes for multiclass auc");
  return total / static_cast<double>(used);
}

SoftVote soft_vote(const std::vector<double>& chunk_probs, size_t k) {
  ADVREP_REQUIRE(k >= 2, ConfigError, "soft_vote needs at least 2 classes");
  ADVREP_REQUIRE(!chunk_probs.empty() && chunk_probs.size() % k == 0,
                 DataError, "soft_vote input is not a multiple of ", k);
  const size_t n = chunk_probs.size() / k;
  SoftVote v;
  v.mean_probs.assign(k, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t c = 0; c < k; ++c) v.mean_probs[c] += chunk_probs[i * k + c];
  for (size_t c = 0; c < k; ++c)
    v.mean_probs[c] /= static_cast<double>(n);
  v.pred = 0;
  for (size_t c = 1; c < k; ++c)
    if (v.mean_probs[c] > v.mean_probs[static_cast<size_t>(v.pred)])
      v.pred = static_cast<int>(c);
  v.score = v.mean_probs[1];
  return v;
}

Aggregate aggregate(const std::vector<double>& values) {
  ADVREP_REQUIRE(!values.empty(), DataError, "aggregate of nothing");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) {
    const double d = v - a.mean;
    var += d * d;
  }
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return a;
}

std::string format_mean_std(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", a.mean, a.stddev);
  return buf;
}

}  // namespace advrep
