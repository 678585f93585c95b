#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace advrep {

// Percent correct.
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted half. The
// sweep accumulates sums of 1 and 1/2, which double represents exactly, so
// it agrees bit-for-bit with the quadratic pairwise definition.
double roc_auc_binary(const std::vector<double>& scores,
                      const std::vector<int>& labels);

// Macro one-vs-rest average over the classes present with both positives and
// negatives in the evaluation set. scores is [N][K] row-major.
double multiclass_auc(const std::vector<double>& scores, size_t n, size_t k,
                      const std::vector<int>& labels);

struct SoftVote {
  int pred = 0;
  double score = 0.0;  // mean probability of class 1
  std::vector<double> mean_probs;
};

// Mean of per-chunk probability vectors, argmax with lowest-index tie-break.
SoftVote soft_vote(const std::vector<double>& chunk_probs, size_t k);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population (divisor n)
};

Aggregate aggregate(const std::vector<double>& values);

// "%.2f ± %.2f"
std::string format_mean_std(const Aggregate& a);

}  // namespace advrep
