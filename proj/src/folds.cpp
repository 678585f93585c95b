#include "advrep/folds.hpp"

#include <algorithm>

#include "advrep/common.hpp"
#include "advrep/rng.hpp"

namespace advrep {

std::vector<uint32_t> FoldPlan::test_speakers(size_t fold) const {
  ADVREP_REQUIRE(fold < n_folds, UsageError, "fold ", fold, " out of range");
  return fold_speakers[fold];
}

std::vector<uint32_t> FoldPlan::dev_speakers(size_t fold) const {
  ADVREP_REQUIRE(fold < n_folds, UsageError, "fold ", fold, " out of range");
  return fold_speakers[(fold + 1) % n_folds];
}

std::vector<uint32_t> FoldPlan::train_speakers(size_t fold) const {
  ADVREP_REQUIRE(fold < n_folds, UsageError, "fold ", fold, " out of range");
  std::vector<uint32_t> out;
  for (size_t f = 0; f < n_folds; ++f) {
    if (f == fold || f == (fold + 1) % n_folds) continue;
    out.insert(out.end(), fold_speakers[f].begin(), fold_speakers[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

size_t FoldPlan::n_speakers() const {
  size_t n = 0;
  for (const auto& f : fold_speakers) n += f.size();
  return n;
}

FoldPlan make_folds(const std::vector<uint8_t>& speaker_labels, size_t k,
                    uint64_t seed) {
  ADVREP_REQUIRE(k >= 3, ConfigError,
                 "need at least 3 folds for disjoint train/dev/test");
  std::vector<uint32_t> by_class[2];
  for (size_t s = 0; s < speaker_labels.size(); ++s) {
    ADVREP_REQUIRE(speaker_labels[s] <= 1, DataError, "bad speaker label");
    by_class[speaker_labels[s]].push_back(static_cast<uint32_t>(s));
  }
  ADVREP_REQUIRE(by_class[0].size() >= k && by_class[1].size() >= k,
                 ConfigError, "cannot form ", k,
                 " stratified folds from ", by_class[0].size(), "+",
                 by_class[1].size(), " speakers");

  FoldPlan plan;
  plan.n_folds = k;
  plan.fold_speakers.assign(k, {});
  for (int c = 0; c < 2; ++c) {
    Rng rng = Rng::substream(seed, c == 0 ? "folds.class0" : "folds.class1");
    std::vector<uint32_t> order = by_class[c];
    rng.shuffle(order);
    for (size_t i = 0; i < order.size(); ++i)
      plan.fold_speakers[i % k].push_back(order[i]);
  }
  for (auto& f : plan.fold_speakers) std::sort(f.begin(), f.end());
  return plan;
}

nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : plan.fold_speakers) folds.push_back(f);
  return {{"n_folds", plan.n_folds}, {"fold_speakers", folds}};
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  try {
    plan.n_folds = j.at("n_folds").get<size_t>();
    for (const auto& f : j.at("fold_speakers"))
      plan.fold_speakers.push_back(f.get<std::vector<uint32_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad fold plan: ") + e.what());
  }
  ADVREP_REQUIRE(plan.fold_speakers.size() == plan.n_folds, DataError,
                 "fold plan is inconsistent");
  return plan;
}

ProbeSplit make_probe_split(const FeatureStore& store,
                            const std::vector<uint32_t>& speakers,
                            uint64_t seed) {
  ProbeSplit split;
  for (uint32_t spk : speakers) {
    std::vector<uint32_t> utts;
    for (size_t u = 0; u < store.utterances.size(); ++u)
      if (store.utterance_speaker[u] == spk)
        utts.push_back(static_cast<uint32_t>(u));
    ADVREP_REQUIRE(utts.size() >= 3, DataError, "speaker ",
                   store.speakers[spk],
                   " needs at least 3 utterances for a 60/20/20 split, has ",
                   utts.size());
    Rng rng = Rng::substream(seed, "probe.split", spk);
    rng.shuffle(utts);
    const size_t n = utts.size();
    const size_t n_dev = std::max<size_t>(1, n / 5);
    const size_t n_test = std::max<size_t>(1, n / 5);
    ADVREP_CHECK(n_dev + n_test < n, "probe split leaves no training data");
    for (size_t i = 0; i < n; ++i) {
      if (i < n_dev)
        split.dev_utts.push_back(utts[i]);
      else if (i < n_dev + n_test)
        split.test_utts.push_back(utts[i]);
      else
        split.train_utts.push_back(utts[i]);
    }
  }
  return split;
}

}  // namespace advrep
