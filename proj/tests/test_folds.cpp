#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <vector>

#include "advrep/common.hpp"
#include "advrep/folds.hpp"
#include "advrep/rng.hpp"

using namespace advrep;

namespace {

std::vector<uint8_t> labels_for(size_t n0, size_t n1) {
  std::vector<uint8_t> labels(n0, 0);
  labels.insert(labels.end(), n1, 1);
  return labels;
}

// A store with utterance bookkeeping only; probe splits never read chunks.
FeatureStore utterance_store(const std::vector<size_t>& utts_per_speaker) {
  FeatureStore store;
  for (size_t s = 0; s < utts_per_speaker.size(); ++s) {
    store.speakers.push_back("s" + std::to_string(s));
    store.speaker_label.push_back(0);
    for (size_t u = 0; u < utts_per_speaker[s]; ++u) {
      store.utterances.push_back("u" + std::to_string(u));
      store.utterance_speaker.push_back(static_cast<uint32_t>(s));
    }
  }
  return store;
}

}  // namespace

TEST_CASE("fold invariants hold for 100 seeds") {
  const auto labels = labels_for(10, 10);
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    const FoldPlan plan = make_folds(labels, 5, seed);
    REQUIRE(plan.n_folds == 5);
    REQUIRE(plan.fold_speakers.size() == 5);

    // Partition: every speaker in exactly one fold.
    std::set<uint32_t> seen;
    for (const auto& f : plan.fold_speakers)
      for (uint32_t s : f) CHECK(seen.insert(s).second);
    CHECK(seen.size() == labels.size());

    for (size_t f = 0; f < 5; ++f) {
      // Stratification: per-fold class counts differ by at most one.
      size_t c0 = 0, c1 = 0;
      for (uint32_t s : plan.fold_speakers[f]) (labels[s] ? c1 : c0)++;
      CHECK(c0 == 2);
      CHECK(c1 == 2);

      // Dev fold is the next fold; train is everything else; the three
      // parts are disjoint and cover all speakers.
      const auto test = plan.test_speakers(f);
      const auto dev = plan.dev_speakers(f);
      const auto train = plan.train_speakers(f);
      CHECK(test == plan.fold_speakers[f]);
      CHECK(dev == plan.fold_speakers[(f + 1) % 5]);
      CHECK(test.size() + dev.size() + train.size() == labels.size());
      std::set<uint32_t> all(test.begin(), test.end());
      for (uint32_t s : dev) CHECK(all.insert(s).second);
      for (uint32_t s : train) CHECK(all.insert(s).second);
      CHECK(all.size() == labels.size());
    }
  }
}

TEST_CASE("uneven classes stay within one speaker per fold") {
  const auto labels = labels_for(7, 11);
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    const FoldPlan plan = make_folds(labels, 3, seed);
    std::vector<size_t> c0(3), c1(3);
    for (size_t f = 0; f < 3; ++f)
      for (uint32_t s : plan.fold_speakers[f]) (labels[s] ? c1[f] : c0[f])++;
    const auto [min0, max0] = std::minmax_element(c0.begin(), c0.end());
    const auto [min1, max1] = std::minmax_element(c1.begin(), c1.end());
    CHECK(*max0 - *min0 <= 1);
    CHECK(*max1 - *min1 <= 1);
  }
}

TEST_CASE("fold plans are seed deterministic") {
  const auto labels = labels_for(10, 10);
  const FoldPlan a = make_folds(labels, 5, 7);
  const FoldPlan b = make_folds(labels, 5, 7);
  const FoldPlan c = make_folds(labels, 5, 8);
  CHECK(a.fold_speakers == b.fold_speakers);
  CHECK(a.fold_speakers != c.fold_speakers);
}

TEST_CASE("fold construction rejects unusable configurations") {
  CHECK_THROWS_AS(make_folds(labels_for(10, 10), 2, 1), ConfigError);
  CHECK_THROWS_AS(make_folds(labels_for(2, 10), 3, 1), ConfigError);
  CHECK_THROWS_AS(make_folds(labels_for(10, 4), 5, 1), ConfigError);
  CHECK_THROWS_AS(make_folds({0, 1, 2}, 3, 1), DataError);
  const FoldPlan plan = make_folds(labels_for(5, 5), 5, 1);
  CHECK_THROWS_AS(plan.test_speakers(5), UsageError);
}

TEST_CASE("fold plan json round-trip") {
  const FoldPlan plan = make_folds(labels_for(8, 7), 4, 3);
  const FoldPlan back = fold_plan_from_json(fold_plan_to_json(plan));
  CHECK(back.n_folds == plan.n_folds);
  CHECK(back.fold_speakers == plan.fold_speakers);

  nlohmann::json bad = fold_plan_to_json(plan);
  bad["fold_speakers"].erase(0);
  CHECK_THROWS_AS(fold_plan_from_json(bad), DataError);
  CHECK_THROWS_AS(fold_plan_from_json(nlohmann::json::object()), DataError);
}

TEST_CASE("probe split invariants over 100 seeds") {
  const FeatureStore store = utterance_store({6, 6, 5, 10, 3});
  const std::vector<uint32_t> speakers = {0, 1, 2, 3, 4};
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    const ProbeSplit split = make_probe_split(store, speakers, seed);

    // No utterance appears twice and the parts cover every utterance of the
    // given speakers.
    std::set<uint32_t> seen;
    for (uint32_t u : split.train_utts) CHECK(seen.insert(u).second);
    for (uint32_t u : split.dev_utts) CHECK(seen.insert(u).second);
    for (uint32_t u : split.test_utts) CHECK(seen.insert(u).second);
    CHECK(seen.size() == store.utterances.size());

    // Every speaker contributes to every part, with a 60/20/20 shape.
    for (uint32_t spk : speakers) {
      size_t n_tr = 0, n_de = 0, n_te = 0, n_all = 0;
      for (uint32_t u : split.train_utts)
        if (store.utterance_speaker[u] == spk) ++n_tr;
      for (uint32_t u : split.dev_utts)
        if (store.utterance_speaker[u] == spk) ++n_de;
      for (uint32_t u : split.test_utts)
        if (store.utterance_speaker[u] == spk) ++n_te;
      for (uint32_t s : store.utterance_speaker)
        if (s == spk) ++n_all;
      CHECK(n_de == std::max<size_t>(1, n_all / 5));
      CHECK(n_te == std::max<size_t>(1, n_all / 5));
      CHECK(n_tr == n_all - n_de - n_te);
      CHECK(n_tr >= 1);
    }
  }
}

TEST_CASE("probe split is deterministic and speaker scoped") {
  const FeatureStore store = utterance_store({6, 6, 6});
  const ProbeSplit a = make_probe_split(store, {0, 1, 2}, 9);
  const ProbeSplit b = make_probe_split(store, {0, 1, 2}, 9);
  CHECK(a.train_utts == b.train_utts);
  CHECK(a.dev_utts == b.dev_utts);
  CHECK(a.test_utts == b.test_utts);

  // Restricting the speaker set leaves the other speakers' utterances out.
  const ProbeSplit c = make_probe_split(store, {1}, 9);
  for (uint32_t u : c.train_utts) CHECK(store.utterance_speaker[u] == 1);
  CHECK(c.train_utts.size() + c.dev_utts.size() + c.test_utts.size() == 6);
}

TEST_CASE("probe split needs three utterances per speaker") {
  const FeatureStore store = utterance_store({6, 2});
  CHECK_THROWS_AS(make_probe_split(store, {0, 1}, 1), DataError);
  CHECK_NOTHROW(make_probe_split(store, {0}, 1));
}
