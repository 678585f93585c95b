#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advrep/features.hpp"

#include "json.hpp"

namespace advrep {

// Speaker-level stratified k-fold plan. Fold f tests on fold_speakers[f],
// uses fold_speakers[(f+1) % k] as the development fold, and trains on the
// rest.
struct FoldPlan {
  size_t n_folds = 0;
  std::vector<std::vector<uint32_t>> fold_speakers;

  std::vector<uint32_t> test_speakers(size_t fold) const;
  std::vector<uint32_t> dev_speakers(size_t fold) const;
  std::vector<uint32_t> train_speakers(size_t fold) const;
  size_t n_speakers() const;
};

// Per class: seeded shuffle, then round-robin deal onto folds, so per-fold
// class counts differ by at most one.
FoldPlan make_folds(const std::vector<uint8_t>& speaker_labels, size_t k,
                    uint64_t seed);

nlohmann::json fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& j);

// Per-speaker utterance partition for the speaker-ID probe: 60% train, 20%
// dev, 20% test, every speaker present in all three.
struct ProbeSplit {
  std::vector<uint32_t> train_utts, dev_utts, test_utts;
};

ProbeSplit make_probe_split(const FeatureStore& store,
                            const std::vector<uint32_t>& speakers,
                            uint64_t seed);

}  // namespace advrep
