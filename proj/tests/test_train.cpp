#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "advrep/checkpoint.hpp"
#include "advrep/common.hpp"
#include "advrep/rng.hpp"
#include "advrep/train.hpp"

using namespace advrep;

namespace {

// 18x17 inputs through a two-stage model keep each fit under a second.
ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.input_h = 18;
  cfg.input_w = 17;
  cfg.conv_maps = {2, 3};
  cfg.fc_hidden = 8;
  cfg.bottleneck = 6;
  cfg.head_hidden = 5;
  return cfg;
}

// n_speakers x 2 utterances x 3 chunks of smooth random data, speakers
// alternating neurotypical / pathological.
FeatureStore tiny_store(size_t n_speakers, uint64_t seed) {
  FeatureStore store;
  store.mel = 18;
  store.frames = 17;
  Rng rng(seed);
  for (size_t s = 0; s < n_speakers; ++s) {
    store.speakers.push_back("s" + std::to_string(s));
    store.speaker_label.push_back(static_cast<uint8_t>(s % 2));
    for (size_t u = 0; u < 2; ++u) {
      const uint32_t utt = static_cast<uint32_t>(store.utterances.size());
      store.utterances.push_back("u" + std::to_string(u));
      store.utterance_speaker.push_back(static_cast<uint32_t>(s));
      for (size_t c = 0; c < 3; ++c) {
        FeatureStore::Chunk ch;
        ch.speaker = static_cast<uint32_t>(s);
        ch.label = store.speaker_label[s];
        ch.utterance = utt;
        ch.chunk_index = static_cast<uint32_t>(c);
        store.chunks.push_back(ch);
        for (size_t i = 0; i < store.chunk_size(); ++i)
          store.data.push_back(static_cast<float>(rng.normal()));
      }
    }
  }
  return store;
}

std::vector<uint32_t> all_chunks(const FeatureStore& store) {
  std::vector<uint32_t> out(store.chunks.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<uint32_t>(i);
  return out;
}

TrainConfig tiny_config(Regime regime, uint64_t seed) {
  TrainConfig cfg;
  cfg.regime = regime;
  cfg.batch_size = 8;
  cfg.max_epochs = 2;
  cfg.seed = seed;
  cfg.model = tiny_model();
  return cfg;
}

std::string tmp_path(const std::string& leaf) {
  const std::string d = std::string(ADVREP_TEST_TMP) + "/train";
  std::filesystem::create_directories(d);
  return d + "/" + leaf;
}

}  // namespace

TEST_CASE("regime names round-trip") {
  for (Regime r : {Regime::kBaseline, Regime::kAdversarial,
                   Regime::kDiscriminative, Regime::kFusion})
    CHECK(regime_from_string(regime_to_string(r)) == r);
  CHECK_THROWS_AS(regime_from_string("adversarial "), UsageError);
}

TEST_CASE("config validation enforces per-regime weight rules") {
  TrainConfig cfg = tiny_config(Regime::kBaseline, 1);
  CHECK_NOTHROW(validate_train_config(cfg));
  cfg.lambda = 0.1;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);

  cfg = tiny_config(Regime::kAdversarial, 1);
  cfg.lambda = 0.0;  // collapse to baseline is allowed
  CHECK_NOTHROW(validate_train_config(cfg));
  cfg.alpha = 0.1;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);

  cfg = tiny_config(Regime::kDiscriminative, 1);
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);  // alpha = 0
  cfg.alpha = 0.05;
  CHECK_NOTHROW(validate_train_config(cfg));

  cfg = tiny_config(Regime::kFusion, 1);
  cfg.alpha = 0.6;
  cfg.lambda = 0.5;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);  // sum >= 1
  cfg.lambda = 0.3;
  CHECK_NOTHROW(validate_train_config(cfg));

  cfg = tiny_config(Regime::kBaseline, 1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
  cfg = tiny_config(Regime::kBaseline, 1);
  cfg.alpha = -0.1;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
}

TEST_CASE("objective weights per regime") {
  TrainConfig cfg = tiny_config(Regime::kBaseline, 1);
  RegimeWeights w = regime_weights(cfg);
  CHECK(w.ae == 1.0);
  CHECK(w.pc == 0.0);
  CHECK(w.id == 0.0);

  cfg = tiny_config(Regime::kAdversarial, 1);
  cfg.lambda = 0.05;
  w = regime_weights(cfg);
  CHECK(w.ae == doctest::Approx(0.95));
  CHECK(w.id == 0.05);

  cfg = tiny_config(Regime::kDiscriminative, 1);
  cfg.alpha = 0.03;
  w = regime_weights(cfg);
  CHECK(w.ae == doctest::Approx(0.97));
  CHECK(w.pc == 0.03);

  cfg = tiny_config(Regime::kFusion, 1);
  cfg.alpha = 0.03;
  cfg.lambda = 0.05;
  w = regime_weights(cfg);
  CHECK(w.ae == doctest::Approx(0.92));
  CHECK(w.pc == 0.03);
  CHECK(w.id == 0.05);
}

TEST_CASE("dev monitor excludes the adversarial term") {
  TrainConfig cfg = tiny_config(Regime::kAdversarial, 1);
  cfg.lambda = 0.4;
  CHECK(dev_monitor_value(cfg, 2.0, 9.0) == 2.0);

  cfg = tiny_config(Regime::kDiscriminative, 1);
  cfg.alpha = 0.25;
  CHECK(dev_monitor_value(cfg, 2.0, 4.0) == doctest::Approx(2.5));

  cfg = tiny_config(Regime::kFusion, 1);
  cfg.alpha = 0.25;
  cfg.lambda = 0.25;
  CHECK(dev_monitor_value(cfg, 2.0, 4.0) == doctest::Approx(2.0));
}

TEST_CASE("train config json round-trip") {
  TrainConfig cfg = tiny_config(Regime::kFusion, 42);
  cfg.alpha = 0.03;
  cfg.lambda = 0.07;
  cfg.max_chunks_per_utterance = 2;
  const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.regime == cfg.regime);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.seed == 42);
  CHECK(back.max_chunks_per_utterance == 2);
  CHECK(back.model.input_h == cfg.model.input_h);
  CHECK(back.model.conv_maps == cfg.model.conv_maps);
  CHECK(back.model.bottleneck == cfg.model.bottleneck);
}

TEST_CASE("lr schedule halves on flat monitors and stops below the floor") {
  LrSchedule sched(0.02, 5, 0.002);
  sched.init_best(1.0);
  std::vector<size_t> halved_at;
  for (size_t epoch = 1; epoch <= 100 && !sched.stopped(); ++epoch)
    if (sched.observe(1.0)) halved_at.push_back(epoch);
  CHECK(halved_at == std::vector<size_t>{5, 10, 15, 20});
  CHECK(sched.lr() == doctest::Approx(0.00125));
  CHECK(sched.stopped());
}

TEST_CASE("lr schedule never halves while the monitor improves") {
  LrSchedule sched(0.02, 5, 0.002);
  sched.init_best(100.0);
  for (size_t epoch = 1; epoch <= 100; ++epoch) {
    CHECK(!sched.observe(100.0 - static_cast<double>(epoch)));
    CHECK(!sched.stopped());
  }
  CHECK(sched.lr() == 0.02);
  CHECK(sched.halvings() == 0);
}

TEST_CASE("lr schedule resets its counter on improvement and equal values do not count") {
  LrSchedule sched(0.02, 5, 0.002);
  sched.init_best(1.0);
  // 4 flat epochs, then an improvement, then 5 more flat ones.
  for (int i = 0; i < 4; ++i) CHECK(!sched.observe(1.0));
  CHECK(!sched.observe(0.9));
  CHECK(sched.counter() == 0);
  for (int i = 0; i < 4; ++i) CHECK(!sched.observe(0.9));  // ties, no reset
  CHECK(sched.observe(0.9));  // fifth non-improving epoch halves
  CHECK(sched.lr() == doctest::Approx(0.01));
}

TEST_CASE("chunk selection helpers filter and cap") {
  const FeatureStore store = tiny_store(4, 1);
  const auto spk = chunks_of_speakers(store, {1, 3}, 0);
  CHECK(spk.size() == 12);  // 2 speakers x 2 utts x 3 chunks
  for (uint32_t c : spk) {
    CHECK((store.chunks[c].speaker == 1 || store.chunks[c].speaker == 3));
  }
  CHECK(chunks_of_speakers(store, {1, 3}, 2).size() == 8);
  CHECK(chunks_of_speakers(store, {}, 0).empty());

  const auto utts = chunks_of_utterances(store, {0, 5}, 0);
  CHECK(utts.size() == 6);
  for (uint32_t c : utts) {
    CHECK((store.chunks[c].utterance == 0 || store.chunks[c].utterance == 5));
  }
  CHECK(chunks_of_utterances(store, {0, 5}, 1).size() == 2);
}

TEST_CASE("leakage audit names the offending context") {
  const FeatureStore store = tiny_store(4, 1);
  const auto chunks = chunks_of_speakers(store, {0, 1}, 0);
  CHECK_NOTHROW(audit_no_leakage(store, chunks, {2, 3}, "rep train"));
  try {
    audit_no_leakage(store, chunks, {1}, "rep train");
    FAIL("expected InternalError");
  } catch (const InternalError& e) {
    CHECK(std::string(e.what()).find("rep train") != std::string::npos);
  }
}

TEST_CASE("adversarial training with lambda 0 matches baseline bit for bit") {
  const FeatureStore store = tiny_store(4, 3);
  const auto chunks = all_chunks(store);
  // Speaker stream: chunks of speakers 0 and 1 with labels 0 and 1.
  std::vector<uint32_t> spk_chunks = chunks_of_speakers(store, {0, 1}, 0);
  std::vector<int> spk_labels;
  for (uint32_t c : spk_chunks)
    spk_labels.push_back(static_cast<int>(store.chunks[c].speaker));

  TrainConfig base_cfg = tiny_config(Regime::kBaseline, 123);
  Trainer base(base_cfg, 2);
  TrainConfig adv_cfg = tiny_config(Regime::kAdversarial, 123);
  adv_cfg.lambda = 0.0;
  Trainer adv(adv_cfg, 2);

  // Identical initialization of the shared components.
  CHECK(base.params().checksum(ParamGroup::kEncoder) ==
        adv.params().checksum(ParamGroup::kEncoder));
  CHECK(base.params().checksum(ParamGroup::kDecoder) ==
        adv.params().checksum(ParamGroup::kDecoder));

  std::vector<uint64_t> base_traj, adv_traj;
  base.on_epoch = [&](size_t) {
    base_traj.push_back(base.params().checksum(ParamGroup::kEncoder));
    base_traj.push_back(base.params().checksum(ParamGroup::kDecoder));
  };
  adv.on_epoch = [&](size_t) {
    adv_traj.push_back(adv.params().checksum(ParamGroup::kEncoder));
    adv_traj.push_back(adv.params().checksum(ParamGroup::kDecoder));
  };

  const uint64_t spk_before = adv.params().checksum(ParamGroup::kSpkHead);
  base.fit(store, chunks, chunks, {}, {});
  adv.fit(store, chunks, chunks, spk_chunks, spk_labels);

  REQUIRE(base_traj.size() == adv_traj.size());
  CHECK(base_traj == adv_traj);
  // The id head still trains in its own step even at lambda 0.
  CHECK(adv.params().checksum(ParamGroup::kSpkHead) != spk_before);
}

TEST_CASE("adversarial training with positive lambda diverges from baseline") {
  const FeatureStore store = tiny_store(4, 3);
  const auto chunks = all_chunks(store);
  std::vector<uint32_t> spk_chunks = chunks_of_speakers(store, {0, 1}, 0);
  std::vector<int> spk_labels;
  for (uint32_t c : spk_chunks)
    spk_labels.push_back(static_cast<int>(store.chunks[c].speaker));

  Trainer base(tiny_config(Regime::kBaseline, 123), 2);
  TrainConfig adv_cfg = tiny_config(Regime::kAdversarial, 123);
  adv_cfg.lambda = 0.3;
  Trainer adv(adv_cfg, 2);
  base.fit(store, chunks, chunks, {}, {});
  adv.fit(store, chunks, chunks, spk_chunks, spk_labels);
  CHECK(base.params().checksum(ParamGroup::kEncoder) !=
        adv.params().checksum(ParamGroup::kEncoder));
}

TEST_CASE("training runs are seed deterministic") {
  const FeatureStore store = tiny_store(4, 5);
  const auto chunks = all_chunks(store);
  auto run = [&](uint64_t seed) {
    Trainer t(tiny_config(Regime::kBaseline, seed), 2);
    t.fit(store, chunks, chunks, {}, {});
    return t.params().checksum();
  };
  CHECK(run(9) == run(9));
  CHECK(run(9) != run(10));
}

TEST_CASE("fit reports epochs and tracks the best monitor") {
  const FeatureStore store = tiny_store(4, 7);
  const auto chunks = all_chunks(store);
  TrainConfig cfg = tiny_config(Regime::kBaseline, 11);
  cfg.max_epochs = 4;
  Trainer t(cfg, 2);
  const TrainResult res = t.fit(store, chunks, chunks, {}, {});

  REQUIRE(res.reports.size() == 5);  // epoch 0 evaluation plus 4 epochs
  CHECK(!res.reports[0].has_train);
  CHECK(res.reports[0].epoch == 0);
  for (size_t e = 1; e < res.reports.size(); ++e) {
    CHECK(res.reports[e].has_train);
    CHECK(res.reports[e].epoch == e);
    CHECK(res.reports[e].lr == 0.02);
  }
  CHECK(res.epochs_run == 4);
  double best = res.reports[0].dev_monitor;
  for (const auto& r : res.reports) best = std::min(best, r.dev_monitor);
  CHECK(res.best_monitor == best);
  CHECK(res.best_epoch <= 4);

  // Reconstruction on random-noise features still improves from epoch 0.
  CHECK(res.reports.back().dev_monitor < res.reports[0].dev_monitor);
}

TEST_CASE("restore_best rewinds to the best-epoch parameters") {
  const FeatureStore store = tiny_store(4, 13);
  const auto chunks = all_chunks(store);
  TrainConfig cfg = tiny_config(Regime::kBaseline, 17);
  cfg.max_epochs = 3;
  Trainer t(cfg, 2);

  std::vector<uint64_t> epoch_checksums;  // checksum after each epoch
  t.on_epoch = [&](size_t) { epoch_checksums.push_back(t.params().checksum()); };
  const TrainResult res = t.fit(store, chunks, chunks, {}, {});
  t.restore_best();
  if (res.best_epoch == 0) return;  // snapshot of the init state, not hooked
  CHECK(t.params().checksum() == epoch_checksums[res.best_epoch - 1]);
}

TEST_CASE("bottlenecks are deterministic eval-mode features") {
  const FeatureStore store = tiny_store(4, 19);
  const auto chunks = all_chunks(store);
  TrainConfig cfg = tiny_config(Regime::kBaseline, 23);
  Trainer t(cfg, 2);
  t.fit(store, chunks, chunks, {}, {});

  const auto za = t.bottlenecks(store, chunks);
  const auto zb = t.bottlenecks(store, chunks, 5);  // batch size must not matter
  CHECK(za.size() == chunks.size() * cfg.model.bottleneck);
  CHECK(za == zb);
}

TEST_CASE("save_run writes config, epoch log and checkpoints") {
  const FeatureStore store = tiny_store(4, 29);
  const auto chunks = all_chunks(store);
  TrainConfig cfg = tiny_config(Regime::kBaseline, 31);
  Trainer t(cfg, 2);
  const TrainResult res = t.fit(store, chunks, chunks, {}, {});
  const std::string dir = tmp_path("run");
  std::filesystem::remove_all(dir);
  t.save_run(dir, res);

  CHECK(std::filesystem::exists(dir + "/config.json"));
  CHECK(std::filesystem::exists(dir + "/epochs.csv"));
  const Checkpoint best = load_checkpoint(dir + "/best.ckpt");
  const Checkpoint final = load_checkpoint(dir + "/final.ckpt");
  CHECK(best.master_seed == 31);
  CHECK(best.epoch == res.best_epoch);
  CHECK(final.epoch == res.epochs_run);
  CHECK(best.entries.size() == t.params().entries().size());

  // The best checkpoint restores into a fresh trainer of the same shape.
  Trainer fresh(cfg, 2);
  checkpoint_to_params(best, fresh.params());
  t.restore_best();
  CHECK(fresh.params().checksum() == t.params().checksum());
}

TEST_CASE("head trainer separates blob features and normalizes probabilities") {
  const ModelConfig model = tiny_model();
  const size_t dim = model.bottleneck;
  Rng rng(41);
  const size_t n = 60;
  std::vector<float> feats(n * dim);
  std::vector<int> labels(n);
  std::vector<uint32_t> train_idx, dev_idx;
  for (size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 3);
    for (size_t d = 0; d < dim; ++d)
      feats[i * dim + d] = static_cast<float>(
          (d % 3 == static_cast<size_t>(labels[i]) ? 2.0 : -1.0) +
          0.1 * rng.normal());
    (i % 5 == 4 ? dev_idx : train_idx).push_back(static_cast<uint32_t>(i));
  }

  HeadTrainer head(model, 3, 7, "test.head");
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 40;
  cfg.seed = 7;
  cfg.model = model;
  head.fit(feats, labels, train_idx, dev_idx, cfg);

  std::vector<uint32_t> all_idx(n);
  for (size_t i = 0; i < n; ++i) all_idx[i] = static_cast<uint32_t>(i);
  const auto probs = head.predict_probs(feats, all_idx);
  REQUIRE(probs.size() == n * 3);
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    size_t arg = 0;
    for (size_t k = 0; k < 3; ++k) {
      sum += probs[i * 3 + k];
      if (probs[i * 3 + k] > probs[i * 3 + arg]) arg = k;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    if (static_cast<int>(arg) == labels[i]) ++correct;
  }
  CHECK(correct >= n - 1);  // cleanly separable blobs

  CHECK(head.predict_probs(feats, all_idx) == probs);  // eval is deterministic
}

TEST_CASE("recenter_bias centers dev log-odds and keeps the ranking") {
  const ModelConfig model = tiny_model();
  const size_t dim = model.bottleneck;
  Rng rng(53);
  const size_t n = 90;
  std::vector<float> feats(n * dim);
  std::vector<int> labels(n);
  std::vector<uint32_t> train_idx, dev_idx;
  for (size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    const bool dev = i % 5 == 4;
    for (size_t d = 0; d < dim; ++d) {
      double v = (d % 2 == static_cast<size_t>(labels[i]) ? 0.6 : -0.6) +
                 0.15 * rng.normal();
      if (dev) v += 0.8;  // block shift, as an unseen-speaker drift would be
      feats[i * dim + d] = static_cast<float>(v);
    }
    (dev ? dev_idx : train_idx).push_back(static_cast<uint32_t>(i));
  }

  HeadTrainer head(model, 2, 5, "test.recenter");
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_epochs = 30;
  cfg.seed = 5;
  cfg.model = model;
  head.fit(feats, labels, train_idx, dev_idx, cfg);

  auto log_odds = [&](const std::vector<uint32_t>& idx) {
    const auto p = head.predict_probs(feats, idx);
    std::vector<double> lo(idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
      lo[i] = std::log(p[i * 2 + 1] / p[i * 2]);
    return lo;
  };
  const auto before = log_odds(dev_idx);
  head.recenter_bias(feats, labels, dev_idx);
  const auto after = log_odds(dev_idx);

  double mean[2] = {0.0, 0.0};
  size_t cnt[2] = {0, 0};
  for (size_t i = 0; i < dev_idx.size(); ++i) {
    mean[labels[dev_idx[i]]] += after[i];
    ++cnt[labels[dev_idx[i]]];
  }
  REQUIRE(cnt[0] > 0);
  REQUIRE(cnt[1] > 0);
  const double mid = 0.5 * (mean[0] / static_cast<double>(cnt[0]) +
                            mean[1] / static_cast<double>(cnt[1]));
  CHECK(std::abs(mid) < 1e-3);  // class means straddle zero now

  for (size_t i = 1; i < after.size(); ++i)  // pure shift: gaps unchanged
    CHECK(after[i] - after[0] ==
          doctest::Approx(before[i] - before[0]).epsilon(2e-3));
}
