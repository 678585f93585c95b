#include "advrep/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "advrep/checkpoint.hpp"
#include "advrep/common.hpp"
#include "advrep/log.hpp"
#include "advrep/ops.hpp"
#include "advrep/rng.hpp"

namespace advrep {

Regime regime_from_string(const std::string& s) {
  if (s == "baseline") return Regime::kBaseline;
  if (s == "adversarial") return Regime::kAdversarial;
  if (s == "discriminative") return Regime::kDiscriminative;
  if (s == "fusion") return Regime::kFusion;
  throw UsageError("unknown regime '" + s +
                   "' (baseline|adversarial|discriminative|fusion)");
}

const char* regime_to_string(Regime r) {
  switch (r) {
    case Regime::kBaseline: return "baseline";
    case Regime::kAdversarial: return "adversarial";
    case Regime::kDiscriminative: return "discriminative";
    case Regime::kFusion: return "fusion";
  }
  return "?";
}

void validate_train_config(const TrainConfig& cfg) {
  ADVREP_REQUIRE(cfg.batch_size > 0, ConfigError, "batch_size must be > 0");
  ADVREP_REQUIRE(cfg.lr0 > 0.0, ConfigError, "lr0 must be > 0");
  ADVREP_REQUIRE(cfg.max_epochs >= 1, ConfigError, "max_epochs must be >= 1");
  ADVREP_REQUIRE(cfg.lr_patience >= 1, ConfigError,
                 "lr_patience must be >= 1");
  ADVREP_REQUIRE(cfg.alpha >= 0.0 && cfg.lambda >= 0.0, ConfigError,
                 "alpha and lambda must be non-negative");
  switch (cfg.regime) {
    case Regime::kBaseline:
      ADVREP_REQUIRE(cfg.alpha == 0.0 && cfg.lambda == 0.0, ConfigError,
                     "baseline takes neither alpha nor lambda");
      break;
    case Regime::kAdversarial:
      ADVREP_REQUIRE(cfg.alpha == 0.0, ConfigError,
                     "adversarial takes no alpha");
      ADVREP_REQUIRE(cfg.lambda < 1.0, ConfigError,
                     "adversarial needs lambda < 1");
      break;
    case Regime::kDiscriminative:
      ADVREP_REQUIRE(cfg.lambda == 0.0, ConfigError,
                     "discriminative takes no lambda");
      ADVREP_REQUIRE(cfg.alpha > 0.0 && cfg.alpha <= 1.0, ConfigError,
                     "discriminative needs alpha in (0,1]");
      break;
    case Regime::kFusion:
      ADVREP_REQUIRE(cfg.alpha > 0.0 && cfg.lambda > 0.0, ConfigError,
                     "fusion needs both alpha and lambda positive");
      ADVREP_REQUIRE(cfg.alpha + cfg.lambda < 1.0, ConfigError,
                     "fusion needs alpha + lambda < 1, got ",
                     cfg.alpha + cfg.lambda);
      break;
  }
}

RegimeWeights regime_weights(const TrainConfig& cfg) {
  RegimeWeights w;
  switch (cfg.regime) {
    case Regime::kBaseline:
      break;
    case Regime::kAdversarial:
      w.ae = 1.0 - cfg.lambda;
      w.id = cfg.lambda;
      break;
    case Regime::kDiscriminative:
      w.ae = 1.0 - cfg.alpha;
      w.pc = cfg.alpha;
      break;
    case Regime::kFusion:
      w.ae = 1.0 - cfg.alpha - cfg.lambda;
      w.pc = cfg.alpha;
      w.id = cfg.lambda;
      break;
  }
  return w;
}

double dev_monitor_value(const TrainConfig& cfg, double l_ae, double l_pc) {
  switch (cfg.regime) {
    case Regime::kBaseline:
    case Regime::kAdversarial:
      return l_ae;
    case Regime::kDiscriminative:
      return (1.0 - cfg.alpha) * l_ae + cfg.alpha * l_pc;
    case Regime::kFusion:
      return (1.0 - cfg.alpha - cfg.lambda) * l_ae + cfg.alpha * l_pc;
  }
  return l_ae;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"regime", regime_to_string(cfg.regime)},
          {"alpha", cfg.alpha},
          {"lambda", cfg.lambda},
          {"batch_size", cfg.batch_size},
          {"lr0", cfg.lr0},
          {"lr_patience", cfg.lr_patience},
          {"lr_floor", cfg.lr_floor},
          {"max_epochs", cfg.max_epochs},
          {"seed", cfg.seed},
          {"max_chunks_per_utterance", cfg.max_chunks_per_utterance},
          {"model",
           {{"input_h", cfg.model.input_h},
            {"input_w", cfg.model.input_w},
            {"conv_maps", cfg.model.conv_maps},
            {"fc_hidden", cfg.model.fc_hidden},
            {"bottleneck", cfg.model.bottleneck},
            {"head_hidden", cfg.model.head_hidden},
            {"leaky_slope", cfg.model.leaky_slope},
            {"head_dropout", cfg.model.head_dropout}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    if (j.contains("regime"))
      cfg.regime = regime_from_string(j["regime"].get<std::string>());
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("batch_size"))
      cfg.batch_size = j["batch_size"].get<size_t>();
    if (j.contains("lr0")) cfg.lr0 = j["lr0"].get<double>();
    if (j.contains("lr_patience"))
      cfg.lr_patience = j["lr_patience"].get<size_t>();
    if (j.contains("lr_floor")) cfg.lr_floor = j["lr_floor"].get<double>();
    if (j.contains("max_epochs"))
      cfg.max_epochs = j["max_epochs"].get<size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("max_chunks_per_utterance"))
      cfg.max_chunks_per_utterance =
          j["max_chunks_per_utterance"].get<size_t>();
    if (j.contains("model")) {
      const auto& m = j["model"];
      if (m.contains("input_h")) cfg.model.input_h = m["input_h"].get<size_t>();
      if (m.contains("input_w")) cfg.model.input_w = m["input_w"].get<size_t>();
      if (m.contains("conv_maps"))
        cfg.model.conv_maps = m["conv_maps"].get<std::vector<size_t>>();
      if (m.contains("fc_hidden"))
        cfg.model.fc_hidden = m["fc_hidden"].get<size_t>();
      if (m.contains("bottleneck"))
        cfg.model.bottleneck = m["bottleneck"].get<size_t>();
      if (m.contains("head_hidden"))
        cfg.model.head_hidden = m["head_hidden"].get<size_t>();
      if (m.contains("leaky_slope"))
        cfg.model.leaky_slope = m["leaky_slope"].get<double>();
      if (m.contains("head_dropout"))
        cfg.model.head_dropout = m["head_dropout"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return cfg;
}

namespace {

Tensor gather_batch(const FeatureStore& store,
                    const std::vector<uint32_t>& idx, size_t b0, size_t b1) {
  const size_t n = b1 - b0;
  const size_t cs = store.chunk_size();
  Tensor x({n, 1, store.mel, store.frames});
  for (size_t i = 0; i < n; ++i)
    std::copy(store.chunk_data(idx[b0 + i]),
              store.chunk_data(idx[b0 + i]) + cs, x.data() + i * cs);
  return x;
}

std::vector<int> gather_pd_labels(const FeatureStore& store,
                                  const std::vector<uint32_t>& idx, size_t b0,
                                  size_t b1) {
  std::vector<int> labels(b1 - b0);
  for (size_t i = b0; i < b1; ++i)
    labels[i - b0] = store.chunks[idx[i]].label;
  return labels;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, size_t n_spk_out)
    : cfg_(cfg), weights_(regime_weights(cfg)) {
  validate_train_config(cfg);
  // Component-scoped init streams keep encoder/decoder draws independent of
  // which heads exist, so regimes share identical starting points.
  Rng enc_rng = Rng::substream(cfg.seed, "init.encoder");
  encoder_ = std::make_unique<EncoderT<float>>(cfg.model, params_, enc_rng);
  Rng dec_rng = Rng::substream(cfg.seed, "init.decoder");
  decoder_ = std::make_unique<DecoderT<float>>(cfg.model, *encoder_, params_,
                                               dec_rng);
  if (cfg.regime == Regime::kDiscriminative || cfg.regime == Regime::kFusion) {
    Rng rng = Rng::substream(cfg.seed, "init.pd_head");
    pd_head_ = std::make_unique<HeadT<float>>(cfg.model, 2, ParamGroup::kPdHead,
                                              "pd_head", params_, rng);
  }
  if (cfg.regime == Regime::kAdversarial || cfg.regime == Regime::kFusion) {
    ADVREP_REQUIRE(n_spk_out >= 2, ConfigError,
                   "speaker-ID head needs at least 2 speakers, got ",
                   n_spk_out);
    Rng rng = Rng::substream(cfg.seed, "init.spk_head");
    spk_head_ = std::make_unique<HeadT<float>>(
        cfg.model, n_spk_out, ParamGroup::kSpkHead, "spk_head", params_, rng);
  }
}

Trainer::EvalLosses Trainer::eval_losses(const FeatureStore& store,
                                         const std::vector<uint32_t>& chunks,
                                         bool need_pc) const {
  ADVREP_REQUIRE(!chunks.empty(), ConfigError, "empty evaluation set");
  EvalLosses out;
  const size_t B = 128;
  size_t done = 0;
  for (size_t b0 = 0; b0 < chunks.size(); b0 += B) {
    const size_t b1 = std::min(chunks.size(), b0 + B);
    Tape<float> tape;
    Tensor x = gather_batch(store, chunks, b0, b1);
    Tensor z = encoder_->forward(tape, x, BnMode::kEval, false);
    Tensor xhat = decoder_->forward(tape, z, BnMode::kEval, false);
    Tensor l = mse_loss(tape, xhat, x);
    out.l_ae += static_cast<double>(l.data()[0]) * static_cast<double>(b1 - b0);
    if (need_pc) {
      ADVREP_CHECK(pd_head_ != nullptr, "regime has no pathology head");
      Tensor logits = pd_head_->forward(tape, z, false);
      auto ce = softmax_cross_entropy(tape, logits,
                                      gather_pd_labels(store, chunks, b0, b1));
      out.l_pc += static_cast<double>(ce.loss.data()[0]) *
                  static_cast<double>(b1 - b0);
    }
    tape.clear();
    done += b1 - b0;
  }
  out.l_ae /= static_cast<double>(done);
  out.l_pc /= static_cast<double>(done);
  return out;
}

TrainResult Trainer::fit(const FeatureStore& store,
                         const std::vector<uint32_t>& train_chunks,
                         const std::vector<uint32_t>& dev_chunks,
                         const std::vector<uint32_t>& spk_chunks,
                         const std::vector<int>& spk_labels) {
  ADVREP_REQUIRE(!train_chunks.empty(), ConfigError, "empty training set");
  ADVREP_REQUIRE(!dev_chunks.empty(), ConfigError, "empty development set");
  const bool alternating = spk_head_ != nullptr;
  if (alternating) {
    ADVREP_REQUIRE(!spk_chunks.empty(), ConfigError,
                   "speaker-ID stream is empty");
    ADVREP_REQUIRE(spk_labels.size() == spk_chunks.size(), ConfigError,
                   "speaker-ID stream labels do not match its chunks");
    for (int l : spk_labels)
      ADVREP_REQUIRE(l >= 0 && static_cast<size_t>(l) < spk_head_->n_out(),
                     ConfigError, "speaker label ", l, " out of range");
  }
  const bool need_pc = weights_.pc > 0.0;

  TrainResult res;
  LrSchedule sched(cfg_.lr0, cfg_.lr_patience, cfg_.lr_floor);

  const EvalLosses ev0 = eval_losses(store, dev_chunks, need_pc);
  const double monitor0 = dev_monitor_value(cfg_, ev0.l_ae, ev0.l_pc);
  sched.init_best(monitor0);
  best_snapshot_ = params_.snapshot();
  res.best_epoch = 0;
  res.best_monitor = monitor0;
  {
    EpochReport r;
    r.epoch = 0;
    r.has_train = false;
    r.dev_monitor = monitor0;
    r.lr = sched.lr();
    res.reports.push_back(r);
  }
  LOG_DEBUG("epoch 0: dev monitor %.6f", monitor0);

  // Candidate windows grouped by utterance. When the per-utterance cap is
  // active, each epoch draws a fresh capped subset so training eventually
  // sees every window instead of revisiting a fixed slice; callers that
  // already capped their lists get identical behavior.
  const size_t cap = cfg_.max_chunks_per_utterance;
  std::map<uint32_t, std::vector<uint32_t>> train_groups;
  for (uint32_t c : train_chunks) train_groups[store.chunks[c].utterance].push_back(c);
  std::map<uint32_t, std::vector<uint32_t>> spk_groups;
  for (size_t i = 0; i < spk_chunks.size(); ++i)
    spk_groups[store.chunks[spk_chunks[i]].utterance].push_back(
        static_cast<uint32_t>(i));
  auto draw_capped = [cap](const std::map<uint32_t, std::vector<uint32_t>>& g,
                           Rng& rng) {
    std::vector<uint32_t> out;
    for (const auto& [utt, list] : g) {
      if (cap == 0 || list.size() <= cap) {
        out.insert(out.end(), list.begin(), list.end());
        continue;
      }
      std::vector<uint32_t> pick(list);
      rng.shuffle(pick);
      pick.resize(cap);
      std::sort(pick.begin(), pick.end());
      out.insert(out.end(), pick.begin(), pick.end());
    }
    return out;
  };

  size_t spk_cursor = 0;
  for (size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    Rng sample = Rng::substream(cfg_.seed, "chunk_sample", epoch);
    std::vector<uint32_t> order = draw_capped(train_groups, sample);
    Rng shuffle_ae = Rng::substream(cfg_.seed, "shuffle_ae", epoch);
    shuffle_ae.shuffle(order);
    std::vector<uint32_t> spk_order;
    if (alternating) {
      Rng spk_sample = Rng::substream(cfg_.seed, "spk_sample", epoch);
      spk_order = draw_capped(spk_groups, spk_sample);
      Rng shuffle_spk = Rng::substream(cfg_.seed, "shuffle_spk", epoch);
      shuffle_spk.shuffle(spk_order);
      spk_cursor = 0;
    }
    Rng dropout_pc = Rng::substream(cfg_.seed, "dropout_pc", epoch);
    Rng dropout_id = Rng::substream(cfg_.seed, "dropout_id", epoch);

    const double lr_epoch = sched.lr();
    const float lr = static_cast<float>(lr_epoch);
    double sum_ae = 0.0, sum_id = 0.0, sum_pc = 0.0, sum_obj = 0.0;
    size_t n_batches = 0;

    for (size_t b0 = 0; b0 < order.size(); b0 += cfg_.batch_size) {
      const size_t b1 = std::min(order.size(), b0 + cfg_.batch_size);

      // Cyclic draw from the speaker-ID stream, paired with this batch.
      std::vector<uint32_t> spk_batch;
      std::vector<int> spk_batch_labels;
      if (alternating) {
        for (size_t i = 0; i < cfg_.batch_size; ++i) {
          const uint32_t pos = spk_order[(spk_cursor + i) % spk_order.size()];
          spk_batch.push_back(spk_chunks[pos]);
          spk_batch_labels.push_back(spk_labels[pos]);
        }
        spk_cursor = (spk_cursor + cfg_.batch_size) % spk_order.size();
      }

      // Step 1: descend the composite objective over encoder, decoder and
      // (when present) the pathology head; the speaker head is frozen by
      // group gating.
      Tape<float> tape;
      Tensor x = gather_batch(store, order, b0, b1);
      Tensor z = encoder_->forward(tape, x, BnMode::kTrain, true);
      Tensor xhat = decoder_->forward(tape, z, BnMode::kTrain, true);
      Tensor l_ae = mse_loss(tape, xhat, x);
      std::vector<std::pair<float, Tensor>> terms;
      terms.emplace_back(static_cast<float>(weights_.ae), l_ae);
      double batch_pc = 0.0, batch_id = 0.0;
      if (need_pc) {
        Tensor logits = pd_head_->forward(tape, z, true, &dropout_pc);
        auto ce = softmax_cross_entropy(
            tape, logits, gather_pd_labels(store, order, b0, b1));
        terms.emplace_back(static_cast<float>(weights_.pc), ce.loss);
        batch_pc = ce.loss.data()[0];
      }
      Tensor xs;
      if (alternating && weights_.id > 0.0) {
        xs = gather_batch(store, spk_batch, 0, spk_batch.size());
        Tensor zs = encoder_->forward(tape, xs, BnMode::kTrain, false);
        Tensor slog = spk_head_->forward(tape, zs, true, &dropout_id);
        auto sce = softmax_cross_entropy(tape, slog, spk_batch_labels);
        terms.emplace_back(-static_cast<float>(weights_.id), sce.loss);
        batch_id = sce.loss.data()[0];
      }
      Tensor obj = weighted_sum(tape, terms);
      tape.backward(obj);
      GroupMask step1;
      step1.encoder = true;
      step1.decoder = true;
      step1.pd_head = need_pc;
      sgd_step(params_, lr, step1);
      params_.zero_grad();
      tape.clear();

      // Step 2: the speaker head descends its own loss on the same batch
      // against the just-updated encoder. The bottleneck is detached so no
      // gradient (or batch-norm running update) reaches the encoder.
      if (alternating) {
        if (!xs.defined())
          xs = gather_batch(store, spk_batch, 0, spk_batch.size());
        Tape<float> scratch;
        Tensor zs = encoder_->forward(scratch, xs, BnMode::kTrain, false);
        scratch.clear();
        Tensor zsd = Tensor::from(zs.shape(), zs.values());
        Tape<float> t2;
        Tensor slog = spk_head_->forward(t2, zsd, true, &dropout_id);
        auto sce = softmax_cross_entropy(t2, slog, spk_batch_labels);
        t2.backward(sce.loss);
        GroupMask step2;
        step2.spk_head = true;
        sgd_step(params_, lr, step2);
        params_.zero_grad();
        t2.clear();
        if (weights_.id == 0.0) batch_id = sce.loss.data()[0];
      }

      sum_ae += l_ae.data()[0];
      sum_pc += batch_pc;
      sum_id += batch_id;
      sum_obj += obj.data()[0];
      ++n_batches;
    }

    if (on_epoch) on_epoch(epoch);

    const EvalLosses ev = eval_losses(store, dev_chunks, need_pc);
    const double monitor = dev_monitor_value(cfg_, ev.l_ae, ev.l_pc);
    if (monitor < res.best_monitor) {
      res.best_monitor = monitor;
      res.best_epoch = epoch;
      best_snapshot_ = params_.snapshot();
    }
    const bool halved = sched.observe(monitor);

    EpochReport r;
    r.epoch = epoch;
    r.has_train = true;
    r.l_ae = sum_ae / static_cast<double>(n_batches);
    r.l_id = sum_id / static_cast<double>(n_batches);
    r.l_pc = sum_pc / static_cast<double>(n_batches);
    r.objective = sum_obj / static_cast<double>(n_batches);
    r.dev_monitor = monitor;
    r.lr = lr_epoch;
    res.reports.push_back(r);
    res.epochs_run = epoch;
    LOG_DEBUG("epoch %zu: obj %.6f dev %.6f lr %.5f%s", epoch, r.objective,
              monitor, lr_epoch, halved ? " (lr halved)" : "");

    if (sched.stopped()) break;
  }
  res.final_lr = sched.lr();
  return res;
}

void Trainer::restore_best() {
  ADVREP_CHECK(!best_snapshot_.empty(), "restore_best before fit");
  params_.restore(best_snapshot_);
}

std::vector<float> Trainer::bottlenecks(const FeatureStore& store,
                                        const std::vector<uint32_t>& chunks,
                                        size_t batch) const {
  const size_t d = cfg_.model.bottleneck;
  std::vector<float> out(chunks.size() * d);
  for (size_t b0 = 0; b0 < chunks.size(); b0 += batch) {
    const size_t b1 = std::min(chunks.size(), b0 + batch);
    Tape<float> tape;
    Tensor x = gather_batch(store, chunks, b0, b1);
    Tensor z = encoder_->forward(tape, x, BnMode::kEval, false);
    std::copy(z.data(), z.data() + (b1 - b0) * d, out.data() + b0 * d);
    tape.clear();
  }
  return out;
}

void Trainer::save_run(const std::string& dir, const TrainResult& res) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "config.json", std::ios::trunc);
    ADVREP_REQUIRE(os.good(), DataError, "cannot write config under ", dir);
    os << train_config_to_json(cfg_).dump(2) << "\n";
  }
  {
    std::ofstream os(fs::path(dir) / "epochs.csv", std::ios::trunc);
    ADVREP_REQUIRE(os.good(), DataError, "cannot write epoch log under ", dir);
    os << "epoch,l_ae,l_id,l_pc,objective,dev_monitor,lr\n";
    char buf[256];
    for (const auto& r : res.reports) {
      if (r.has_train) {
        std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g\n",
                      r.epoch, r.l_ae, r.l_id, r.l_pc, r.objective,
                      r.dev_monitor, r.lr);
      } else {
        std::snprintf(buf, sizeof(buf), "%zu,,,,,%.8g,%.8g\n", r.epoch,
                      r.dev_monitor, r.lr);
      }
      os << buf;
    }
  }
  auto write_state = [&](const std::string& name,
                         const std::vector<std::vector<float>>* override_vals,
                         uint64_t epoch) {
    Checkpoint ck;
    ck.master_seed = cfg_.seed;
    ck.epoch = epoch;
    ck.lr = res.final_lr;
    ck.best_monitor = res.best_monitor;
    const auto& entries = params_.entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      CheckpointEntry ce;
      ce.name = entries[i].name;
      ce.group = static_cast<uint8_t>(entries[i].group);
      ce.trainable = entries[i].trainable ? 1 : 0;
      for (size_t d : entries[i].tensor.shape()) ce.shape.push_back(d);
      ce.values =
          override_vals ? (*override_vals)[i] : entries[i].tensor.values();
      ck.entries.push_back(std::move(ce));
    }
    save_checkpoint((fs::path(dir) / name).string(), ck);
  };
  write_state("final.ckpt", nullptr, res.epochs_run);
  write_state("best.ckpt", &best_snapshot_, res.best_epoch);
}

HeadTrainer::HeadTrainer(const ModelConfig& model, size_t n_out, uint64_t seed,
                         const std::string& stream_name)
    : model_(model), n_out_(n_out), seed_(seed), stream_(stream_name) {
  Rng rng = Rng::substream(seed, stream_ + ".init");
  head_ = std::make_unique<HeadT<float>>(model, n_out, ParamGroup::kPdHead,
                                         stream_name, params_, rng);
}

TrainResult HeadTrainer::fit(const std::vector<float>& features,
                             const std::vector<int>& labels,
                             const std::vector<uint32_t>& train_idx,
                             const std::vector<uint32_t>& dev_idx,
                             const TrainConfig& cfg) {
  const size_t d = model_.bottleneck;
  ADVREP_REQUIRE(features.size() == labels.size() * d, ConfigError,
                 "feature matrix does not match labels");
  ADVREP_REQUIRE(!train_idx.empty() && !dev_idx.empty(), ConfigError,
                 "head training needs non-empty train and dev sets");

  auto gather = [&](const std::vector<uint32_t>& idx, size_t b0, size_t b1) {
    Tensor x({b1 - b0, d});
    std::vector<int> y(b1 - b0);
    for (size_t i = b0; i < b1; ++i) {
      std::copy(features.data() + idx[i] * d, features.data() + (idx[i] + 1) * d,
                x.data() + (i - b0) * d);
      y[i - b0] = labels[idx[i]];
    }
    return std::make_pair(x, y);
  };

  auto dev_loss = [&]() {
    double total = 0.0;
    for (size_t b0 = 0; b0 < dev_idx.size(); b0 += 256) {
      const size_t b1 = std::min(dev_idx.size(), b0 + 256);
      Tape<float> tape;
      auto [x, y] = gather(dev_idx, b0, b1);
      Tensor logits = head_->forward(tape, x, false);
      auto ce = softmax_cross_entropy(tape, logits, y);
      total += static_cast<double>(ce.loss.data()[0]) *
               static_cast<double>(b1 - b0);
      tape.clear();
    }
    return total / static_cast<double>(dev_idx.size());
  };

  TrainResult res;
  LrSchedule sched(cfg.lr0, cfg.lr_patience, cfg.lr_floor);
  const double monitor0 = dev_loss();
  sched.init_best(monitor0);
  best_snapshot_ = params_.snapshot();
  res.best_epoch = 0;
  res.best_monitor = monitor0;
  {
    EpochReport r;
    r.epoch = 0;
    r.has_train = false;
    r.dev_monitor = monitor0;
    r.lr = sched.lr();
    res.reports.push_back(r);
  }

  GroupMask mask;
  mask.pd_head = true;  // the single head group used by this trainer
  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle = Rng::substream(seed_, stream_ + ".shuffle", epoch);
    Rng dropout = Rng::substream(seed_, stream_ + ".dropout", epoch);
    std::vector<uint32_t> order(train_idx);
    shuffle.shuffle(order);
    const double lr_epoch = sched.lr();
    const float lr = static_cast<float>(lr_epoch);
    double sum = 0.0;
    size_t n_batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Tape<float> tape;
      auto [x, y] = gather(order, b0, b1);
      Tensor logits = head_->forward(tape, x, true, &dropout);
      auto ce = softmax_cross_entropy(tape, logits, y);
      tape.backward(ce.loss);
      sgd_step(params_, lr, mask);
      params_.zero_grad();
      tape.clear();
      sum += ce.loss.data()[0];
      ++n_batches;
    }
    const double monitor = dev_loss();
    if (monitor < res.best_monitor) {
      res.best_monitor = monitor;
      res.best_epoch = epoch;
      best_snapshot_ = params_.snapshot();
    }
    sched.observe(monitor);
    EpochReport r;
    r.epoch = epoch;
    r.has_train = true;
    r.l_pc = sum / static_cast<double>(n_batches);
    r.objective = r.l_pc;
    r.dev_monitor = monitor;
    r.lr = lr_epoch;
    res.reports.push_back(r);
    res.epochs_run = epoch;
    if (sched.stopped()) break;
  }
  res.final_lr = sched.lr();
  params_.restore(best_snapshot_);
  return res;
}

std::vector<double> HeadTrainer::predict_probs(
    const std::vector<float>& features, const std::vector<uint32_t>& idx) const {
  const size_t d = model_.bottleneck;
  std::vector<double> out;
  out.reserve(idx.size() * n_out_);
  for (size_t b0 = 0; b0 < idx.size(); b0 += 256) {
    const size_t b1 = std::min(idx.size(), b0 + 256);
    Tape<float> tape;
    Tensor x({b1 - b0, d});
    for (size_t i = b0; i < b1; ++i)
      std::copy(features.data() + idx[i] * d,
                features.data() + (idx[i] + 1) * d, x.data() + (i - b0) * d);
    Tensor logits = head_->forward(tape, x, false);
    std::vector<float> probs =
        softmax_rows(logits.data(), b1 - b0, n_out_);
    for (float p : probs) out.push_back(static_cast<double>(p));
    tape.clear();
  }
  return out;
}

void HeadTrainer::recenter_bias(const std::vector<float>& features,
                                const std::vector<int>& labels,
                                const std::vector<uint32_t>& dev_idx) {
  ADVREP_REQUIRE(n_out_ == 2, ConfigError,
                 "bias recentering applies to binary heads only");
  ADVREP_REQUIRE(!dev_idx.empty(), ConfigError,
                 "bias recentering needs development rows");
  const size_t d = model_.bottleneck;
  double sum[2] = {0.0, 0.0};
  size_t n[2] = {0, 0};
  for (size_t b0 = 0; b0 < dev_idx.size(); b0 += 256) {
    const size_t b1 = std::min(dev_idx.size(), b0 + 256);
    Tape<float> tape;
    Tensor x({b1 - b0, d});
    for (size_t i = b0; i < b1; ++i)
      std::copy(features.data() + dev_idx[i] * d,
                features.data() + (dev_idx[i] + 1) * d,
                x.data() + (i - b0) * d);
    Tensor logits = head_->forward(tape, x, false);
    for (size_t i = b0; i < b1; ++i) {
      const float* row = logits.data() + (i - b0) * 2;
      const int y = labels[dev_idx[i]];
      ADVREP_REQUIRE(y == 0 || y == 1, ConfigError, "non-binary label ", y);
      sum[y] += static_cast<double>(row[1]) - static_cast<double>(row[0]);
      ++n[y];
    }
    tape.clear();
  }
  ADVREP_REQUIRE(n[0] > 0 && n[1] > 0, ConfigError,
                 "bias recentering needs both classes in development rows");
  const double mid = 0.5 * (sum[0] / static_cast<double>(n[0]) +
                            sum[1] / static_cast<double>(n[1]));
  head_->shift_output_bias(0, static_cast<float>(0.5 * mid));
  head_->shift_output_bias(1, static_cast<float>(-0.5 * mid));
}

std::vector<uint32_t> chunks_of_speakers(const FeatureStore& store,
                                         const std::vector<uint32_t>& speakers,
                                         size_t max_per_utt) {
  const std::set<uint32_t> want(speakers.begin(), speakers.end());
  std::vector<uint32_t> out;
  for (size_t i = 0; i < store.chunks.size(); ++i) {
    const auto& c = store.chunks[i];
    if (want.count(c.speaker) == 0) continue;
    if (max_per_utt > 0 && c.chunk_index >= max_per_utt) continue;
    out.push_back(static_cast<uint32_t>(i));
  }
  return out;
}

std::vector<uint32_t> chunks_of_utterances(
    const FeatureStore& store, const std::vector<uint32_t>& utterances,
    size_t max_per_utt) {
  const std::set<uint32_t> want(utterances.begin(), utterances.end());
  std::vector<uint32_t> out;
  for (size_t i = 0; i < store.chunks.size(); ++i) {
    const auto& c = store.chunks[i];
    if (want.count(c.utterance) == 0) continue;
    if (max_per_utt > 0 && c.chunk_index >= max_per_utt) continue;
    out.push_back(static_cast<uint32_t>(i));
  }
  return out;
}

void audit_no_leakage(const FeatureStore& store,
                      const std::vector<uint32_t>& chunks,
                      const std::vector<uint32_t>& forbidden_speakers,
                      const std::string& context) {
  const std::set<uint32_t> forbidden(forbidden_speakers.begin(),
                                     forbidden_speakers.end());
  for (uint32_t i : chunks) {
    const auto& c = store.chunks[i];
    ADVREP_CHECK(forbidden.count(c.speaker) == 0,
                 "speaker leakage: chunk of held-out speaker reached " +
                     context);
  }
}

}  // namespace advrep
