#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advrep/features.hpp"
#include "advrep/model.hpp"
#include "advrep/params.hpp"

#include "json.hpp"

namespace advrep {

enum class Regime { kBaseline, kAdversarial, kDiscriminative, kFusion };

Regime regime_from_string(const std::string& s);
const char* regime_to_string(Regime r);

struct TrainConfig {
  Regime regime = Regime::kBaseline;
  double alpha = 0.0;
  double lambda = 0.0;
  size_t batch_size = 128;
  double lr0 = 0.02;
  size_t lr_patience = 5;
  double lr_floor = 0.002;
  size_t max_epochs = 100;
  uint64_t seed = 0;
  // 0 trains on every window; otherwise each epoch draws this many windows
  // per utterance (fresh seeded draw per epoch) from the candidates it was
  // given, bounding per-epoch cost without pinning training to a fixed slice.
  size_t max_chunks_per_utterance = 0;
  ModelConfig model;
};

void validate_train_config(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Objective E = ae*L_ae + pc*L_pc - id*L_id per regime.
struct RegimeWeights {
  double ae = 1.0;
  double pc = 0.0;
  double id = 0.0;
};

RegimeWeights regime_weights(const TrainConfig& cfg);

// Monitor excludes the adversarial term: the saved model is not trying to
// minimize it.
double dev_monitor_value(const TrainConfig& cfg, double l_ae, double l_pc);

struct EpochReport {
  size_t epoch = 0;
  bool has_train = false;  // epoch 0 is evaluation-only
  double l_ae = 0.0;
  double l_id = 0.0;
  double l_pc = 0.0;
  double objective = 0.0;
  double dev_monitor = 0.0;
  double lr = 0.0;
};

// Halve after `patience` consecutive epochs without a new strict minimum;
// the counter resets on halving and on improvement.
class LrSchedule {
 public:
  LrSchedule(double lr0, size_t patience, double floor)
      : lr_(lr0), patience_(patience), floor_(floor) {}

  void init_best(double monitor) { best_ = monitor; }

  // Returns true when this observation caused a halving.
  bool observe(double monitor) {
    if (monitor < best_) {
      best_ = monitor;
      counter_ = 0;
      return false;
    }
    if (++counter_ >= patience_) {
      lr_ *= 0.5;
      ++halvings_;
      counter_ = 0;
      return true;
    }
    return false;
  }

  bool stopped() const { return lr_ < floor_; }
  double lr() const { return lr_; }
  double best() const { return best_; }
  size_t counter() const { return counter_; }
  size_t halvings() const { return halvings_; }

 private:
  double lr_;
  size_t patience_;
  double floor_;
  double best_ = 1e300;
  size_t counter_ = 0;
  size_t halvings_ = 0;
};

struct TrainResult {
  std::vector<EpochReport> reports;
  size_t best_epoch = 0;
  double best_monitor = 0.0;
  double final_lr = 0.0;
  size_t epochs_run = 0;
};

// One representation-learning run: encoder+decoder plus the heads the regime
// needs, alternating updates for the adversarial regimes.
class Trainer {
 public:
  // n_spk_out is the speaker-ID head size; required > 1 for adversarial and
  // fusion, ignored otherwise.
  Trainer(const TrainConfig& cfg, size_t n_spk_out);

  // spk_chunks/spk_labels feed the speaker-ID stream (labels are indices in
  // [0, n_spk_out)); pass empty for regimes without it.
  TrainResult fit(const FeatureStore& store,
                  const std::vector<uint32_t>& train_chunks,
                  const std::vector<uint32_t>& dev_chunks,
                  const std::vector<uint32_t>& spk_chunks,
                  const std::vector<int>& spk_labels);

  void restore_best();

  ParamSet<float>& params() { return params_; }
  const ParamSet<float>& params() const { return params_; }
  const EncoderT<float>& encoder() const { return *encoder_; }
  const TrainConfig& config() const { return cfg_; }

  // Eval-mode bottlenecks for the given chunks, row-major [n, bottleneck].
  std::vector<float> bottlenecks(const FeatureStore& store,
                                 const std::vector<uint32_t>& chunks,
                                 size_t batch = 64) const;

  // config.json, epochs.csv, best.ckpt, final.ckpt under dir.
  void save_run(const std::string& dir, const TrainResult& res) const;

  // Called after each epoch's updates, before the dev evaluation. Used by
  // tests to observe the parameter trajectory.
  std::function<void(size_t epoch)> on_epoch;

 private:
  struct EvalLosses {
    double l_ae = 0.0;
    double l_pc = 0.0;
  };
  EvalLosses eval_losses(const FeatureStore& store,
                         const std::vector<uint32_t>& chunks,
                         bool need_pc) const;

  TrainConfig cfg_;
  RegimeWeights weights_;
  ParamSet<float> params_;
  std::unique_ptr<EncoderT<float>> encoder_;
  std::unique_ptr<DecoderT<float>> decoder_;
  std::unique_ptr<HeadT<float>> pd_head_;
  std::unique_ptr<HeadT<float>> spk_head_;
  std::vector<std::vector<float>> best_snapshot_;
};

// Classifier head over precomputed bottleneck features (the encoder stays
// frozen by construction: it is not even present). Used for the downstream
// PD classifier and the speaker-ID probe.
class HeadTrainer {
 public:
  HeadTrainer(const ModelConfig& model, size_t n_out, uint64_t seed,
              const std::string& stream_name);

  // features is row-major [n, bottleneck]; labels in [0, n_out).
  TrainResult fit(const std::vector<float>& features,
                  const std::vector<int>& labels,
                  const std::vector<uint32_t>& train_idx,
                  const std::vector<uint32_t>& dev_idx,
                  const TrainConfig& cfg);

  // Eval-mode probabilities [idx.size(), n_out].
  std::vector<double> predict_probs(const std::vector<float>& features,
                                    const std::vector<uint32_t>& idx) const;

  // Binary heads only: shifts the output bias so the two class-conditional
  // mean logit differences over the given (development) rows straddle zero.
  // Keeps the ranking, fixes the decision threshold for unseen speakers.
  void recenter_bias(const std::vector<float>& features,
                     const std::vector<int>& labels,
                     const std::vector<uint32_t>& dev_idx);

  ParamSet<float>& params() { return params_; }

 private:
  ModelConfig model_;
  size_t n_out_;
  uint64_t seed_;
  std::string stream_;
  ParamSet<float> params_;
  std::unique_ptr<HeadT<float>> head_;
  std::vector<std::vector<float>> best_snapshot_;
};

// Chunk selection helpers. A zero max_per_utt keeps everything.
std::vector<uint32_t> chunks_of_speakers(const FeatureStore& store,
                                         const std::vector<uint32_t>& speakers,
                                         size_t max_per_utt);
std::vector<uint32_t> chunks_of_utterances(
    const FeatureStore& store, const std::vector<uint32_t>& utterances,
    size_t max_per_utt);

// Throws InternalError if any chunk belongs to a forbidden speaker.
void audit_no_leakage(const FeatureStore& store,
                      const std::vector<uint32_t>& chunks,
                      const std::vector<uint32_t>& forbidden_speakers,
                      const std::string& context);

}  // namespace advrep
