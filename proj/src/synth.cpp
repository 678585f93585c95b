#include "advrep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "advrep/common.hpp"
#include "advrep/log.hpp"
#include "advrep/rng.hpp"
#include "advrep/wav.hpp"

namespace advrep {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Base resonance template; the identity signature lives in per-speaker band
// gains plus a gentler jitter of the resonance centers. Both scale with
// sigma_id so zero strength means identical voices.
constexpr double kBaseHz[4] = {500.0, 1150.0, 2300.0, 3400.0};
constexpr double kBandwidthHz = 150.0;

struct SpeakerVoice {
  double center_hz[4];
  double gain[4];
};

SpeakerVoice make_voice(uint64_t seed, size_t speaker_index, double sigma_id) {
  Rng rng = Rng::substream(seed, "synth.speaker", speaker_index);
  SpeakerVoice v;
  for (int k = 0; k < 4; ++k)
    v.center_hz[k] = kBaseHz[k] * std::exp(0.15 * sigma_id * rng.normal());
  for (int k = 0; k < 4; ++k) v.gain[k] = std::exp(sigma_id * rng.normal());
  return v;
}

// Two-pole resonator driven by the excitation, scaled so the output level is
// roughly independent of the pole radius.
void resonate(const std::vector<double>& x, double f_hz, double gain,
              std::vector<double>& acc) {
  const double r = std::exp(-kPi * kBandwidthHz / kSampleRate);
  const double w = 2.0 * kPi * f_hz / kSampleRate;
  const double a1 = 2.0 * r * std::cos(w);
  const double a2 = -r * r;
  const double scale = (1.0 - r) * gain;
  double y1 = 0.0, y2 = 0.0;
  for (size_t n = 0; n < x.size(); ++n) {
    const double y = x[n] + a1 * y1 + a2 * y2;
    acc[n] += scale * y;
    y2 = y1;
    y1 = y;
  }
}

std::vector<double> synth_utterance(const SynthSpec& spec,
                                    size_t speaker_index, int label,
                                    size_t utt_index) {
  const size_t n =
      static_cast<size_t>(spec.duration_s * static_cast<double>(kSampleRate));
  const SpeakerVoice voice =
      make_voice(spec.seed, speaker_index, spec.sigma_id);
  Rng rng = Rng::substream(spec.seed, "synth.utt",
                           speaker_index * 10000 + utt_index);

  std::vector<double> excitation(n);
  for (auto& v : excitation) v = rng.normal();

  std::vector<double> s(n, 0.0);
  for (int k = 0; k < 4; ++k)
    resonate(excitation, voice.center_hz[k], voice.gain[k], s);

  // Pathology cue 1: spectral tilt via a one-pole lowpass mix.
  if (label == 1 && spec.sigma_pd > 0.0) {
    const double t = std::min(0.9, spec.sigma_pd);
    const double a = std::exp(-2.0 * kPi * 800.0 / kSampleRate);
    double lp = 0.0;
    for (size_t i = 0; i < n; ++i) {
      lp = a * lp + (1.0 - a) * s[i];
      s[i] = (1.0 - t) * s[i] + t * lp;
    }
  }

  // Pathology cue 2: slowed amplitude modulation. The envelope floor stays
  // at 0.1 (-20 dB) so the energy VAD keeps the whole utterance.
  const double rate =
      5.0 / (1.0 + (label == 1 ? 1.5 * spec.sigma_pd : 0.0));
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  for (size_t i = 0; i < n; ++i) {
    const double env =
        0.55 + 0.45 * std::sin(2.0 * kPi * rate * static_cast<double>(i) /
                                   kSampleRate +
                               phase);
    s[i] *= env;
  }

  if (spec.sigma_n > 0.0)
    for (auto& v : s) v += spec.sigma_n * rng.normal();

  double peak = 0.0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  ADVREP_CHECK(peak > 0.0, "silent synthetic utterance");
  const double scale = 0.7 / peak;
  for (auto& v : s) v *= scale;
  return s;
}

std::string speaker_name(int label, size_t idx_in_class) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02zu", label == 0 ? "nt" : "pd",
                idx_in_class + 1);
  return buf;
}

}  // namespace

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "n_speakers_per_class", "utterances_per_speaker", "duration_s",
      "sigma_id",             "sigma_pd",               "sigma_n",
      "seed"};
  for (const auto& [key, value] : j.items())
    ADVREP_REQUIRE(known.count(key) != 0, ConfigError,
                   "unknown field '", key, "' in synth spec");
  SynthSpec s;
  try {
    if (j.contains("n_speakers_per_class"))
      s.n_speakers_per_class = j["n_speakers_per_class"].get<size_t>();
    if (j.contains("utterances_per_speaker"))
      s.utterances_per_speaker = j["utterances_per_speaker"].get<size_t>();
    if (j.contains("duration_s")) s.duration_s = j["duration_s"].get<double>();
    if (j.contains("sigma_id")) s.sigma_id = j["sigma_id"].get<double>();
    if (j.contains("sigma_pd")) s.sigma_pd = j["sigma_pd"].get<double>();
    if (j.contains("sigma_n")) s.sigma_n = j["sigma_n"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synth spec value: ") + e.what());
  }
  ADVREP_REQUIRE(s.n_speakers_per_class > 0, ConfigError,
                 "n_speakers_per_class must be positive");
  ADVREP_REQUIRE(s.utterances_per_speaker > 0, ConfigError,
                 "utterances_per_speaker must be positive");
  ADVREP_REQUIRE(s.duration_s > 0.0, ConfigError,
                 "duration_s must be positive");
  ADVREP_REQUIRE(s.sigma_id >= 0.0 && s.sigma_pd >= 0.0 && s.sigma_n >= 0.0,
                 ConfigError, "sigma values must be non-negative");
  return s;
}

SynthSpec read_synth_spec(const std::string& path) {
  std::ifstream is(path);
  ADVREP_REQUIRE(is.good(), ConfigError, "cannot open synth spec ", path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return synth_spec_from_json(j);
}

nlohmann::json synth_spec_to_json(const SynthSpec& spec) {
  return {{"n_speakers_per_class", spec.n_speakers_per_class},
          {"utterances_per_speaker", spec.utterances_per_speaker},
          {"duration_s", spec.duration_s},
          {"sigma_id", spec.sigma_id},
          {"sigma_pd", spec.sigma_pd},
          {"sigma_n", spec.sigma_n},
          {"seed", spec.seed}};
}

std::vector<ManifestRow> generate_corpus(const SynthSpec& spec,
                                         const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<ManifestRow> rows;
  const size_t total = 2 * spec.n_speakers_per_class;
  for (size_t s = 0; s < total; ++s) {
    const int label = s < spec.n_speakers_per_class ? 0 : 1;
    const size_t in_class = s % spec.n_speakers_per_class;
    const std::string spk = speaker_name(label, in_class);
    fs::create_directories(fs::path(out_dir) / spk);
    for (size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      char utt[16];
      std::snprintf(utt, sizeof(utt), "u%02zu", u);
      const std::vector<double> x = synth_utterance(spec, s, label, u);
      std::vector<float> xf(x.begin(), x.end());
      const fs::path wav_path = fs::path(out_dir) / spk / (std::string(utt) + ".wav");
      write_wav(wav_path.string(), xf, kSampleRate);
      rows.push_back(
          {spk, label_to_string(label), wav_path.string(), utt});
    }
  }
  write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows);
  std::ofstream js(fs::path(out_dir) / "synth_spec.json", std::ios::trunc);
  js << synth_spec_to_json(spec).dump(2) << "\n";
  LOG_INFO("generated %zu utterances from %zu speakers into %s", rows.size(),
           total, out_dir.c_str());
  return rows;
}

namespace {

// Dense Cholesky solve of (A + gamma I) w = b for SPD A, in place.
void ridge_solve(std::vector<double>& a, size_t d, double gamma,
                 std::vector<double>& b, size_t n_rhs) {
  for (size_t i = 0; i < d; ++i) a[i * d + i] += gamma;
  // Lower-triangular factor.
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double sum = a[i * d + j];
      for (size_t k = 0; k < j; ++k) sum -= a[i * d + k] * a[j * d + k];
      if (i == j) {
        ADVREP_CHECK(sum > 0.0, "ridge matrix not positive definite");
        a[i * d + i] = std::sqrt(sum);
      } else {
        a[i * d + j] = sum / a[j * d + j];
      }
    }
  }
  // Solve L y = b, then L^T w = y, for each right-hand side.
  for (size_t r = 0; r < n_rhs; ++r) {
    double* x = b.data() + r * d;
    for (size_t i = 0; i < d; ++i) {
      double sum = x[i];
      for (size_t k = 0; k < i; ++k) sum -= a[i * d + k] * x[k];
      x[i] = sum / a[i * d + i];
    }
    for (size_t ii = d; ii > 0; --ii) {
      const size_t i = ii - 1;
      double sum = x[i];
      for (size_t k = i + 1; k < d; ++k) sum -= a[k * d + i] * x[k];
      x[i] = sum / a[i * d + i];
    }
  }
}

}  // namespace

OracleReport oracle_classifiers(const FeatureStore& store) {
  ADVREP_REQUIRE(!store.chunks.empty(), DataError, "oracle on empty store");
  const size_t n_utt = store.utterances.size();
  const size_t mel = store.mel;
  const size_t dim = 2 * mel;  // per-band mean and per-band std over time

  // Utterance features: average the per-chunk band statistics.
  std::vector<double> feats(n_utt * dim, 0.0);
  std::vector<size_t> chunk_count(n_utt, 0);
  for (size_t i = 0; i < store.chunks.size(); ++i) {
    const auto& c = store.chunks[i];
    const float* v = store.chunk_data(i);
    double* f = feats.data() + c.utterance * dim;
    for (size_t m = 0; m < mel; ++m) {
      double mean = 0.0;
      for (size_t t = 0; t < store.frames; ++t)
        mean += v[m * store.frames + t];
      mean /= static_cast<double>(store.frames);
      double var = 0.0;
      for (size_t t = 0; t < store.frames; ++t) {
        const double d = v[m * store.frames + t] - mean;
        var += d * d;
      }
      var /= static_cast<double>(store.frames);
      f[m] += mean;
      f[mel + m] += std::sqrt(var);
    }
    ++chunk_count[c.utterance];
  }
  for (size_t u = 0; u < n_utt; ++u) {
    ADVREP_REQUIRE(chunk_count[u] > 0, DataError, "utterance ",
                   store.utterances[u], " has no chunks");
    for (size_t k = 0; k < dim; ++k)
      feats[u * dim + k] /= static_cast<double>(chunk_count[u]);
  }

  // Column standardization, Gram accumulation and ridge solve for one split.
  struct Fit {
    std::vector<double> mu, sd, w;  // w holds n_rhs rows of dim weights
  };
  auto fit_ridge = [&](const std::vector<size_t>& train, size_t n_rhs,
                       auto&& target) {
    Fit fit;
    fit.mu.assign(dim, 0.0);
    fit.sd.assign(dim, 0.0);
    for (size_t u : train)
      for (size_t k = 0; k < dim; ++k) fit.mu[k] += feats[u * dim + k];
    for (size_t k = 0; k < dim; ++k)
      fit.mu[k] /= static_cast<double>(train.size());
    for (size_t u : train)
      for (size_t k = 0; k < dim; ++k) {
        const double d = feats[u * dim + k] - fit.mu[k];
        fit.sd[k] += d * d;
      }
    for (size_t k = 0; k < dim; ++k) {
      fit.sd[k] = std::sqrt(fit.sd[k] / static_cast<double>(train.size()));
      if (fit.sd[k] < 1e-9) fit.sd[k] = 1.0;
    }
    auto col = [&](size_t u, size_t k) {
      return (feats[u * dim + k] - fit.mu[k]) / fit.sd[k];
    };
    std::vector<double> gram(dim * dim, 0.0);
    fit.w.assign(n_rhs * dim, 0.0);
    std::vector<double> y(n_rhs);
    for (size_t u : train) {
      for (size_t i = 0; i < dim; ++i) {
        const double xi = col(u, i);
        for (size_t j = 0; j <= i; ++j) gram[i * dim + j] += xi * col(u, j);
      }
      target(u, y.data());
      for (size_t r = 0; r < n_rhs; ++r)
        for (size_t i = 0; i < dim; ++i)
          fit.w[r * dim + i] += y[r] * col(u, i);
    }
    for (size_t i = 0; i < dim; ++i)
      for (size_t j = i + 1; j < dim; ++j)
        gram[i * dim + j] = gram[j * dim + i];
    const double gamma = static_cast<double>(train.size()) / 100.0 + 1.0;
    ridge_solve(gram, dim, gamma, fit.w, n_rhs);
    return fit;
  };
  auto score = [&](const Fit& fit, size_t r, size_t u) {
    double s = 0.0;
    for (size_t k = 0; k < dim; ++k)
      s += fit.w[r * dim + k] * (feats[u * dim + k] - fit.mu[k]) / fit.sd[k];
    return s;
  };

  // PD task: hold out whole speakers (~30% per class), so identity cannot
  // stand in for the class cue.
  const size_t n_spk = store.speakers.size();
  std::vector<char> pd_test_spk(n_spk, 0);
  for (int c = 0; c < 2; ++c) {
    std::vector<size_t> cls;
    for (size_t s = 0; s < n_spk; ++s)
      if (store.speaker_label[s] == c) cls.push_back(s);
    ADVREP_REQUIRE(cls.size() >= 2, DataError,
                   "oracle needs at least 2 speakers of each class");
    const size_t n_test = std::max<size_t>(1, cls.size() * 3 / 10);
    for (size_t i = cls.size() - n_test; i < cls.size(); ++i)
      pd_test_spk[cls[i]] = 1;
  }
  std::vector<size_t> pd_train, pd_test;
  for (size_t u = 0; u < n_utt; ++u)
    (pd_test_spk[store.utterance_speaker[u]] ? pd_test : pd_train).push_back(u);

  const Fit pd_fit = fit_ridge(pd_train, 1, [&](size_t u, double* y) {
    y[0] = store.speaker_label[store.utterance_speaker[u]] == 1 ? 1.0 : -1.0;
  });
  size_t pd_correct = 0;
  for (size_t u : pd_test) {
    const int pred = score(pd_fit, 0, u) > 0.0 ? 1 : 0;
    if (pred == store.speaker_label[store.utterance_speaker[u]]) ++pd_correct;
  }

  // Speaker task: identification needs the same speakers on both sides, so
  // hold out the last ~30% of each speaker's utterances instead.
  std::vector<char> is_test(n_utt, 0);
  for (size_t spk = 0; spk < n_spk; ++spk) {
    std::vector<size_t> utts;
    for (size_t u = 0; u < n_utt; ++u)
      if (store.utterance_speaker[u] == spk) utts.push_back(u);
    ADVREP_REQUIRE(utts.size() >= 2, DataError, "speaker ",
                   store.speakers[spk], " has fewer than 2 utterances");
    const size_t n_test = std::max<size_t>(1, utts.size() * 3 / 10);
    for (size_t i = utts.size() - n_test; i < utts.size(); ++i)
      is_test[utts[i]] = 1;
  }
  std::vector<size_t> spk_train, spk_test;
  for (size_t u = 0; u < n_utt; ++u)
    (is_test[u] ? spk_test : spk_train).push_back(u);

  const Fit spk_fit = fit_ridge(spk_train, n_spk, [&](size_t u, double* y) {
    for (size_t s = 0; s < n_spk; ++s)
      y[s] = store.utterance_speaker[u] == s ? 1.0 : -1.0;
  });
  size_t spk_correct = 0;
  for (size_t u : spk_test) {
    double best = -1e300;
    size_t best_s = 0;
    for (size_t s = 0; s < n_spk; ++s) {
      const double sc = score(spk_fit, s, u);
      if (sc > best) {
        best = sc;
        best_s = s;
      }
    }
    if (best_s == store.utterance_speaker[u]) ++spk_correct;
  }

  OracleReport r;
  r.test_utterances = pd_test.size();
  r.pd_accuracy = 100.0 * static_cast<double>(pd_correct) /
                  static_cast<double>(pd_test.size());
  r.speaker_accuracy = 100.0 * static_cast<double>(spk_correct) /
                       static_cast<double>(spk_test.size());
  return r;
}

}  // namespace advrep
