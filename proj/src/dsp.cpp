#include "advrep/dsp.hpp"

#include <cmath>

#include "advrep/common.hpp"

namespace advrep {

std::vector<Interval> energy_vad(const std::vector<float>& samples,
                                 uint32_t sample_rate, const VadConfig& cfg) {
  ADVREP_REQUIRE(!samples.empty(), DataError, "energy_vad on empty signal");
  const size_t flen = static_cast<size_t>(
      cfg.frame_ms * static_cast<double>(sample_rate) / 1000.0);
  ADVREP_REQUIRE(flen > 0, ConfigError, "vad frame too short");
  const size_t n_frames = samples.size() / flen;
  if (n_frames == 0) return {};

  std::vector<double> power(n_frames);
  double max_power = 0.0;
  for (size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (size_t i = 0; i < flen; ++i) {
      const double v = samples[f * flen + i];
      acc += v * v;
    }
    power[f] = acc / static_cast<double>(flen);
    max_power = std::max(max_power, power[f]);
  }
  if (max_power <= 0.0) return {};

  const double gate = max_power * std::pow(10.0, -cfg.threshold_db / 10.0);
  std::vector<char> active(n_frames);
  for (size_t f = 0; f < n_frames; ++f) active[f] = power[f] > gate ? 1 : 0;

  // Runs of active frames; gaps of at most hangover_frames are bridged.
  std::vector<Interval> out;
  size_t f = 0;
  while (f < n_frames) {
    if (!active[f]) {
      ++f;
      continue;
    }
    size_t start = f;
    size_t last = f;
    size_t g = f + 1;
    while (g < n_frames) {
      if (active[g]) {
        last = g;
        ++g;
      } else if (g - last <= cfg.hangover_frames) {
        ++g;
      } else {
        break;
      }
    }
    Interval iv;
    iv.begin = start * flen;
    iv.end = std::min((last + 1) * flen, samples.size());
    out.push_back(iv);
    f = last + 1;
  }
  return out;
}

std::vector<float> concat_intervals(const std::vector<float>& samples,
                                    const std::vector<Interval>& intervals) {
  std::vector<float> out;
  for (const auto& iv : intervals) {
    ADVREP_CHECK(iv.begin <= iv.end && iv.end <= samples.size(),
                 "interval out of range");
    out.insert(out.end(), samples.begin() + static_cast<std::ptrdiff_t>(iv.begin),
               samples.begin() + static_cast<std::ptrdiff_t>(iv.end));
  }
  return out;
}

std::vector<size_t> segment_offsets(size_t n_samples) {
  std::vector<size_t> offsets;
  if (n_samples < kChunkSamples) return offsets;
  for (size_t off = 0; off + kChunkSamples <= n_samples; off += kChunkHop)
    offsets.push_back(off);
  return offsets;
}

void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  ADVREP_REQUIRE(n > 0 && (n & (n - 1)) == 0, ConfigError,
                 "fft size must be a power of two, got ", n);
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wlen = std::polar(1.0, ang);
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

MelFilterbank make_mel_filterbank(size_t n_mels, size_t n_fft,
                                  double sample_rate, double fmin,
                                  double fmax) {
  ADVREP_REQUIRE(n_mels > 0 && fmax > fmin && fmin >= 0.0, ConfigError,
                 "bad mel filterbank parameters");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = n_fft / 2 + 1;
  fb.weights.assign(n_mels * fb.n_bins, 0.0);
  fb.center_hz.resize(n_mels);

  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));

  const double bin_hz = sample_rate / static_cast<double>(n_fft);
  for (size_t m = 0; m < n_mels; ++m) {
    const double fl = edges[m], fc = edges[m + 1], fr = edges[m + 2];
    fb.center_hz[m] = fc;
    for (size_t k = 0; k < fb.n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > fl && f < fc)
        w = (f - fl) / (fc - fl);
      else if (f == fc)
        w = 1.0;
      else if (f > fc && f < fr)
        w = (fr - f) / (fr - fc);
      fb.weights[m * fb.n_bins + k] = w;
    }
  }
  return fb;
}

std::vector<double> mel_spectrogram(const float* window,
                                    const MelFilterbank& fb) {
  ADVREP_REQUIRE(fb.n_bins == kFrameLen / 2 + 1, ConfigError,
                 "filterbank does not match the frame length");
  // Reflection padding: 256 left, 192 right, so the 125 frames are centered
  // at samples 0, 64, ..., 7936.
  constexpr size_t kPadLeft = kFrameLen / 2;
  constexpr size_t kPadRight = 192;
  constexpr size_t kPadded = kPadLeft + kChunkSamples + kPadRight;
  static_assert((kPadded - kFrameLen) / kFrameHop + 1 == kMelFrames);

  std::vector<double> padded(kPadded);
  for (size_t i = 0; i < kPadLeft; ++i) padded[i] = window[kPadLeft - i];
  for (size_t i = 0; i < kChunkSamples; ++i) padded[kPadLeft + i] = window[i];
  for (size_t j = 0; j < kPadRight; ++j)
    padded[kPadLeft + kChunkSamples + j] = window[kChunkSamples - 2 - j];

  std::vector<double> hamming(kFrameLen);
  for (size_t n = 0; n < kFrameLen; ++n)
    hamming[n] = 0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 *
                                        static_cast<double>(n) /
                                        static_cast<double>(kFrameLen - 1));

  std::vector<double> out(kMelBands * kMelFrames);
  std::vector<std::complex<double>> buf(kFrameLen);
  std::vector<double> power(fb.n_bins);
  for (size_t t = 0; t < kMelFrames; ++t) {
    const double* src = padded.data() + t * kFrameHop;
    for (size_t n = 0; n < kFrameLen; ++n)
      buf[n] = std::complex<double>(src[n] * hamming[n], 0.0);
    fft_inplace(buf);
    for (size_t k = 0; k < fb.n_bins; ++k) power[k] = std::norm(buf[k]);
    for (size_t m = 0; m < kMelBands; ++m) {
      const double* w = fb.weights.data() + m * fb.n_bins;
      double acc = 0.0;
      for (size_t k = 0; k < fb.n_bins; ++k) acc += w[k] * power[k];
      out[m * kMelFrames + t] = std::log(acc + 1e-10);
    }
  }
  return out;
}

std::vector<float> zscore(const std::vector<double>& x, bool* constant) {
  ADVREP_REQUIRE(!x.empty(), DataError, "zscore on empty input");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(x.size());
  const double sd = std::sqrt(var);

  std::vector<float> out(x.size());
  if (sd < 1e-8) {
    if (constant) *constant = true;
    return out;  // zeros
  }
  if (constant) *constant = false;
  for (size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>((x[i] - mean) / sd);
  return out;
}

}  // namespace advrep
