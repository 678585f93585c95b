#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace advrep {

// Frontend constants: 16 kHz input, 500 ms chunks with 50% overlap turned
// into 126-band log-mel spectrograms of exactly 125 frames.
constexpr uint32_t kSampleRate = 16000;
constexpr size_t kChunkSamples = 8000;
constexpr size_t kChunkHop = 4000;
constexpr size_t kFrameLen = 512;   // 32 ms
constexpr size_t kFrameHop = 64;    // 4 ms
constexpr size_t kMelBands = 126;
constexpr size_t kMelFrames = 125;  // ceil(8000/64) with centered padding

struct VadConfig {
  double frame_ms = 10.0;
  double threshold_db = 25.0;
  size_t hangover_frames = 5;
};

struct Interval {
  size_t begin = 0;  // sample index, inclusive
  size_t end = 0;    // exclusive
};

// Frames of frame_ms, active when frame RMS power in dB is within
// threshold_db of the loudest frame; active runs separated by gaps of at
// most hangover_frames are merged. All-silent input gives an empty list.
std::vector<Interval> energy_vad(const std::vector<float>& samples,
                                 uint32_t sample_rate, const VadConfig& cfg);

std::vector<float> concat_intervals(const std::vector<float>& samples,
                                    const std::vector<Interval>& intervals);

// Start offsets of full 8000-sample windows, hop 4000; trailing partial
// window dropped.
std::vector<size_t> segment_offsets(size_t n_samples);

// In-place radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

double hz_to_mel(double f);
double mel_to_hz(double m);

// Triangular filters with peak 1 and no area normalization, evaluated at the
// one-sided FFT bin centers. weights is [n_mels][n_fft/2 + 1] row-major.
struct MelFilterbank {
  size_t n_mels = 0;
  size_t n_bins = 0;
  std::vector<double> weights;
  std::vector<double> center_hz;
};

MelFilterbank make_mel_filterbank(size_t n_mels, size_t n_fft,
                                  double sample_rate, double fmin,
                                  double fmax);

// One 8000-sample window -> [126][125] log-mel values, row-major with mel
// band as the row. Double precision throughout, log(x + 1e-10) compression.
std::vector<double> mel_spectrogram(const float* window,
                                    const MelFilterbank& fb);

// Per-chunk z-score over all values; a constant chunk maps to zeros and sets
// *constant (when non-null).
std::vector<float> zscore(const std::vector<double>& x,
                          bool* constant = nullptr);

}  // namespace advrep
