#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace advrep {

struct WavData {
  std::vector<float> samples;  // mono, in [-1, 1)
  uint32_t sample_rate = 0;
};

// 16-bit PCM mono only; anything else raises DataError.
WavData read_wav(const std::string& path);

// Clamps to [-1, 1] and quantizes to 16-bit PCM.
void write_wav(const std::string& path, const std::vector<float>& samples,
               uint32_t sample_rate);

}  // namespace advrep
