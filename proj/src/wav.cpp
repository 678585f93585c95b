#include "advrep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "advrep/common.hpp"

namespace advrep {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

void wr_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ADVREP_REQUIRE(is.good(), DataError, "cannot open ", path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  ADVREP_REQUIRE(buf.size() >= 44, DataError, path, ": too short for a WAV");
  ADVREP_REQUIRE(std::memcmp(buf.data(), "RIFF", 4) == 0 &&
                     std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
                 DataError, path, ": not a RIFF/WAVE file");

  WavData out;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const uint32_t sz = rd_u32(buf.data() + pos + 4);
    const size_t body = pos + 8;
    ADVREP_REQUIRE(body + sz <= buf.size(), DataError, path,
                   ": truncated chunk '", std::string(id, 4), "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      ADVREP_REQUIRE(sz >= 16, DataError, path, ": malformed fmt chunk");
      const uint16_t format = rd_u16(buf.data() + body);
      const uint16_t channels = rd_u16(buf.data() + body + 2);
      const uint32_t rate = rd_u32(buf.data() + body + 4);
      const uint16_t bits = rd_u16(buf.data() + body + 14);
      ADVREP_REQUIRE(format == 1, DataError, path,
                     ": only PCM supported, got format ", format);
      ADVREP_REQUIRE(channels == 1, DataError, path,
                     ": only mono supported, got ", channels, " channels");
      ADVREP_REQUIRE(bits == 16, DataError, path,
                     ": only 16-bit supported, got ", bits);
      out.sample_rate = rate;
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      ADVREP_REQUIRE(have_fmt, DataError, path, ": data before fmt chunk");
      const size_t n = sz / 2;
      out.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(
            rd_u16(buf.data() + body + 2 * i));
        out.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      return out;
    }
    pos = body + sz + (sz & 1);
  }
  throw DataError(path + ": no data chunk found");
}

void write_wav(const std::string& path, const std::vector<float>& samples,
               uint32_t sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot open ", path, " for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1);  // PCM
  wr_u16(os, 1);  // mono
  wr_u32(os, sample_rate);
  wr_u32(os, sample_rate * 2);  // byte rate
  wr_u16(os, 2);                // block align
  wr_u16(os, 16);               // bits
  os.write("data", 4);
  wr_u32(os, data_bytes);
  for (float v : samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    const int16_t s = static_cast<int16_t>(std::lrintf(c * 32767.0f));
    wr_u16(os, static_cast<uint16_t>(s));
  }
  ADVREP_REQUIRE(os.good(), DataError, "write failed for ", path);
}

}  // namespace advrep
