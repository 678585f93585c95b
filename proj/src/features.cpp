#include "advrep/features.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "advrep/common.hpp"
#include "advrep/log.hpp"
#include "advrep/wav.hpp"

#include "json.hpp"

namespace advrep {

int label_from_string(const std::string& s) {
  if (s == "neurotypical") return 0;
  if (s == "pathological") return 1;
  throw DataError("unknown label '" + s +
                  "' (expected neurotypical or pathological)");
}

const char* label_to_string(int label) {
  return label == 0 ? "neurotypical" : "pathological";
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  ADVREP_REQUIRE(is.good(), DataError, "cannot open manifest ", path);
  std::vector<ManifestRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("speaker_id,", 0) == 0) continue;  // header
    std::stringstream ss(line);
    ManifestRow r;
    std::string f4;
    ADVREP_REQUIRE(std::getline(ss, r.speaker_id, ',') &&
                       std::getline(ss, r.label, ',') &&
                       std::getline(ss, r.wav_path, ',') &&
                       std::getline(ss, r.utterance_id),
                   DataError, path, ":", lineno,
                   ": expected speaker_id,label,wav_path,utterance_id");
    label_from_string(r.label);  // validate
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot open ", path, " for writing");
  os << "speaker_id,label,wav_path,utterance_id\n";
  for (const auto& r : rows)
    os << r.speaker_id << "," << r.label << "," << r.wav_path << ","
       << r.utterance_id << "\n";
  ADVREP_REQUIRE(os.good(), DataError, "write failed for ", path);
}

FeatureStore featurize(const std::vector<ManifestRow>& manifest,
                       const FeaturizeOptions& opts, FeaturizeReport* report) {
  std::vector<ManifestRow> rows = manifest;
  std::sort(rows.begin(), rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) {
              if (a.speaker_id != b.speaker_id)
                return a.speaker_id < b.speaker_id;
              return a.utterance_id < b.utterance_id;
            });
  for (size_t i = 1; i < rows.size(); ++i)
    ADVREP_REQUIRE(rows[i - 1].speaker_id != rows[i].speaker_id ||
                       rows[i - 1].utterance_id != rows[i].utterance_id,
                   DataError, "duplicate utterance ", rows[i].speaker_id, "/",
                   rows[i].utterance_id, " in manifest");

  FeatureStore store;
  const MelFilterbank fb =
      make_mel_filterbank(kMelBands, kFrameLen, kSampleRate, 0.0, 8000.0);

  auto fail_or_skip = [&](const std::string& msg) {
    if (opts.fail_on_error) throw DataError(msg);
    LOG_WARN << msg << " (skipped)";
    if (report) {
      ++report->utterances_skipped;
      report->errors.push_back(msg);
    }
  };

  for (const auto& row : rows) {
    const int label = label_from_string(row.label);
    std::vector<float> speech;
    try {
      WavData wav = read_wav(row.wav_path);
      ADVREP_REQUIRE(wav.sample_rate == kSampleRate, DataError, row.wav_path,
                     ": sample rate ", wav.sample_rate, ", expected ",
                     kSampleRate);
      const auto intervals = energy_vad(wav.samples, wav.sample_rate, opts.vad);
      speech = concat_intervals(wav.samples, intervals);
    } catch (const DataError& e) {
      fail_or_skip(e.what());
      continue;
    }
    const auto offsets = segment_offsets(speech.size());
    if (offsets.empty()) {
      fail_or_skip(row.wav_path + ": no 500 ms of speech after VAD");
      continue;
    }

    uint32_t spk_idx;
    {
      auto it = std::find(store.speakers.begin(), store.speakers.end(),
                          row.speaker_id);
      if (it == store.speakers.end()) {
        spk_idx = static_cast<uint32_t>(store.speakers.size());
        store.speakers.push_back(row.speaker_id);
        store.speaker_label.push_back(static_cast<uint8_t>(label));
      } else {
        spk_idx = static_cast<uint32_t>(it - store.speakers.begin());
        ADVREP_REQUIRE(store.speaker_label[spk_idx] == label, DataError,
                       "speaker ", row.speaker_id,
                       " appears with conflicting labels");
      }
    }
    const uint32_t utt_idx = static_cast<uint32_t>(store.utterances.size());
    store.utterances.push_back(row.utterance_id);
    store.utterance_speaker.push_back(spk_idx);

    for (size_t c = 0; c < offsets.size(); ++c) {
      const std::vector<double> mel =
          mel_spectrogram(speech.data() + offsets[c], fb);
      bool constant = false;
      std::vector<float> norm = zscore(mel, &constant);
      if (constant)
        LOG_WARN << row.wav_path << " chunk " << c
                 << " is constant after the mel frontend";
      FeatureStore::Chunk ch;
      ch.speaker = spk_idx;
      ch.label = static_cast<uint8_t>(label);
      ch.utterance = utt_idx;
      ch.chunk_index = static_cast<uint32_t>(c);
      store.chunks.push_back(ch);
      store.data.insert(store.data.end(), norm.begin(), norm.end());
    }
    if (report) ++report->utterances_done;
  }
  return store;
}

namespace {

constexpr char kMagic[4] = {'A', 'R', 'F', 'S'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  ADVREP_REQUIRE(is.good(), DataError, "feature store truncated");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
  const uint32_t n = get_u32(is);
  ADVREP_REQUIRE(n < 65536, DataError, "implausible string in feature store");
  std::string s(n, '\0');
  is.read(s.data(), n);
  ADVREP_REQUIRE(is.good(), DataError, "feature store truncated");
  return s;
}

}  // namespace

void save_store(const std::string& path, const FeatureStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot open ", path, " for writing");
  os.write(kMagic, 4);
  put_u32(os, 1);  // version
  put_u32(os, static_cast<uint32_t>(store.speakers.size()));
  put_u32(os, static_cast<uint32_t>(store.utterances.size()));
  put_u32(os, static_cast<uint32_t>(store.chunks.size()));
  put_u32(os, static_cast<uint32_t>(store.mel));
  put_u32(os, static_cast<uint32_t>(store.frames));
  for (size_t i = 0; i < store.speakers.size(); ++i) {
    put_str(os, store.speakers[i]);
    os.put(static_cast<char>(store.speaker_label[i]));
  }
  for (size_t i = 0; i < store.utterances.size(); ++i) {
    put_str(os, store.utterances[i]);
    put_u32(os, store.utterance_speaker[i]);
  }
  ADVREP_REQUIRE(store.data.size() ==
                     store.chunks.size() * store.chunk_size(),
                 InternalError, "feature store data size mismatch");
  for (size_t i = 0; i < store.chunks.size(); ++i) {
    const auto& c = store.chunks[i];
    put_u32(os, c.speaker);
    os.put(static_cast<char>(c.label));
    put_u32(os, c.utterance);
    put_u32(os, c.chunk_index);
    for (size_t j = 0; j < store.chunk_size(); ++j) {
      uint32_t bits;
      std::memcpy(&bits, &store.data[i * store.chunk_size() + j], 4);
      put_u32(os, bits);
    }
  }
  ADVREP_REQUIRE(os.good(), DataError, "write failed for ", path);

  nlohmann::json idx;
  idx["version"] = 1;
  idx["mel"] = store.mel;
  idx["frames"] = store.frames;
  idx["n_chunks"] = store.chunks.size();
  nlohmann::json spk = nlohmann::json::array();
  for (size_t i = 0; i < store.speakers.size(); ++i) {
    size_t n_chunks = 0, n_utts = 0;
    for (const auto& c : store.chunks)
      if (c.speaker == i) ++n_chunks;
    for (uint32_t u : store.utterance_speaker)
      if (u == i) ++n_utts;
    spk.push_back({{"id", store.speakers[i]},
                   {"label", label_to_string(store.speaker_label[i])},
                   {"utterances", n_utts},
                   {"chunks", n_chunks}});
  }
  idx["speakers"] = spk;
  std::ofstream js(path + ".index.json", std::ios::trunc);
  ADVREP_REQUIRE(js.good(), DataError, "cannot write sidecar for ", path);
  js << idx.dump(2) << "\n";
}

FeatureStore load_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ADVREP_REQUIRE(is.good(), DataError, "cannot open ", path);
  char magic[4];
  is.read(magic, 4);
  ADVREP_REQUIRE(is.good() && std::memcmp(magic, kMagic, 4) == 0, DataError,
                 path, " is not a feature store");
  const uint32_t version = get_u32(is);
  ADVREP_REQUIRE(version == 1, DataError, "unsupported feature store version ",
                 version);
  FeatureStore store;
  const uint32_t n_spk = get_u32(is);
  const uint32_t n_utt = get_u32(is);
  const uint32_t n_chunks = get_u32(is);
  store.mel = get_u32(is);
  store.frames = get_u32(is);
  ADVREP_REQUIRE(store.mel > 0 && store.frames > 0, DataError,
                 "empty chunk shape in ", path);
  for (uint32_t i = 0; i < n_spk; ++i) {
    store.speakers.push_back(get_str(is));
    const int l = is.get();
    ADVREP_REQUIRE(l == 0 || l == 1, DataError, "bad label byte in ", path);
    store.speaker_label.push_back(static_cast<uint8_t>(l));
  }
  for (uint32_t i = 0; i < n_utt; ++i) {
    store.utterances.push_back(get_str(is));
    const uint32_t s = get_u32(is);
    ADVREP_REQUIRE(s < n_spk, DataError, "bad speaker index in ", path);
    store.utterance_speaker.push_back(s);
  }
  store.data.resize(static_cast<size_t>(n_chunks) * store.chunk_size());
  for (uint32_t i = 0; i < n_chunks; ++i) {
    FeatureStore::Chunk c;
    c.speaker = get_u32(is);
    const int l = is.get();
    ADVREP_REQUIRE(l == 0 || l == 1, DataError, "bad chunk label in ", path);
    c.label = static_cast<uint8_t>(l);
    c.utterance = get_u32(is);
    c.chunk_index = get_u32(is);
    ADVREP_REQUIRE(c.speaker < n_spk && c.utterance < n_utt, DataError,
                   "bad chunk reference in ", path);
    store.chunks.push_back(c);
    for (size_t j = 0; j < store.chunk_size(); ++j) {
      const uint32_t bits = get_u32(is);
      std::memcpy(&store.data[static_cast<size_t>(i) * store.chunk_size() + j],
                  &bits, 4);
    }
  }
  return store;
}

}  // namespace advrep
