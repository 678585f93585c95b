#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advrep/dsp.hpp"

namespace advrep {

// One manifest row: speaker_id,label,wav_path,utterance_id.
struct ManifestRow {
  std::string speaker_id;
  std::string label;  // "neurotypical" or "pathological"
  std::string wav_path;
  std::string utterance_id;
};

std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows);

// All chunks of a corpus plus the speaker/utterance tables they reference.
// Chunk i's values live at data[i * mel * frames .. ).
struct FeatureStore {
  struct Chunk {
    uint32_t speaker = 0;
    uint8_t label = 0;  // 1 = pathological
    uint32_t utterance = 0;
    uint32_t chunk_index = 0;
  };

  size_t mel = kMelBands;
  size_t frames = kMelFrames;
  std::vector<std::string> speakers;
  std::vector<uint8_t> speaker_label;
  std::vector<std::string> utterances;
  std::vector<uint32_t> utterance_speaker;
  std::vector<Chunk> chunks;
  std::vector<float> data;

  size_t chunk_size() const { return mel * frames; }
  const float* chunk_data(size_t i) const { return data.data() + i * chunk_size(); }
};

struct FeaturizeOptions {
  VadConfig vad;
  bool fail_on_error = false;  // otherwise skip bad files with a warning
};

struct FeaturizeReport {
  size_t utterances_done = 0;
  size_t utterances_skipped = 0;
  std::vector<std::string> errors;  // one line per skipped file
};

// Runs VAD -> segmentation -> log-mel -> per-chunk z-score over every
// manifest row. Rows are processed in (speaker, utterance) order so the
// store layout is independent of manifest row order.
FeatureStore featurize(const std::vector<ManifestRow>& manifest,
                       const FeaturizeOptions& opts, FeaturizeReport* report);

// Binary store + structured sidecar index at <path> and <path>.index.json.
void save_store(const std::string& path, const FeatureStore& store);
FeatureStore load_store(const std::string& path);

int label_from_string(const std::string& s);
const char* label_to_string(int label);

}  // namespace advrep
