#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advrep/features.hpp"

#include "json.hpp"

namespace advrep {

// Corpus recipe. Identity lives in per-speaker resonator gain signatures
// (strength sigma_id); the pathological class additionally gets a spectral
// tilt and a slowed amplitude modulation (strength sigma_pd); sigma_n is
// fresh per-utterance noise. Everything derives from the seed.
struct SynthSpec {
  size_t n_speakers_per_class = 10;
  size_t utterances_per_speaker = 6;
  double duration_s = 3.0;
  double sigma_id = 1.0;
  double sigma_pd = 0.6;
  double sigma_n = 0.05;
  uint64_t seed = 1234;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
SynthSpec read_synth_spec(const std::string& path);
nlohmann::json synth_spec_to_json(const SynthSpec& spec);

// Writes WAVs under out_dir/<speaker>/<utterance>.wav plus manifest.csv and
// synth_spec.json; returns the manifest rows.
std::vector<ManifestRow> generate_corpus(const SynthSpec& spec,
                                         const std::string& out_dir);

struct OracleReport {
  double pd_accuracy = 0.0;       // percent, on held-out speakers
  double speaker_accuracy = 0.0;  // percent, on held-out utterances
  size_t test_utterances = 0;     // size of the held-out-speaker side
};

// Ridge classifiers on time-averaged mel statistics: the reference ceiling
// the learned pipeline is judged against. The pathology classifier is tested
// on whole held-out speakers (so identity cannot stand in for the class
// cue); the speaker classifier on held-out utterances of enrolled speakers.
OracleReport oracle_classifiers(const FeatureStore& store);

}  // namespace advrep
