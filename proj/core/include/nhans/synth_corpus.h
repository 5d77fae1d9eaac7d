// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Bundled desk corpus: harmonic speech-like voices with vibrato and
// syllabic envelopes, a handful of stationary and modulated noise
// categories, and a fixed set of synthetic speakers for separation.

#ifndef NHANS_SYNTH_CORPUS_H_
#define NHANS_SYNTH_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nhans/mixing.h"

namespace nhans::synth {

struct VoiceProfile {
  std::string id;
  char gender = 0;
  double f0_hz = 150.0;
  double f0_spread = 0.15;     // per-syllable pitch variation, octaves
  double vibrato_hz = 5.5;
  double vibrato_depth = 0.03;
  double formant_scale = 1.0;  // scales the vowel formant table
  double tilt_db_per_octave = -6.0;
};

inline const std::vector<std::string>& noise_categories() {
  static const std::vector<std::string> kCategories = {
      "white", "pink", "modulated", "tone", "narrowband", "chirp"};
  return kCategories;
}

/// Fixed speaker set used for separation (first half male, second female).
std::vector<VoiceProfile> speaker_profiles();

AudioBuffer voice(const VoiceProfile& profile, double seconds, std::mt19937_64& rng,
                  int sample_rate = kModelSampleRate);

/// Random voice (for clean material) drawn around the human pitch range.
VoiceProfile random_voice(std::mt19937_64& rng);

AudioBuffer noise(const std::string& category, double seconds, std::mt19937_64& rng,
                  int sample_rate = kModelSampleRate);

AudioBuffer tone(double hz, double seconds, double amplitude,
                 int sample_rate = kModelSampleRate);

struct CorpusOptions {
  int clean_utterances = 40;
  int noises_per_category = 6;
  int utterances_per_speaker = 10;
  double utterance_seconds = 3.0;
  double noise_seconds = 4.0;
  std::vector<std::string> categories;  // noise categories to generate, empty: all
};

/// Deterministic in (split, seed). Speaker identities are shared by all
/// splits; utterances and noise instances differ.
Corpus make_corpus(Split split, std::uint64_t seed, const CorpusOptions& options = {});

/// Writes train/dev/test material as clean/, noise/<category>/ and
/// speakers/<id>/ WAV files plus manifest.tsv under root.
CorpusManifest write_corpus(const std::filesystem::path& root, std::uint64_t seed,
                            const CorpusOptions& options = {});

}  // namespace nhans::synth

#endif  // NHANS_SYNTH_CORPUS_H_
