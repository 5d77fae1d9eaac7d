// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_MIXING_H_
#define NHANS_MIXING_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nhans/audio_io.h"

namespace nhans {

/// Audio with provenance. source_id identifies the originating file (or
/// synthetic item); label is the noise category or speaker id.
struct LabeledAudio {
  AudioBuffer audio;
  std::string source_id;
  std::string label;
  char gender = 0;  // 'f', 'm' or 0 when unknown
};

/// Loops (with a linear crossfade) or truncates to exactly length samples.
AudioBuffer fit_length(const AudioBuffer& noise, std::size_t length,
                       double crossfade_seconds = 0.01);

struct MixResult {
  AudioBuffer noisy;
  double gain = 0.0;
  AudioBuffer scaled_noise;  // gain * fitted noise
};

/// noisy = clean + gain * noise, gain = rms(clean) / (rms(noise) 10^(snr/20)).
/// Throws Error(kZeroEnergy) if either input has zero RMS.
MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db);

/// 20 log10(rms(signal) / rms(noise)).
double snr_db(const AudioBuffer& signal, const AudioBuffer& noise);

enum class ReferenceMode {
  kDisjointSegment,  // reference cut from a non-overlapping part of the same file
  kSameCategory,     // reference taken from another file of the same category
};

struct SegmentInfo {
  std::size_t mix_offset = 0;
  std::size_t mix_length = 0;
  std::size_t reference_offset = 0;
  std::size_t reference_length = 0;
  bool same_file = true;
};

struct MixTuple {
  AudioBuffer noisy;
  AudioBuffer plus_rec;
  AudioBuffer minus_rec;
  AudioBuffer target;

  AudioBuffer clean;
  AudioBuffer plus_component;   // g+ * positive noise segment (zeros if none)
  AudioBuffer minus_component;  // g- * negative noise segment

  std::optional<double> plus_snr_db;
  std::optional<double> minus_snr_db;
  double plus_gain = 0.0;
  double minus_gain = 0.0;
  std::optional<SegmentInfo> plus_segments;
  std::optional<SegmentInfo> minus_segments;
  std::string tag;  // gender pairing for separation tuples
};

struct NoiseSource {
  LabeledAudio recording;
  /// Used for the reference in kSameCategory mode.
  std::optional<LabeledAudio> alternative;
};

struct SelectiveMixOptions {
  double reference_seconds = 1.0;
  ReferenceMode mode = ReferenceMode::kDisjointSegment;
};

/// noisy = clean + g+ pos + g- neg, target = clean + g+ pos. A silent
/// positive source degenerates to a plain denoising tuple.
MixTuple make_selective_tuple(const AudioBuffer& clean, const NoiseSource& pos_noise,
                              const NoiseSource& neg_noise, double plus_snr_db,
                              double minus_snr_db, const SelectiveMixOptions& options,
                              std::mt19937_64& rng);

/// make_selective_tuple without a positive noise.
MixTuple make_denoise_tuple(const AudioBuffer& clean, const NoiseSource& neg_noise,
                            double snr_db, const SelectiveMixOptions& options,
                            std::mt19937_64& rng);

/// "f+f", "m+m" or "f+m" (order-insensitive); empty when either is unknown.
std::string gender_pair_tag(char a, char b);

/// noisy = a + b at 0 dB relative level (b rescaled), target = a,
/// plus_rec = ref_a, minus_rec = ref_b.
MixTuple make_separation_tuple(const LabeledAudio& speaker_a, const LabeledAudio& speaker_b,
                               const LabeledAudio& ref_a, const LabeledAudio& ref_b);

// Corpus directories and manifests.

enum class CorpusRole { kClean, kNoise, kSpeaker };
enum class Split { kTrain, kDev, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::filesystem::path path;
  double duration = 0.0;
  CorpusRole role = CorpusRole::kClean;
  std::string label;
  Split split = Split::kTrain;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
};

/// Recursively collects *.wav under root (sorted). label is the name of the
/// file's parent directory relative to root (empty for files directly in it).
CorpusManifest scan_corpus(const std::filesystem::path& root, CorpusRole role);

/// Scans root/clean, root/noise and root/speakers, whichever exist.
CorpusManifest scan_corpus_tree(const std::filesystem::path& root);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

/// Deterministic in (seed, sorted paths); each (role, label) group is split
/// separately so every split sees every category and speaker.
/// Returns {train, dev, test}.
std::array<CorpusManifest, 3> split_manifest(const CorpusManifest& manifest,
                                             const SplitRatios& ratios, std::uint64_t seed);

/// Line format: <split>\t<role>\t<path>\t<duration>, role is "clean",
/// "noise:<category>" or "speaker:<id>".
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

/// Audio held in memory at 16 kHz mono, grouped by role.
struct Corpus {
  std::vector<LabeledAudio> clean;
  std::vector<LabeledAudio> noise;
  std::vector<LabeledAudio> speech;  // labeled by speaker id
};

/// Loads every entry of the given split. Speaker ids that begin with "f_" or
/// "m_" carry their gender.
Corpus load_corpus(const CorpusManifest& manifest, Split split);

}  // namespace nhans

#endif  // NHANS_MIXING_H_
