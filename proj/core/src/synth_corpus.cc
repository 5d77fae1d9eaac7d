// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/synth_corpus.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "nhans/error.h"

namespace nhans::synth {

namespace fs = std::filesystem;

namespace {

struct Vowel {
  double f1, f2, f3;
};

constexpr std::array<Vowel, 5> kVowels = {{
    {730, 1090, 2440},  // a
    {270, 2290, 3010},  // i
    {300, 870, 2240},   // u
    {530, 1840, 2480},  // e
    {570, 840, 2410},   // o
}};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void scale_to_rms(std::vector<double>& x, double target) {
  const double r = rms(x);
  if (r <= 0.0) return;
  for (double& s : x) s *= target / r;
}

double raised_cosine_envelope(std::size_t i, std::size_t len, std::size_t ramp) {
  ramp = std::min(ramp, len / 2);
  if (ramp == 0) return 1.0;
  if (i < ramp) return 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(i) / ramp);
  if (i >= len - ramp) {
    return 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(len - 1 - i) / ramp);
  }
  return 1.0;
}

}  // namespace

std::vector<VoiceProfile> speaker_profiles() {
  return {
      {"m_s01", 'm', 100.0, 0.08, 5.0, 0.025, 1.00, -7.0},
      {"m_s02", 'm', 122.0, 0.08, 6.0, 0.030, 0.92, -5.0},
      {"m_s03", 'm', 143.0, 0.08, 4.5, 0.020, 1.06, -8.0},
      {"f_s04", 'f', 187.0, 0.08, 5.5, 0.030, 1.16, -6.0},
      {"f_s05", 'f', 213.0, 0.08, 6.5, 0.025, 1.22, -4.5},
      {"f_s06", 'f', 238.0, 0.08, 5.0, 0.035, 1.10, -7.0},
  };
}

VoiceProfile random_voice(std::mt19937_64& rng) {
  VoiceProfile p;
  p.id = "random";
  p.f0_hz = std::exp(uniform(rng, std::log(90.0), std::log(260.0)));
  p.gender = p.f0_hz < 165.0 ? 'm' : 'f';
  p.f0_spread = 0.15;
  p.vibrato_hz = uniform(rng, 4.0, 7.0);
  p.vibrato_depth = uniform(rng, 0.01, 0.04);
  p.formant_scale = uniform(rng, 0.9, 1.25);
  p.tilt_db_per_octave = uniform(rng, -9.0, -4.0);
  return p;
}

AudioBuffer voice(const VoiceProfile& profile, double seconds, std::mt19937_64& rng,
                  int sample_rate) {
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  std::vector<double> out(n, 0.0);
  const double sr = sample_rate;
  const double max_harmonic_hz = std::min(4500.0, 0.45 * sr);
  std::size_t cursor = static_cast<std::size_t>(uniform(rng, 0.02, 0.1) * sr);
  std::uniform_int_distribution<std::size_t> pick_vowel(0, kVowels.size() - 1);

  while (cursor < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.12, 0.32) * sr);
    const auto gap = static_cast<std::size_t>(uniform(rng, 0.03, 0.12) * sr);
    const Vowel& v = kVowels[pick_vowel(rng)];
    const double formants[3] = {v.f1 * profile.formant_scale, v.f2 * profile.formant_scale,
                                v.f3 * profile.formant_scale};
    const double bandwidths[3] = {90.0, 110.0, 150.0};
    const double f0 = profile.f0_hz * std::pow(2.0, profile.f0_spread * uniform(rng, -1.0, 1.0));
    const double glide = uniform(rng, -0.08, 0.08);
    const double vib_phase = uniform(rng, 0.0, 2.0 * M_PI);
    const double level = std::pow(10.0, uniform(rng, -4.0, 0.0) / 20.0);
    const int harmonics = std::max(1, static_cast<int>(max_harmonic_hz / f0));

    std::vector<double> amp(static_cast<std::size_t>(harmonics));
    for (int k = 1; k <= harmonics; ++k) {
      const double f = k * f0;
      double resonance = 0.08;
      for (int j = 0; j < 3; ++j) {
        const double d = (f - formants[j]) / bandwidths[j];
        resonance += std::exp(-0.5 * d * d) / (1.0 + j);
      }
      amp[static_cast<std::size_t>(k - 1)] =
          std::pow(10.0, profile.tilt_db_per_octave * std::log2(static_cast<double>(k)) / 20.0) *
          resonance;
    }

    double phase = uniform(rng, 0.0, 2.0 * M_PI);
    const auto ramp = static_cast<std::size_t>(0.025 * sr);
    for (std::size_t i = 0; i < len && cursor + i < n; ++i) {
      const double tt = static_cast<double>(i) / sr;
      const double frac = static_cast<double>(i) / static_cast<double>(len);
      const double f = f0 * (1.0 + glide * frac) *
                       (1.0 + profile.vibrato_depth *
                                  std::sin(2.0 * M_PI * profile.vibrato_hz * tt + vib_phase));
      phase += 2.0 * M_PI * f / sr;
      const std::complex<double> z = std::polar(1.0, phase);
      std::complex<double> zk = z;
      double s = 0.0;
      for (int k = 0; k < harmonics; ++k) {
        s += amp[static_cast<std::size_t>(k)] * zk.imag();
        zk *= z;
      }
      out[cursor + i] += level * raised_cosine_envelope(i, len, ramp) * s;
    }
    cursor += len + gap;
  }
  scale_to_rms(out, 0.1 * std::pow(10.0, uniform(rng, -6.0, 0.0) / 20.0));
  return AudioBuffer(std::move(out), sample_rate, 1);
}

AudioBuffer tone(double hz, double seconds, double amplitude, int sample_rate) {
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = amplitude * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sample_rate);
  }
  return AudioBuffer(std::move(out), sample_rate, 1);
}

AudioBuffer noise(const std::string& category, double seconds, std::mt19937_64& rng,
                  int sample_rate) {
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  const double sr = sample_rate;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(n, 0.0);

  auto pink = [&](std::vector<double>& x) {
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (double& s : x) {
      const double w = gauss(rng);
      b0 = 0.99886 * b0 + w * 0.0555179;
      b1 = 0.99332 * b1 + w * 0.0750759;
      b2 = 0.96900 * b2 + w * 0.1538520;
      b3 = 0.86650 * b3 + w * 0.3104856;
      b4 = 0.55000 * b4 + w * 0.5329522;
      b5 = -0.7616 * b5 - w * 0.0168980;
      s = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
      b6 = w * 0.115926;
    }
  };

  if (category == "white") {
    for (double& s : out) s = gauss(rng);
  } else if (category == "pink") {
    pink(out);
  } else if (category == "modulated") {
    pink(out);
    const double fm = uniform(rng, 1.5, 6.0);
    const double ph = uniform(rng, 0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] *= 1.0 + 0.8 * std::sin(2.0 * M_PI * fm * static_cast<double>(i) / sr + ph);
    }
  } else if (category == "tone") {
    const double hz = uniform(rng, 250.0, 3500.0);
    const double ph = uniform(rng, 0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::sin(2.0 * M_PI * hz * static_cast<double>(i) / sr + ph);
    }
  } else if (category == "narrowband") {
    // Two-pole resonator driven by white noise.
    const double fc = uniform(rng, 400.0, 3500.0);
    const double r = 0.985;
    const double a1 = 2.0 * r * std::cos(2.0 * M_PI * fc / sr);
    const double a2 = -r * r;
    double y1 = 0.0, y2 = 0.0;
    for (double& s : out) {
      const double y = gauss(rng) + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = y;
      s = y;
    }
  } else if (category == "chirp") {
    const double f1 = uniform(rng, 300.0, 1000.0);
    const double f2 = uniform(rng, 1500.0, 3500.0);
    const double period = uniform(rng, 0.5, 1.5);
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pos = std::fmod(static_cast<double>(i) / sr, period) / period;
      phase += 2.0 * M_PI * (f1 + (f2 - f1) * pos) / sr;
      out[i] = std::sin(phase);
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown noise category '" + category + "'");
  }
  scale_to_rms(out, uniform(rng, 0.03, 0.1));
  return AudioBuffer(std::move(out), sample_rate, 1);
}

Corpus make_corpus(Split split, std::uint64_t seed, const CorpusOptions& options) {
  const auto split_index = static_cast<std::uint64_t>(split);
  std::seed_seq seq{seed, split_index, std::uint64_t{0x6e68616e73}};
  std::mt19937_64 rng(seq);
  const bool train = split == Split::kTrain;
  const int clean_count = train ? options.clean_utterances
                                : std::max(4, options.clean_utterances / 4);
  const int noise_count = train ? options.noises_per_category
                                : std::max(2, options.noises_per_category / 3);
  const int utt_count = train ? options.utterances_per_speaker
                              : std::max(3, options.utterances_per_speaker / 3);
  const std::string prefix = "synth:" + std::string(to_string(split)) + ":";

  Corpus c;
  for (int i = 0; i < clean_count; ++i) {
    VoiceProfile p = random_voice(rng);
    LabeledAudio item;
    item.audio = voice(p, options.utterance_seconds, rng);
    item.source_id = prefix + "clean:" + std::to_string(i);
    item.gender = p.gender;
    c.clean.push_back(std::move(item));
  }
  for (const auto& category : noise_categories()) {
    if (!options.categories.empty() &&
        std::find(options.categories.begin(), options.categories.end(), category) ==
            options.categories.end()) {
      continue;
    }
    for (int i = 0; i < noise_count; ++i) {
      LabeledAudio item;
      item.audio = noise(category, options.noise_seconds, rng);
      item.source_id = prefix + "noise:" + category + ":" + std::to_string(i);
      item.label = category;
      c.noise.push_back(std::move(item));
    }
  }
  for (const auto& profile : speaker_profiles()) {
    for (int i = 0; i < utt_count; ++i) {
      LabeledAudio item;
      item.audio = voice(profile, options.utterance_seconds, rng);
      item.source_id = prefix + "speaker:" + profile.id + ":" + std::to_string(i);
      item.label = profile.id;
      item.gender = profile.gender;
      c.speech.push_back(std::move(item));
    }
  }
  return c;
}

CorpusManifest write_corpus(const fs::path& root, std::uint64_t seed,
                            const CorpusOptions& options) {
  CorpusManifest manifest;
  manifest.seed = seed;
  for (Split split : {Split::kTrain, Split::kDev, Split::kTest}) {
    Corpus c = make_corpus(split, seed, options);
    const std::string tag(to_string(split));
    auto emit = [&](const LabeledAudio& item, const fs::path& rel, CorpusRole role) {
      fs::create_directories(root / rel.parent_path());
      write_wav(root / rel, item.audio, WavSampleFormat::kPcm16);
      ManifestEntry e;
      e.path = rel;
      e.duration = item.audio.duration_seconds();
      e.role = role;
      e.label = item.label;
      e.split = split;
      manifest.entries.push_back(std::move(e));
    };
    for (std::size_t i = 0; i < c.clean.size(); ++i) {
      emit(c.clean[i], fs::path("clean") / (tag + "_" + std::to_string(i) + ".wav"),
           CorpusRole::kClean);
    }
    std::size_t idx = 0;
    for (const auto& item : c.noise) {
      emit(item, fs::path("noise") / item.label / (tag + "_" + std::to_string(idx++) + ".wav"),
           CorpusRole::kNoise);
    }
    idx = 0;
    for (const auto& item : c.speech) {
      emit(item, fs::path("speakers") / item.label / (tag + "_" + std::to_string(idx++) + ".wav"),
           CorpusRole::kSpeaker);
    }
  }
  save_manifest(manifest, root / "manifest.tsv");
  return load_manifest(root / "manifest.tsv");
}

}  // namespace nhans::synth
