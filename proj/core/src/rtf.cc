// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/rtf.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "nhans/error.h"
#include "nhans/synth_corpus.h"

namespace nhans {

RtfReport benchmark_rtf(const PmAuxModel& model, double duration_s, int repetitions,
                        std::uint64_t seed) {
  if (!(duration_s >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "benchmark duration must be at least 1 s");
  }
  if (repetitions < 1) throw Error(ErrorCode::kInvalidArgument, "repetitions must be >= 1");
  std::mt19937_64 rng(seed);
  const auto profiles = synth::speaker_profiles();
  AudioBuffer noisy = synth::voice(profiles.front(), duration_s, rng);
  const AudioBuffer noise = synth::noise("pink", duration_s, rng);
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) noisy.samples[i] += noise.samples[i];
  const AudioBuffer minus = synth::noise("pink", 1.0, rng);
  const AudioBuffer plus = model.task == TaskKind::kSeparator
                               ? synth::voice(profiles.front(), 1.0, rng)
                               : mute_recording();

  RtfReport report;
  report.audio_seconds = noisy.duration_seconds();
  for (int r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const AudioBuffer out = enhance(model, noisy, plus, minus);
    const auto stop = std::chrono::steady_clock::now();
    if (out.samples.size() != noisy.samples.size()) {
      throw Error(ErrorCode::kShapeMismatch, "enhance changed the signal length");
    }
    report.timings.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> sorted = report.timings;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  report.median_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  report.compute_per_audio = report.median_seconds / report.audio_seconds;
  report.audio_per_compute = 1.0 / report.compute_per_audio;
  return report;
}

std::string render_rtf(const RtfReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "audio: %.3f s, repetitions: %zu\n", report.audio_seconds,
                report.timings.size());
  out << buf << "timings (s):";
  for (double t : report.timings) {
    std::snprintf(buf, sizeof buf, " %.4f", t);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "\nmedian: %.4f s\n"
                "compute/audio (RTF): %.4f s per s of audio\n"
                "audio/compute (speed-up): %.2fx real time\n",
                report.median_seconds, report.compute_per_audio, report.audio_per_compute);
  out << buf;
  return out.str();
}

}  // namespace nhans
