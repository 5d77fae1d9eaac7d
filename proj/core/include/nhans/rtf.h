// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_RTF_H_
#define NHANS_RTF_H_

#include <cstdint>
#include <string>
#include <vector>

#include "nhans/model.h"

namespace nhans {

struct RtfReport {
  double audio_seconds = 0.0;
  std::vector<double> timings;  // wall-clock seconds per repetition
  double median_seconds = 0.0;
  /// Seconds of compute per second of audio (below 1 is faster than real time).
  double compute_per_audio = 0.0;
  /// Seconds of audio per second of compute, the inverse convention.
  double audio_per_compute = 0.0;
};

/// Times enhance() on synthetic input of duration_s seconds, excluding any
/// model loading or file I/O. Throws Error(kInvalidArgument) if duration_s < 1
/// or repetitions < 1.
RtfReport benchmark_rtf(const PmAuxModel& model, double duration_s, int repetitions,
                        std::uint64_t seed = 1);

std::string render_rtf(const RtfReport& report);

}  // namespace nhans

#endif  // NHANS_RTF_H_
