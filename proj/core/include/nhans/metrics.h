// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_METRICS_H_
#define NHANS_METRICS_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nhans/audio_io.h"

namespace nhans::metrics {

/// Every dB ratio is clamped to [-kDbCap, kDbCap].
inline constexpr double kDbCap = 100.0;

/// Mean over frames of the RMS difference of 10 log10(|X|^2 + 1e-10), using
/// the default 512/128 Hann STFT. Inputs are trimmed to the shorter length.
double lsd(const AudioBuffer& ref, const AudioBuffer& est);

/// Segmental SNR: 512-sample frames, hop 256, per-frame values clipped to
/// [-10, 35] dB, frames 40 dB below the loudest reference frame skipped.
double ssnr(const AudioBuffer& ref, const AudioBuffer& est);

/// Mel cepstral distortion over c1..c12 of a 40-band log-mel spectrum.
double mcd(const AudioBuffer& ref, const AudioBuffer& est);

/// Short-time objective intelligibility, computed at 10 kHz.
double stoi(const AudioBuffer& ref, const AudioBuffer& est);

struct BssEvalResult {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

/// Projection-based SDR/SIR/SAR with length-filter_length FIR distortion
/// filters. est_index selects the reference source est is scored against.
BssEvalResult bss_eval(std::span<const AudioBuffer> references, const AudioBuffer& est,
                       std::size_t est_index, int filter_length = 512);

/// Values are NaN when the metric was undefined for the pair.
struct MetricValues {
  double lsd = 0.0;
  double ssnr = 0.0;
  double mcd = 0.0;
  double stoi = 0.0;
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

/// Scores est against target with interference = mixture - target as the
/// second BSS-eval source.
MetricValues score_pair(const AudioBuffer& target, const AudioBuffer& interference,
                        const AudioBuffer& est, int filter_length = 512);

enum class ReportLayout { kDenoising, kSelective, kSeparation };

struct ScoredPair {
  std::vector<std::string> keys;  // one per grouping column, e.g. {"+3 dB", "-5 dB"}
  MetricValues metrics;
};

struct ReportRow {
  std::vector<std::string> keys;
  std::size_t count = 0;
  MetricValues mean;
};

struct MetricReport {
  ReportLayout layout = ReportLayout::kDenoising;
  std::vector<ReportRow> rows;  // in order of first appearance
};

MetricReport aggregate_report(std::span<const ScoredPair> pairs, ReportLayout layout);

/// Aligned text table. PESQ is not computed and is rendered as "n/a".
std::string render_table(const MetricReport& report, std::string_view title = {});

/// Rows of "group,metric,value" with a header line.
std::string render_csv(const MetricReport& report);

}  // namespace nhans::metrics

#endif  // NHANS_METRICS_H_
