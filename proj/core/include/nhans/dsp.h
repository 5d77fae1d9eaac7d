// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_DSP_H_
#define NHANS_DSP_H_

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nhans/audio_io.h"

namespace nhans {

using RealMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

/// Magnitude floor applied before taking logs of STFT magnitudes.
inline constexpr double kLogMagFloor = 1e-7;

// Hann analysis/synthesis. Defaults give 257 bins at 16 kHz.
struct StftParams {
  int fft_size = 512;
  int hop = 128;
  int sample_rate = kModelSampleRate;

  int bins() const { return fft_size / 2 + 1; }
  void validate() const;
  bool operator==(const StftParams&) const = default;
};

/// Frames x bins complex STFT. num_samples is the analysed signal length,
/// used by istft to trim the reconstruction.
struct Spectrogram {
  ComplexMatrix frames;
  StftParams params;
  std::size_t num_samples = 0;

  Eigen::Index frame_count() const { return frames.rows(); }
};

struct LogMagSpectrogram {
  RealMatrix values;  // frames x bins, natural log, >= ln(kLogMagFloor)
  StftParams params;
};

/// Periodic Hann window of the given length.
std::vector<double> hann_window(int length);

/// Centered STFT: reflect padding of fft_size/2 on both ends, then zero
/// padding so that the frame count is 1 + ceil(n / hop).
Spectrogram stft(std::span<const double> samples, const StftParams& params);
Spectrogram stft(const AudioBuffer& buffer, const StftParams& params);

/// Weighted overlap-add inverse; returns spec.num_samples samples.
AudioBuffer istft(const Spectrogram& spec);

RealMatrix magnitude(const Spectrogram& spec);
LogMagSpectrogram log_magnitude(const Spectrogram& spec);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-mel filters from 0 Hz to Nyquist, n_mels x bins.
RealMatrix mel_filterbank(int n_mels, const StftParams& params);

/// Center frequencies (Hz) of the filters produced by mel_filterbank.
std::vector<double> mel_centers(int n_mels, const StftParams& params);

/// First n_out orthonormal DCT-II coefficients.
std::vector<double> dct_ii(std::span<const double> input, std::size_t n_out);

struct ThirdOctaveBands {
  std::vector<double> centers;
  std::vector<double> lower_edges;
  std::vector<double> upper_edges;
  RealMatrix matrix;  // bands x bins, 0/1 membership of each STFT bin
};

/// One-third-octave bands (centers 150 * 2^(k/3) Hz) mapped onto the bins
/// of params. Bin membership follows nearest-bin edges.
ThirdOctaveBands third_octave_bands(const StftParams& params,
                                    int num_bands = 15,
                                    double lowest_center_hz = 150.0);

}  // namespace nhans

#endif  // NHANS_DSP_H_
