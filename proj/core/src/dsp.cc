// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/dsp.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <unsupported/Eigen/FFT>

#include "nhans/error.h"

namespace nhans {

void StftParams::validate() const {
  const bool pow2 = fft_size > 1 && (fft_size & (fft_size - 1)) == 0;
  if (!pow2) throw Error(ErrorCode::kInvalidArgument, "fft_size must be a power of two");
  if (hop <= 0 || fft_size % hop != 0 || fft_size / hop < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "hop must divide fft_size with at least 2x overlap");
  }
  if (sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / length);
  }
  return w;
}

Spectrogram stft(std::span<const double> samples, const StftParams& params) {
  params.validate();
  if (samples.empty()) throw Error(ErrorCode::kEmptyInput, "stft of empty signal");
  const std::size_t n_fft = static_cast<std::size_t>(params.fft_size);
  const std::size_t half = n_fft / 2;
  const std::size_t hop = static_cast<std::size_t>(params.hop);

  std::vector<double> base(samples.begin(), samples.end());
  if (base.size() < n_fft) base.resize(n_fft, 0.0);
  const std::size_t n = base.size();
  const std::size_t frames = 1 + (n + hop - 1) / hop;
  const std::size_t padded_len = (frames - 1) * hop + n_fft;

  std::vector<double> padded(padded_len, 0.0);
  for (std::size_t i = 0; i < half; ++i) padded[i] = base[half - i];
  std::copy(base.begin(), base.end(), padded.begin() + static_cast<long>(half));
  for (std::size_t i = 0; i < half; ++i) padded[half + n + i] = base[n - 2 - i];

  const auto window = hann_window(params.fft_size);
  Spectrogram spec;
  spec.params = params;
  spec.num_samples = samples.size();
  spec.frames.resize(static_cast<Eigen::Index>(frames), params.bins());

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> bins;
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = padded.data() + t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) frame[i] = src[i] * window[i];
    fft.fwd(bins, frame);
    for (int k = 0; k < params.bins(); ++k) {
      spec.frames(static_cast<Eigen::Index>(t), k) = bins[static_cast<std::size_t>(k)];
    }
  }
  return spec;
}

Spectrogram stft(const AudioBuffer& buffer, const StftParams& params) {
  if (buffer.channel_count != 1) {
    throw Error(ErrorCode::kInvalidArgument, "stft expects mono audio");
  }
  if (buffer.sample_rate != params.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "stft sample rate mismatch");
  }
  return stft(std::span<const double>(buffer.samples), params);
}

AudioBuffer istft(const Spectrogram& spec) {
  const StftParams& params = spec.params;
  params.validate();
  if (spec.frames.cols() != params.bins()) {
    throw Error(ErrorCode::kInvalidArgument, "spectrogram bin count disagrees with params");
  }
  const std::size_t n_fft = static_cast<std::size_t>(params.fft_size);
  const std::size_t hop = static_cast<std::size_t>(params.hop);
  const auto frames = static_cast<std::size_t>(spec.frames.rows());
  const std::size_t half = n_fft / 2;
  if (frames == 0 || (frames - 1) * hop + n_fft < spec.num_samples + half) {
    throw Error(ErrorCode::kInvalidArgument, "too few frames for the stated length");
  }
  const std::size_t padded_len = (frames - 1) * hop + n_fft;

  const auto window = hann_window(params.fft_size);
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(params.bins()));
  std::vector<double> frame;
  for (std::size_t t = 0; t < frames; ++t) {
    for (int k = 0; k < params.bins(); ++k) {
      bins[static_cast<std::size_t>(k)] = spec.frames(static_cast<Eigen::Index>(t), k);
    }
    fft.inv(frame, bins, static_cast<Eigen::Index>(n_fft));
    double* dst = acc.data() + t * hop;
    double* nrm = norm.data() + t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) {
      dst[i] += frame[i] * window[i];
      nrm[i] += window[i] * window[i];
    }
  }
  AudioBuffer out;
  out.sample_rate = params.sample_rate;
  out.channel_count = 1;
  out.samples.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const double w = norm[half + i];
    out.samples[i] = w > 1e-12 ? acc[half + i] / w : 0.0;
  }
  return out;
}

namespace {

// sqrt(re^2 + im^2) is far cheaper than hypot and exact enough for audio.
RealMatrix fast_abs(const ComplexMatrix& m) {
  return m.unaryExpr([](const std::complex<double>& z) { return std::sqrt(std::norm(z)); });
}

}  // namespace

RealMatrix magnitude(const Spectrogram& spec) {
  return fast_abs(spec.frames);
}

LogMagSpectrogram log_magnitude(const Spectrogram& spec) {
  LogMagSpectrogram out;
  out.params = spec.params;
  out.values = fast_abs(spec.frames).cwiseMax(kLogMagFloor).array().log().matrix();
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(int n_mels, const StftParams& params) {
  const double top = hz_to_mel(params.sample_rate / 2.0);
  std::vector<double> hz(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    hz[static_cast<std::size_t>(i)] = mel_to_hz(top * i / (n_mels + 1));
  }
  return hz;
}

}  // namespace

std::vector<double> mel_centers(int n_mels, const StftParams& params) {
  auto edges = mel_edges(n_mels, params);
  return {edges.begin() + 1, edges.end() - 1};
}

RealMatrix mel_filterbank(int n_mels, const StftParams& params) {
  params.validate();
  if (n_mels < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two mel bands");
  if (n_mels > params.bins()) {
    throw Error(ErrorCode::kInvalidArgument, "more mel bands than STFT bins");
  }
  const auto edges = mel_edges(n_mels, params);
  const double bin_hz = static_cast<double>(params.sample_rate) / params.fft_size;
  RealMatrix fb = RealMatrix::Zero(n_mels, params.bins());
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < params.bins(); ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(m, k) = w;
    }
    // Filters narrower than one bin fall back to their nearest bin.
    if (fb.row(m).sum() <= 0.0) {
      const int k = std::clamp(static_cast<int>(std::lround(mid / bin_hz)), 0,
                               params.bins() - 1);
      fb(m, k) = 1.0;
    }
  }
  return fb;
}

std::vector<double> dct_ii(std::span<const double> input, std::size_t n_out) {
  const std::size_t n = input.size();
  if (n_out > n) throw Error(ErrorCode::kInvalidArgument, "dct_ii: n_out exceeds input length");
  std::vector<double> out(n_out, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += input[i] * std::cos(M_PI * static_cast<double>(k) *
                                 (2.0 * static_cast<double>(i) + 1.0) /
                                 (2.0 * static_cast<double>(n)));
    }
    out[k] = (k == 0 ? s0 : sk) * acc;
  }
  return out;
}

ThirdOctaveBands third_octave_bands(const StftParams& params, int num_bands,
                                    double lowest_center_hz) {
  if (num_bands <= 0) throw Error(ErrorCode::kInvalidArgument, "num_bands must be positive");
  ThirdOctaveBands bands;
  const int bins = params.bins();
  const double bin_hz = static_cast<double>(params.sample_rate) / params.fft_size;
  bands.matrix = RealMatrix::Zero(num_bands, bins);
  auto nearest_bin = [&](double hz) {
    return std::clamp(static_cast<int>(std::lround(hz / bin_hz)), 0, bins - 1);
  };
  for (int b = 0; b < num_bands; ++b) {
    const double center = lowest_center_hz * std::pow(2.0, b / 3.0);
    const double lo = lowest_center_hz * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    const double hi = lowest_center_hz * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    bands.centers.push_back(center);
    bands.lower_edges.push_back(lo);
    bands.upper_edges.push_back(hi);
    for (int k = nearest_bin(lo); k < nearest_bin(hi); ++k) bands.matrix(b, k) = 1.0;
  }
  return bands;
}

}  // namespace nhans
