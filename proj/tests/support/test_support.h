// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Shared fixtures and independent reference computations for the tests.

#ifndef NHANS_TESTS_TEST_SUPPORT_H_
#define NHANS_TESTS_TEST_SUPPORT_H_

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nhans/audio_io.h"
#include "nhans/model.h"

namespace nhans::testing {

AudioBuffer sine(double hz, double seconds, int rate = kModelSampleRate, double amplitude = 0.5,
                 double phase = 0.0);
AudioBuffer white_noise(double seconds, std::uint64_t seed, int rate = kModelSampleRate,
                        double amplitude = 0.1);
AudioBuffer add(const AudioBuffer& a, const AudioBuffer& b);
AudioBuffer scaled(const AudioBuffer& a, double gain);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double energy(std::span<const double> x);

/// Direct O(N^2) DFT of the first n/2+1 bins.
std::vector<std::complex<double>> naive_dft(std::span<const double> x);

/// Amplitude of the least-squares fit a cos + b sin at hz over [begin, end).
double tone_amplitude(const AudioBuffer& x, double hz, std::size_t begin, std::size_t end);

/// Small network used where a trained-size model is not needed.
ModelHyperparams tiny_hyperparams();
/// The desk-scale network used by the training experiments.
ModelHyperparams desk_hyperparams();

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);

}  // namespace nhans::testing

#endif  // NHANS_TESTS_TEST_SUPPORT_H_
