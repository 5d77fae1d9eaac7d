// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_AUDIO_IO_H_
#define NHANS_AUDIO_IO_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace nhans {

/// Processing contract: every model entry point works on 16 kHz mono.
inline constexpr int kModelSampleRate = 16000;

/// Interleaved time-domain samples. Values are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kModelSampleRate;
  int channel_count = 1;

  AudioBuffer() = default;
  AudioBuffer(std::vector<double> s, int rate, int channels = 1)
      : samples(std::move(s)), sample_rate(rate), channel_count(channels) {}

  std::size_t frame_count() const {
    return channel_count > 0 ? samples.size() / channel_count : 0;
  }
  double duration_seconds() const {
    return static_cast<double>(frame_count()) / sample_rate;
  }
  bool empty() const { return samples.empty(); }
};

enum class WavSampleFormat { kPcm16, kFloat32 };

/// Throws Error with kFileNotFound, kMalformedHeader or kUnsupportedCodec.
AudioBuffer read_wav(const std::filesystem::path& path);

/// 16-bit output clamps to [-1, 1] and rounds half away from zero.
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
               WavSampleFormat format = WavSampleFormat::kPcm16);

/// Serialized forms; read_wav/write_wav are thin wrappers around these.
std::vector<unsigned char> encode_wav(const AudioBuffer& buffer,
                                      WavSampleFormat format);
AudioBuffer decode_wav(std::span<const unsigned char> bytes);

/// Average of all channels. Mono input is returned unchanged.
AudioBuffer to_mono(const AudioBuffer& buffer);

// Windowed-sinc resampler (Kaiser, beta 8.6, 64 zero crossings per side).
// Output length is round(n * target / source).
AudioBuffer resample(const AudioBuffer& buffer, int target_rate);

/// to_mono + resample to kModelSampleRate.
AudioBuffer to_model_format(const AudioBuffer& buffer);

/// Validates the buffer invariants; throws kInvalidArgument on violation.
void validate(const AudioBuffer& buffer);

double rms(std::span<const double> samples);

}  // namespace nhans

#endif  // NHANS_AUDIO_IO_H_
