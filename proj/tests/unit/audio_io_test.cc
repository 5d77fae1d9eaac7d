// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>

#include "nhans/audio_io.h"
#include "nhans/error.h"
#include "test_support.h"

using namespace nhans;
using nhans::testing::TempDir;
using Catch::Matchers::WithinAbs;

namespace {

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t pos) {
  return b[pos] | (b[pos + 1] << 8) | (b[pos + 2] << 16) | (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

std::vector<unsigned char> pcm16_bytes(const std::vector<std::int16_t>& values, int rate,
                                       int channels) {
  std::vector<double> s;
  for (auto v : values) s.push_back(v / 32768.0);
  return encode_wav(AudioBuffer(s, rate, channels), WavSampleFormat::kPcm16);
}

void expect_code(const std::function<void()>& fn, ErrorCode code) {
  try {
    fn();
    FAIL("no exception");
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

// Dominant bin of a direct DFT, in Hz.
double peak_frequency(const AudioBuffer& x) {
  const auto spec = nhans::testing::naive_dft(x.samples);
  std::size_t best = 0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  return static_cast<double>(best) * x.sample_rate / static_cast<double>(x.samples.size());
}

}  // namespace

TEST_CASE("one second of 16-bit zeros reads back as 16000 zero samples", "[audio_io]") {
  TempDir dir("wav");
  write_wav(dir / "z.wav", AudioBuffer(std::vector<double>(16000, 0.0), 16000, 1));
  const AudioBuffer x = read_wav(dir / "z.wav");
  CHECK(x.sample_rate == 16000);
  CHECK(x.channel_count == 1);
  REQUIRE(x.samples.size() == 16000);
  for (double v : x.samples) REQUIRE(v == 0.0);
}

TEST_CASE("16-bit scale boundaries", "[audio_io]") {
  const auto bytes = pcm16_bytes({-32768, 32767, 0}, 16000, 1);
  const AudioBuffer x = decode_wav(bytes);
  CHECK(x.samples[0] == -1.0);
  CHECK(x.samples[1] == 32767.0 / 32768.0);

  const auto clamped = encode_wav(AudioBuffer({1.0, 1.5, -2.0}, 16000, 1), WavSampleFormat::kPcm16);
  const AudioBuffer y = decode_wav(clamped);
  CHECK(std::lround(y.samples[0] * 32768) == 32767);
  CHECK(std::lround(y.samples[1] * 32768) == 32767);
  CHECK(std::lround(y.samples[2] * 32768) == -32768);
}

TEST_CASE("16-bit writes round half away from zero", "[audio_io]") {
  const AudioBuffer in({0.5 / 32768, -0.5 / 32768, 1.5 / 32768, 0.49 / 32768}, 16000, 1);
  const AudioBuffer out = decode_wav(encode_wav(in, WavSampleFormat::kPcm16));
  CHECK(std::lround(out.samples[0] * 32768) == 1);
  CHECK(std::lround(out.samples[1] * 32768) == -1);
  CHECK(std::lround(out.samples[2] * 32768) == 2);
  CHECK(std::lround(out.samples[3] * 32768) == 0);
}

TEST_CASE("canonical header layout", "[audio_io]") {
  const auto bytes =
      encode_wav(AudioBuffer(std::vector<double>(10, 0.0), 22050, 2), WavSampleFormat::kPcm16);
  REQUIRE(bytes.size() == 44 + 20);
  CHECK(std::memcmp(bytes.data(), "RIFF", 4) == 0);
  CHECK(u32_at(bytes, 4) == 36 + 20);
  CHECK(std::memcmp(bytes.data() + 8, "WAVEfmt ", 8) == 0);
  CHECK(u32_at(bytes, 16) == 16);
  CHECK(u32_at(bytes, 24) == 22050);
  CHECK(u32_at(bytes, 28) == 22050 * 2 * 2);
  CHECK(std::memcmp(bytes.data() + 36, "data", 4) == 0);
  CHECK(u32_at(bytes, 40) == 20);
  for (std::size_t i = 44; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("write then read stays within one 16-bit step", "[audio_io][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TempDir dir("wav");
  for (int channels : {1, 2}) {
    std::vector<double> s(4000 * static_cast<std::size_t>(channels));
    for (double& v : s) v = dist(rng);
    const AudioBuffer in(s, 8000, channels);
    write_wav(dir / "r.wav", in);
    const AudioBuffer out = read_wav(dir / "r.wav");
    CHECK(out.channel_count == channels);
    CHECK(out.sample_rate == 8000);
    CHECK(nhans::testing::max_abs_diff(in.samples, out.samples) <= 1.0 / 32768.0);
  }
}

TEST_CASE("float32 round trip is exact for float-representable samples", "[audio_io]") {
  std::vector<double> s = {0.25, -0.125, 0.999, static_cast<float>(0.1)};
  const AudioBuffer out = decode_wav(encode_wav(AudioBuffer(s, 16000, 1), WavSampleFormat::kFloat32));
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(out.samples[i] == static_cast<float>(s[i]));
}

TEST_CASE("unknown chunks are skipped", "[audio_io]") {
  auto bytes = pcm16_bytes({100, -100}, 16000, 1);
  // Insert a LIST chunk with an odd payload (padded) between fmt and data.
  std::vector<unsigned char> list = {'L', 'I', 'S', 'T', 3, 0, 0, 0, 'a', 'b', 'c', 0};
  bytes.insert(bytes.begin() + 36, list.begin(), list.end());
  const AudioBuffer x = decode_wav(bytes);
  REQUIRE(x.samples.size() == 2);
  CHECK(x.samples[0] == 100.0 / 32768.0);
}

TEST_CASE("read errors are distinct", "[audio_io][errors]") {
  TempDir dir("wav");
  expect_code([&] { read_wav(dir / "missing.wav"); }, ErrorCode::kFileNotFound);
  {
    std::ofstream(dir / "junk.wav") << "this is not a wav file at all";
  }
  expect_code([&] { read_wav(dir / "junk.wav"); }, ErrorCode::kMalformedHeader);
  auto bytes = pcm16_bytes({1, 2, 3}, 16000, 1);
  bytes[20] = 2;  // format tag 2: ADPCM
  expect_code([&] { decode_wav(bytes); }, ErrorCode::kUnsupportedCodec);
  auto eight_bit = pcm16_bytes({1, 2, 3}, 16000, 1);
  eight_bit[34] = 8;
  expect_code([&] { decode_wav(eight_bit); }, ErrorCode::kUnsupportedCodec);
}

TEST_CASE("to_mono averages channels", "[audio_io]") {
  const AudioBuffer cancel({0.5, -0.5, 0.5, -0.5}, 16000, 2);
  for (double v : to_mono(cancel).samples) CHECK(v == 0.0);
  const AudioBuffer stereo({0.2, 0.6, 0.2, 0.6}, 16000, 2);
  const AudioBuffer m = to_mono(stereo);
  CHECK(m.channel_count == 1);
  REQUIRE(m.samples.size() == 2);
  CHECK_THAT(m.samples[0], WithinAbs(0.4, 1e-15));
  const AudioBuffer mono({0.1, 0.2}, 16000, 1);
  CHECK(to_mono(mono).samples == mono.samples);
  CHECK(to_mono(to_mono(stereo)).samples == m.samples);
}

TEST_CASE("resample to the same rate is the identity", "[audio_io][resample]") {
  const AudioBuffer x = nhans::testing::white_noise(0.1, 3);
  CHECK(resample(x, 16000).samples == x.samples);
}

TEST_CASE("440 Hz sine keeps its peak and level from 16 kHz to 8 kHz", "[audio_io][resample]") {
  const AudioBuffer x = nhans::testing::sine(440.0, 1.0, 16000, 0.5);
  const AudioBuffer y = resample(x, 8000);
  REQUIRE(y.samples.size() == 8000);
  CHECK_THAT(peak_frequency(y), WithinAbs(440.0, 1.0));
  const double amp = nhans::testing::tone_amplitude(y, 440.0, 1000, 7000);
  CHECK(std::abs(20.0 * std::log10(amp / 0.5)) < 0.1);
}

TEST_CASE("resample passband ripple stays below 0.1 dB", "[audio_io][resample]") {
  for (double hz : {100.0, 1000.0, 2500.0, 3400.0}) {
    const AudioBuffer x = nhans::testing::sine(hz, 1.0, 16000, 0.5);
    const AudioBuffer y = resample(x, 8000);
    const double amp = nhans::testing::tone_amplitude(y, hz, 1000, 7000);
    INFO(hz);
    CHECK(std::abs(20.0 * std::log10(amp / 0.5)) < 0.1);
  }
}

TEST_CASE("resample preserves DC and duration", "[audio_io][resample]") {
  const AudioBuffer dc(std::vector<double>(16000, 0.3), 16000, 1);
  for (int rate : {8000, 11025, 22050, 44100, 48000}) {
    const AudioBuffer y = resample(dc, rate);
    INFO(rate);
    CHECK(y.samples.size() == static_cast<std::size_t>(std::lround(16000.0 * rate / 16000)));
    CHECK(std::abs(y.duration_seconds() - 1.0) <= 1.0 / rate);
    for (double v : y.samples) REQUIRE(std::abs(v - 0.3) < 1e-3);
  }
  const AudioBuffer odd(std::vector<double>(4410, 0.1), 44100, 1);
  const AudioBuffer z = resample(odd, 16000);
  CHECK(z.samples.size() == 1600);
}

TEST_CASE("to_model_format yields 16 kHz mono", "[audio_io]") {
  AudioBuffer stereo = nhans::testing::sine(300.0, 0.5, 44100);
  std::vector<double> inter;
  for (double v : stereo.samples) {
    inter.push_back(v);
    inter.push_back(v);
  }
  const AudioBuffer x = to_model_format(AudioBuffer(inter, 44100, 2));
  CHECK(x.sample_rate == kModelSampleRate);
  CHECK(x.channel_count == 1);
  CHECK(x.samples.size() == 8000);
}

TEST_CASE("validate rejects broken buffers", "[audio_io][errors]") {
  expect_code([] { validate(AudioBuffer({0.0, 0.1, 0.2}, 16000, 2)); }, ErrorCode::kInvalidArgument);
  expect_code([] { validate(AudioBuffer({NAN}, 16000, 1)); }, ErrorCode::kInvalidArgument);
  expect_code([] { validate(AudioBuffer({0.0}, 0, 1)); }, ErrorCode::kInvalidArgument);
}
