// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "nhans/error.h"

namespace nhans {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound: return "file not found";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kUnsupportedCodec: return "unsupported codec";
    case ErrorCode::kIoFailure: return "i/o failure";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kZeroEnergy: return "zero energy";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kTruncatedFile: return "truncated file";
    case ErrorCode::kCorruptPayload: return "corrupt payload";
    case ErrorCode::kTaskMismatch: return "task mismatch";
    case ErrorCode::kNonFiniteLoss: return "non-finite loss";
    case ErrorCode::kCorpusMissing: return "corpus missing";
    case ErrorCode::kTooShort: return "input too short";
    case ErrorCode::kDegenerate: return "degenerate input";
  }
  return "unknown";
}

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

[[noreturn]] void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace

AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::kMalformedHeader, "not a RIFF/WAVE stream");
  }
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) {
        fail(ErrorCode::kMalformedHeader, "fmt chunk too short");
      }
      const unsigned char* f = chunk + 8;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) fail(ErrorCode::kMalformedHeader, "short extensible fmt");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Tolerate writers that leave the size field at its streaming default.
      data_size = std::min<std::size_t>(size, available);
      if (!have_fmt) fail(ErrorCode::kMalformedHeader, "data chunk before fmt");
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) fail(ErrorCode::kMalformedHeader, "missing fmt chunk");
  if (data == nullptr) fail(ErrorCode::kMalformedHeader, "missing data chunk");
  if (channels == 0 || rate == 0) {
    fail(ErrorCode::kMalformedHeader, "zero channels or sample rate");
  }

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.channel_count = channels;
  if (format == kFormatPcm && bits == 16) {
    std::size_t n = data_size / 2;
    n -= n % channels;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto v = static_cast<int16_t>(read_u16(data + 2 * i));
      out.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    std::size_t n = data_size / 4;
    n -= n % channels;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      uint32_t raw = read_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &raw, sizeof v);
      out.samples[i] = v;
    }
  } else {
    fail(ErrorCode::kUnsupportedCodec,
         "unsupported wav encoding (format " + std::to_string(format) +
             ", " + std::to_string(bits) + " bits)");
  }
  return out;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kFileNotFound, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const AudioBuffer& buffer,
                                      WavSampleFormat format) {
  validate(buffer);
  const uint16_t bits = format == WavSampleFormat::kPcm16 ? 16 : 32;
  const uint16_t block_align = static_cast<uint16_t>(buffer.channel_count * bits / 8);
  const uint32_t data_size =
      static_cast<uint32_t>(buffer.samples.size() * (bits / 8));

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format == WavSampleFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<uint16_t>(buffer.channel_count));
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<uint32_t>(buffer.sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);

  if (format == WavSampleFormat::kPcm16) {
    for (double s : buffer.samples) {
      double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      scaled = std::clamp(scaled, -32768.0, 32767.0);
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(scaled)));
    }
  } else {
    for (double s : buffer.samples) {
      float v = static_cast<float>(s);
      uint32_t raw;
      std::memcpy(&raw, &v, sizeof raw);
      put_u32(out, raw);
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
               WavSampleFormat format) {
  auto bytes = encode_wav(buffer, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoFailure, "write failed: " + path.string());
}

void validate(const AudioBuffer& buffer) {
  if (buffer.sample_rate <= 0) {
    fail(ErrorCode::kInvalidArgument, "sample rate must be positive");
  }
  if (buffer.channel_count <= 0) {
    fail(ErrorCode::kInvalidArgument, "channel count must be positive");
  }
  if (buffer.samples.size() % buffer.channel_count != 0) {
    fail(ErrorCode::kInvalidArgument, "sample count not divisible by channels");
  }
  for (double s : buffer.samples) {
    if (!std::isfinite(s)) fail(ErrorCode::kInvalidArgument, "non-finite sample");
  }
}

AudioBuffer to_mono(const AudioBuffer& buffer) {
  if (buffer.channel_count == 1) return buffer;
  const std::size_t frames = buffer.frame_count();
  const int ch = buffer.channel_count;
  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < ch; ++c) acc += buffer.samples[i * ch + c];
    mono[i] = acc / ch;
  }
  return AudioBuffer(std::move(mono), buffer.sample_rate, 1);
}

namespace {

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 64;
constexpr long kMaxPhaseTable = 4096;

double kaiser(double x, double half_width) {
  double r = x / half_width;
  if (std::abs(r) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

// Mirror an index into [0, n) without repeating the edge sample.
long mirror(long k, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  k %= period;
  if (k < 0) k += period;
  return k < n ? k : period - k;
}

// Taps for one fractional phase, normalized to unit DC gain.
void build_taps(double frac, double cutoff, long half, double half_width,
                std::vector<double>& taps) {
  taps.resize(static_cast<std::size_t>(2 * half));
  double sum = 0.0;
  for (long i = -(half - 1); i <= half; ++i) {
    double x = frac - static_cast<double>(i);
    double h = cutoff * sinc(cutoff * x) * kaiser(x, half_width);
    taps[static_cast<std::size_t>(i + half - 1)] = h;
    sum += h;
  }
  for (double& t : taps) t /= sum;
}

std::vector<double> resample_channel(const std::vector<double>& in,
                                     long up, long down, std::size_t n_out) {
  const long n = static_cast<long>(in.size());
  std::vector<double> out(n_out, 0.0);
  if (n == 0) return out;
  const double cutoff = std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / cutoff;
  const long half = static_cast<long>(std::ceil(half_width));

  // Phase tables are cached per thread, keyed by the rate ratio.
  thread_local long cached_up = 0;
  thread_local long cached_down = 0;
  thread_local std::vector<std::vector<double>> table;
  if (up <= kMaxPhaseTable && (cached_up != up || cached_down != down)) {
    table.assign(static_cast<std::size_t>(up), {});
    for (long p = 0; p < up; ++p) {
      build_taps(static_cast<double>(p) / up, cutoff, half, half_width,
                 table[static_cast<std::size_t>(p)]);
    }
    cached_up = up;
    cached_down = down;
  }
  const bool use_table = up <= kMaxPhaseTable;
  std::vector<double> scratch;
  for (std::size_t j = 0; j < n_out; ++j) {
    const long long pos = static_cast<long long>(j) * down;
    const long base = static_cast<long>(pos / up);
    const long phase = static_cast<long>(pos % up);
    const std::vector<double>* taps;
    if (use_table) {
      taps = &table[static_cast<std::size_t>(phase)];
    } else {
      build_taps(static_cast<double>(phase) / up, cutoff, half, half_width,
                 scratch);
      taps = &scratch;
    }
    double acc = 0.0;
    const double* t = taps->data();
    if (base - (half - 1) >= 0 && base + half < n) {
      const double* x = in.data() + (base - (half - 1));
      for (long k = 0; k < 2 * half; ++k) acc += t[k] * x[k];
    } else {
      for (long i = -(half - 1); i <= half; ++i) {
        acc += t[i + half - 1] * in[static_cast<std::size_t>(mirror(base + i, n))];
      }
    }
    out[j] = acc;
  }
  return out;
}

}  // namespace

AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
  if (target_rate <= 0) fail(ErrorCode::kInvalidArgument, "target rate must be positive");
  if (target_rate == buffer.sample_rate) return buffer;
  const long g = std::gcd(static_cast<long>(buffer.sample_rate),
                          static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = buffer.sample_rate / g;
  const std::size_t frames = buffer.frame_count();
  const auto n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(frames) * target_rate / buffer.sample_rate));
  const int ch = buffer.channel_count;

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channel_count = ch;
  out.samples.resize(n_out * ch);
  std::vector<double> lane(frames);
  for (int c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < frames; ++i) lane[i] = buffer.samples[i * ch + c];
    auto res = resample_channel(lane, up, down, n_out);
    for (std::size_t i = 0; i < n_out; ++i) out.samples[i * ch + c] = res[i];
  }
  return out;
}

AudioBuffer to_model_format(const AudioBuffer& buffer) {
  return resample(to_mono(buffer), kModelSampleRate);
}

double rms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

}  // namespace nhans
