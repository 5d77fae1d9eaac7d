// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/mixing.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "nhans/error.h"

namespace nhans {

namespace fs = std::filesystem;

AudioBuffer fit_length(const AudioBuffer& noise, std::size_t length,
                       double crossfade_seconds) {
  if (noise.empty()) throw Error(ErrorCode::kEmptyInput, "cannot loop an empty noise");
  AudioBuffer out(std::vector<double>(), noise.sample_rate, 1);
  const auto& src = noise.samples;
  if (src.size() >= length) {
    out.samples.assign(src.begin(), src.begin() + static_cast<long>(length));
    return out;
  }
  std::size_t xf = static_cast<std::size_t>(std::lround(crossfade_seconds * noise.sample_rate));
  xf = std::min(xf, src.size() / 2);
  out.samples = src;
  while (out.samples.size() < length) {
    const std::size_t end = out.samples.size();
    for (std::size_t i = 0; i < xf; ++i) {
      const double a = static_cast<double>(i + 1) / static_cast<double>(xf + 1);
      double& dst = out.samples[end - xf + i];
      dst = dst * (1.0 - a) + src[i] * a;
    }
    out.samples.insert(out.samples.end(), src.begin() + static_cast<long>(xf), src.end());
  }
  out.samples.resize(length);
  return out;
}

double snr_db(const AudioBuffer& signal, const AudioBuffer& noise) {
  return 20.0 * std::log10(rms(signal.samples) / rms(noise.samples));
}

MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr) {
  if (clean.empty() || noise.empty()) throw Error(ErrorCode::kEmptyInput, "mix_at_snr: empty input");
  if (clean.sample_rate != noise.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "mix_at_snr: sample rates differ");
  }
  AudioBuffer fitted = fit_length(noise, clean.samples.size());
  const double clean_rms = rms(clean.samples);
  const double noise_rms = rms(fitted.samples);
  if (clean_rms == 0.0) throw Error(ErrorCode::kZeroEnergy, "mix_at_snr: clean signal is silent");
  if (noise_rms == 0.0) throw Error(ErrorCode::kZeroEnergy, "mix_at_snr: noise is silent");
  MixResult r;
  r.gain = clean_rms / (noise_rms * std::pow(10.0, snr / 20.0));
  r.scaled_noise = std::move(fitted);
  for (double& s : r.scaled_noise.samples) s *= r.gain;
  r.noisy = clean;
  for (std::size_t i = 0; i < r.noisy.samples.size(); ++i) {
    r.noisy.samples[i] += r.scaled_noise.samples[i];
  }
  return r;
}

namespace {

AudioBuffer slice(const AudioBuffer& a, std::size_t offset, std::size_t length) {
  return AudioBuffer(std::vector<double>(a.samples.begin() + static_cast<long>(offset),
                                         a.samples.begin() + static_cast<long>(offset + length)),
                     a.sample_rate, 1);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(0, hi)(rng);
}

struct CutSegments {
  AudioBuffer mix;
  AudioBuffer reference;
  SegmentInfo info;
};

CutSegments cut_segments(const NoiseSource& source, std::size_t mix_len,
                         std::size_t ref_len, ReferenceMode mode, std::mt19937_64& rng) {
  const AudioBuffer& rec = source.recording.audio;
  const std::size_t n = rec.samples.size();
  CutSegments out;
  if (mode == ReferenceMode::kDisjointSegment && n >= mix_len + ref_len) {
    const std::size_t slack = n - mix_len - ref_len;
    const std::size_t lead = uniform_index(rng, slack);
    const std::size_t gap = uniform_index(rng, slack - lead);
    const bool mix_first = uniform_index(rng, 1) == 0;
    SegmentInfo& info = out.info;
    info.mix_length = mix_len;
    info.reference_length = ref_len;
    info.same_file = true;
    if (mix_first) {
      info.mix_offset = lead;
      info.reference_offset = lead + mix_len + gap;
    } else {
      info.reference_offset = lead;
      info.mix_offset = lead + ref_len + gap;
    }
    out.mix = slice(rec, info.mix_offset, mix_len);
    out.reference = slice(rec, info.reference_offset, ref_len);
    return out;
  }
  if (!source.alternative) {
    throw Error(ErrorCode::kTooShort,
                "noise '" + source.recording.source_id +
                    "' is too short for a disjoint reference and no same-category "
                    "alternative was given");
  }
  if (source.alternative->source_id == source.recording.source_id) {
    throw Error(ErrorCode::kInvalidArgument, "reference alternative is the mixed file itself");
  }
  const std::size_t offset = n > mix_len ? uniform_index(rng, n - mix_len) : 0;
  out.mix = n > mix_len ? slice(rec, offset, mix_len) : fit_length(rec, mix_len);
  const AudioBuffer& alt = source.alternative->audio;
  out.reference = alt.samples.size() > ref_len ? slice(alt, 0, ref_len) : alt;
  out.info.mix_offset = offset;
  out.info.mix_length = mix_len;
  out.info.reference_offset = 0;
  out.info.reference_length = out.reference.samples.size();
  out.info.same_file = false;
  return out;
}

void check_rate(const AudioBuffer& a, const AudioBuffer& b) {
  if (a.sample_rate != b.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "tuple inputs must share one sample rate");
  }
}

AudioBuffer sum(const AudioBuffer& a, const AudioBuffer& b) {
  AudioBuffer out = a;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += b.samples[i];
  return out;
}

}  // namespace

MixTuple make_selective_tuple(const AudioBuffer& clean, const NoiseSource& pos_noise,
                              const NoiseSource& neg_noise, double plus_snr,
                              double minus_snr, const SelectiveMixOptions& options,
                              std::mt19937_64& rng) {
  if (clean.empty()) throw Error(ErrorCode::kEmptyInput, "empty clean signal");
  if (rms(clean.samples) == 0.0) throw Error(ErrorCode::kZeroEnergy, "clean signal is silent");
  check_rate(clean, neg_noise.recording.audio);
  const bool has_pos = !pos_noise.recording.audio.empty() &&
                       rms(pos_noise.recording.audio.samples) > 0.0;
  if (has_pos) {
    check_rate(clean, pos_noise.recording.audio);
    if (!pos_noise.recording.source_id.empty() &&
        pos_noise.recording.source_id == neg_noise.recording.source_id) {
      throw Error(ErrorCode::kInvalidArgument,
                  "positive and negative noise come from the same file");
    }
  }
  const std::size_t len = clean.samples.size();
  const auto ref_len =
      static_cast<std::size_t>(std::lround(options.reference_seconds * clean.sample_rate));

  MixTuple t;
  t.clean = clean;

  CutSegments neg = cut_segments(neg_noise, len, ref_len, options.mode, rng);
  if (rms(neg.mix.samples) == 0.0) throw Error(ErrorCode::kZeroEnergy, "negative noise is silent");
  MixResult neg_mix = mix_at_snr(clean, neg.mix, minus_snr);
  t.minus_component = std::move(neg_mix.scaled_noise);
  t.minus_gain = neg_mix.gain;
  t.minus_snr_db = minus_snr;
  t.minus_rec = std::move(neg.reference);
  t.minus_segments = neg.info;

  if (has_pos) {
    CutSegments pos = cut_segments(pos_noise, len, ref_len, options.mode, rng);
    MixResult pos_mix = mix_at_snr(clean, pos.mix, plus_snr);
    t.plus_component = std::move(pos_mix.scaled_noise);
    t.plus_gain = pos_mix.gain;
    t.plus_snr_db = plus_snr;
    t.plus_rec = std::move(pos.reference);
    t.plus_segments = pos.info;
  } else {
    t.plus_component = AudioBuffer(std::vector<double>(len, 0.0), clean.sample_rate, 1);
    t.plus_rec = AudioBuffer(std::vector<double>(std::max<std::size_t>(ref_len, 1), 0.0),
                             clean.sample_rate, 1);
  }
  t.target = sum(clean, t.plus_component);
  t.noisy = sum(t.target, t.minus_component);
  return t;
}

MixTuple make_denoise_tuple(const AudioBuffer& clean, const NoiseSource& neg_noise,
                            double snr, const SelectiveMixOptions& options,
                            std::mt19937_64& rng) {
  NoiseSource none;
  none.recording.audio.sample_rate = clean.sample_rate;
  return make_selective_tuple(clean, none, neg_noise, 0.0, snr, options, rng);
}

std::string gender_pair_tag(char a, char b) {
  auto ok = [](char g) { return g == 'f' || g == 'm'; };
  if (!ok(a) || !ok(b)) return {};
  if (a == b) return std::string(1, a) + "+" + std::string(1, b);
  return "f+m";
}

MixTuple make_separation_tuple(const LabeledAudio& speaker_a, const LabeledAudio& speaker_b,
                               const LabeledAudio& ref_a, const LabeledAudio& ref_b) {
  const LabeledAudio* components[] = {&speaker_a, &speaker_b};
  const LabeledAudio* refs[] = {&ref_a, &ref_b};
  for (const auto* c : components) {
    for (const auto* r : refs) {
      if (!c->source_id.empty() && c->source_id == r->source_id) {
        throw Error(ErrorCode::kInvalidArgument,
                    "utterance '" + c->source_id + "' used both in the mixture and as reference");
      }
    }
  }
  if (speaker_a.audio.empty() || speaker_b.audio.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty separation component");
  }
  if (ref_a.audio.empty() || ref_b.audio.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty separation reference");
  }
  check_rate(speaker_a.audio, speaker_b.audio);
  const std::size_t len = std::min(speaker_a.audio.samples.size(), speaker_b.audio.samples.size());
  AudioBuffer a = slice(speaker_a.audio, 0, len);
  AudioBuffer b = slice(speaker_b.audio, 0, len);
  const double ra = rms(a.samples);
  const double rb = rms(b.samples);
  const double gain = (ra > 0.0 && rb > 0.0) ? ra / rb : 1.0;
  for (double& s : b.samples) s *= gain;

  MixTuple t;
  t.clean = a;
  t.target = a;
  t.plus_component = AudioBuffer(std::vector<double>(len, 0.0), a.sample_rate, 1);
  t.minus_component = b;
  t.minus_gain = gain;
  t.minus_snr_db = 0.0;
  t.noisy = sum(a, b);
  t.plus_rec = ref_a.audio;
  t.minus_rec = ref_b.audio;
  t.tag = gender_pair_tag(speaker_a.gender, speaker_b.gender);
  return t;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

namespace {

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

std::string role_column(const ManifestEntry& e) {
  switch (e.role) {
    case CorpusRole::kClean: return e.label.empty() ? "clean" : "clean:" + e.label;
    case CorpusRole::kNoise: return "noise:" + e.label;
    case CorpusRole::kSpeaker: return "speaker:" + e.label;
  }
  return "clean";
}

void parse_role(const std::string& column, ManifestEntry& e) {
  const auto colon = column.find(':');
  const std::string kind = column.substr(0, colon);
  e.label = colon == std::string::npos ? "" : column.substr(colon + 1);
  if (kind == "clean") {
    e.role = CorpusRole::kClean;
  } else if (kind == "noise") {
    e.role = CorpusRole::kNoise;
  } else if (kind == "speaker") {
    e.role = CorpusRole::kSpeaker;
  } else {
    throw Error(ErrorCode::kMalformedHeader, "unknown manifest role '" + column + "'");
  }
}

}  // namespace

CorpusManifest scan_corpus(const fs::path& root, CorpusRole role) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::kCorpusMissing, "corpus directory not found: " + root.string());
  }
  std::vector<fs::path> files;
  try {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && is_wav(entry.path())) files.push_back(entry.path());
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::kIoFailure, std::string("cannot read corpus: ") + e.what());
  }
  if (files.empty()) throw Error(ErrorCode::kCorpusMissing, "no WAV files under " + root.string());
  std::sort(files.begin(), files.end());
  CorpusManifest m;
  for (const auto& f : files) {
    AudioBuffer a = read_wav(f);
    ManifestEntry e;
    e.path = f;
    e.duration = a.duration_seconds();
    e.role = role;
    e.label = fs::relative(f.parent_path(), root).generic_string();
    if (e.label == ".") e.label.clear();
    if (e.duration <= 0.0) continue;
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw Error(ErrorCode::kCorpusMissing, "only empty WAV files under " + root.string());
  return m;
}

CorpusManifest scan_corpus_tree(const fs::path& root) {
  CorpusManifest all;
  const std::pair<const char*, CorpusRole> dirs[] = {
      {"clean", CorpusRole::kClean}, {"noise", CorpusRole::kNoise}, {"speakers", CorpusRole::kSpeaker}};
  for (const auto& [name, role] : dirs) {
    if (!fs::is_directory(root / name)) continue;
    auto part = scan_corpus(root / name, role);
    all.entries.insert(all.entries.end(), part.entries.begin(), part.entries.end());
  }
  if (all.entries.empty()) {
    throw Error(ErrorCode::kCorpusMissing,
                "no clean/, noise/ or speakers/ directory under " + root.string());
  }
  return all;
}

std::array<CorpusManifest, 3> split_manifest(const CorpusManifest& manifest,
                                             const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split ratios must be non-negative and sum to 1");
  }
  std::map<std::pair<int, std::string>, std::vector<ManifestEntry>> groups;
  for (const auto& e : manifest.entries) {
    groups[{static_cast<int>(e.role), e.label}].push_back(e);
  }
  std::array<CorpusManifest, 3> out;
  for (auto& m : out) m.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [key, entries] : groups) {
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    std::shuffle(entries.begin(), entries.end(), rng);
    const std::size_t n = entries.size();
    auto count = [n](double r) {
      auto c = static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
      if (r > 0.0 && c == 0 && n >= 3) c = 1;
      return c;
    };
    std::size_t n_test = count(ratios.test);
    std::size_t n_dev = std::min(count(ratios.dev), n - std::min(n, n_test));
    n_test = std::min(n_test, n);
    for (std::size_t i = 0; i < n; ++i) {
      ManifestEntry e = entries[i];
      if (i < n_test) {
        e.split = Split::kTest;
      } else if (i < n_test + n_dev) {
        e.split = Split::kDev;
      } else {
        e.split = Split::kTrain;
      }
      out[static_cast<std::size_t>(e.split)].entries.push_back(std::move(e));
    }
  }
  for (auto& m : out) {
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  }
  return out;
}

void save_manifest(const CorpusManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write manifest " + path.string());
  out.precision(17);
  for (const auto& e : manifest.entries) {
    out << to_string(e.split) << '\t' << role_column(e) << '\t' << e.path.generic_string()
        << '\t' << e.duration << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed: " + path.string());
}

CorpusManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open manifest " + path.string());
  CorpusManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) {
      throw Error(ErrorCode::kMalformedHeader,
                  path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
    }
    ManifestEntry e;
    e.split = parse_split(cols[0]);
    parse_role(cols[1], e);
    e.path = cols[2];
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
    e.duration = std::stod(cols[3]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

Corpus load_corpus(const CorpusManifest& manifest, Split split) {
  Corpus c;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    LabeledAudio item;
    item.audio = to_model_format(read_wav(e.path));
    item.source_id = e.path.generic_string();
    item.label = e.label;
    if (e.label.size() > 2 && e.label[1] == '_' && (e.label[0] == 'f' || e.label[0] == 'm')) {
      item.gender = e.label[0];
    }
    switch (e.role) {
      case CorpusRole::kClean: c.clean.push_back(std::move(item)); break;
      case CorpusRole::kNoise: c.noise.push_back(std::move(item)); break;
      case CorpusRole::kSpeaker: c.speech.push_back(std::move(item)); break;
    }
  }
  return c;
}

}  // namespace nhans
