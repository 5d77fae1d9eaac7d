// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/training.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "nhans/error.h"
#include "nhans/synth_corpus.h"

namespace nhans {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_config(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, "config: " + what);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) {
    bad_config("bad value '" + value + "' for " + key);
  }
  return v;
}

std::vector<double> parse_grid(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string join_grid(const std::vector<double>& grid) {
  std::string out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%g", i ? "," : "", grid[i]);
    out += buf;
  }
  return out;
}

std::mt19937_64 derived_rng(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <typename T>
const T& pick_from(std::mt19937_64& rng, const std::vector<T>& items) {
  return items[pick(rng, items.size())];
}

LabeledAudio crop(const LabeledAudio& item, double seconds, std::mt19937_64& rng) {
  const auto len = static_cast<std::size_t>(std::lround(seconds * item.audio.sample_rate));
  const std::size_t n = item.audio.samples.size();
  if (n <= len) return item;
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
  LabeledAudio out = item;
  out.audio.samples.assign(item.audio.samples.begin() + static_cast<long>(offset),
                           item.audio.samples.begin() + static_cast<long>(offset + len));
  return out;
}

using Groups = std::map<std::string, std::vector<const LabeledAudio*>>;

Groups group_by_label(const std::vector<LabeledAudio>& items,
                      const std::vector<std::string>& allowed = {}) {
  Groups g;
  for (const auto& item : items) {
    if (!allowed.empty() &&
        std::find(allowed.begin(), allowed.end(), item.label) == allowed.end()) {
      continue;
    }
    g[item.label].push_back(&item);
  }
  return g;
}

std::vector<std::string> keys_of(const Groups& g) {
  std::vector<std::string> out;
  for (const auto& [k, v] : g) out.push_back(k);
  return out;
}

NoiseSource noise_source(const std::vector<const LabeledAudio*>& files, std::mt19937_64& rng) {
  const std::size_t i = pick(rng, files.size());
  NoiseSource src;
  src.recording = *files[i];
  if (files.size() > 1) {
    std::size_t j = pick(rng, files.size() - 1);
    if (j >= i) ++j;
    src.alternative = *files[j];
  }
  return src;
}

// Two distinct items of one group: the mixture utterance and its reference.
std::pair<const LabeledAudio*, const LabeledAudio*> distinct_pair(
    const std::vector<const LabeledAudio*>& items, std::mt19937_64& rng) {
  const std::size_t i = pick(rng, items.size());
  std::size_t j = pick(rng, items.size() - 1);
  if (j >= i) ++j;
  return {items[i], items[j]};
}

MixTuple denoise_family_tuple(const Corpus& corpus, const Groups& noise,
                              const std::vector<double>& snr_grid,
                              const std::vector<double>& plus_grid,
                              const std::vector<double>& minus_grid, bool selective,
                              double crop_seconds, const SelectiveMixOptions& options,
                              std::mt19937_64& rng) {
  const LabeledAudio& utt = pick_from(rng, corpus.clean);
  const AudioBuffer clean =
      crop_seconds > 0.0 ? crop(utt, crop_seconds, rng).audio : utt.audio;
  const auto categories = keys_of(noise);
  const std::size_t neg_cat = pick(rng, categories.size());
  const NoiseSource neg = noise_source(noise.at(categories[neg_cat]), rng);
  if (!selective) {
    return make_denoise_tuple(clean, neg, pick_from(rng, snr_grid), options, rng);
  }
  NoiseSource pos;
  if (categories.size() > 1) {
    std::size_t pos_cat = pick(rng, categories.size() - 1);
    if (pos_cat >= neg_cat) ++pos_cat;
    pos = noise_source(noise.at(categories[pos_cat]), rng);
  } else {
    const auto& files = noise.at(categories[neg_cat]);
    std::vector<const LabeledAudio*> others;
    for (const auto* f : files) {
      if (f->source_id != neg.recording.source_id) others.push_back(f);
    }
    pos = noise_source(others, rng);
  }
  const double plus_snr = pick_from(rng, plus_grid);
  const double minus_snr = pick_from(rng, minus_grid);
  return make_selective_tuple(clean, pos, neg, plus_snr, minus_snr, options, rng);
}

MixTuple separation_tuple(const Groups& speakers, const std::string& a, const std::string& b,
                          double crop_seconds, double reference_seconds,
                          std::mt19937_64& rng) {
  auto [mix_a, ref_a] = distinct_pair(speakers.at(a), rng);
  auto [mix_b, ref_b] = distinct_pair(speakers.at(b), rng);
  if (crop_seconds > 0.0) {
    return make_separation_tuple(crop(*mix_a, crop_seconds, rng), crop(*mix_b, crop_seconds, rng),
                                 crop(*ref_a, reference_seconds, rng),
                                 crop(*ref_b, reference_seconds, rng));
  }
  return make_separation_tuple(*mix_a, *mix_b, *ref_a, *ref_b);
}

void require_material(const Corpus& corpus, TaskKind task, double selective_fraction,
                      const std::vector<std::string>& speakers, const std::string& where) {
  if (task == TaskKind::kSeparator) {
    const Groups g = group_by_label(corpus.speech, speakers);
    std::size_t usable = 0;
    for (const auto& [k, v] : g) usable += v.size() >= 2;
    if (usable < 2) {
      throw Error(ErrorCode::kCorpusMissing,
                  where + ": separator needs two speakers with at least two utterances each");
    }
    return;
  }
  if (corpus.clean.empty()) throw Error(ErrorCode::kCorpusMissing, where + ": no clean speech");
  const Groups g = group_by_label(corpus.noise);
  if (g.empty()) throw Error(ErrorCode::kCorpusMissing, where + ": no noise recordings");
  if (selective_fraction > 0.0 && g.size() < 2 && g.begin()->second.size() < 2) {
    throw Error(ErrorCode::kCorpusMissing,
                where + ": selective tuples need two noise categories or two files of one");
  }
}

template <typename Model>
nn::Var loss_graph(nn::Graph& g, Model& model, const Batch& batch) {
  nn::Var plus = forward_embeddings(g, model.plus_encoder, g.constant(batch.plus_frames),
                                    batch.plus_counts);
  nn::Var minus = forward_embeddings(g, model.minus_encoder, g.constant(batch.minus_frames),
                                     batch.minus_counts);
  nn::Var mask = forward_mask(g, model.enhancer, g.constant(batch.input),
                              g.repeat_rows(plus, batch.frame_counts),
                              g.repeat_rows(minus, batch.frame_counts));
  nn::Var estimate = g.mul(mask, g.constant(batch.noisy_magnitude));
  return g.mse(estimate, g.constant(batch.target_magnitude));
}

RealMatrix vstack(const std::vector<RealMatrix>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  RealMatrix out(rows, parts.empty() ? 0 : parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

}  // namespace

double learning_rate(const TrainConfig& config, std::int64_t step) {
  if (config.lr_half_life == 0) return config.lr;
  return config.lr * std::exp2(-static_cast<double>(step - 1) / config.lr_half_life);
}

void TrainConfig::validate() const {
  if (steps <= 0) bad_config("steps must be positive");
  if (batch_size <= 0) bad_config("batch_size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad_config("lr must be finite and >= 0");
  if (snr_grid.empty() || plus_snr_grid.empty() || minus_snr_grid.empty()) {
    bad_config("SNR grids must be nonempty");
  }
  if (lr_half_life < 0) bad_config("lr_half_life must be >= 0");
  if (eval_interval < 0) bad_config("eval_interval must be >= 0");
  if (!(crop_seconds > 0.0)) bad_config("crop_seconds must be positive");
  if (!(reference_seconds >= kMinReferenceSeconds)) {
    bad_config("reference_seconds must be at least 0.1");
  }
  if (!(selective_fraction >= 0.0 && selective_fraction <= 1.0)) {
    bad_config("selective_fraction must lie in [0, 1]");
  }
  if (noises_per_category < 0 || clean_utterances < 0) {
    bad_config("corpus sizes must be >= 0");
  }
  model.validate();
  for (const fs::path* p : {&manifest, &corpus_root, &resume}) {
    if (!p->empty() && !fs::exists(*p)) {
      throw Error(ErrorCode::kCorpusMissing, "config: path does not exist: " + p->string());
    }
  }
  for (const fs::path* p : {&checkpoint, &log}) {
    if (!p->empty() && p->has_parent_path() && !fs::is_directory(p->parent_path())) {
      throw Error(ErrorCode::kFileNotFound,
                  "config: output directory does not exist: " + p->parent_path().string());
    }
  }
}

TrainConfig parse_train_config(std::string_view text, const fs::path& base) {
  TrainConfig c;
  auto path_value = [&](const std::string& v) {
    fs::path p(v);
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad_config("line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "task") {
      c.task = parse_task(value);
    } else if (key == "steps") {
      c.steps = parse_number<int>(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_number<int>(key, value);
    } else if (key == "lr") {
      c.lr = parse_number<double>(key, value);
    } else if (key == "lr_half_life") {
      c.lr_half_life = parse_number<int>(key, value);
    } else if (key == "snr_grid") {
      c.snr_grid = parse_grid(key, value);
    } else if (key == "plus_snr_grid") {
      c.plus_snr_grid = parse_grid(key, value);
    } else if (key == "minus_snr_grid") {
      c.minus_snr_grid = parse_grid(key, value);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "manifest") {
      c.manifest = path_value(value);
    } else if (key == "corpus_root") {
      c.corpus_root = path_value(value);
    } else if (key == "corpus_seed") {
      c.corpus_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "checkpoint") {
      c.checkpoint = path_value(value);
    } else if (key == "log") {
      c.log = path_value(value);
    } else if (key == "resume") {
      c.resume = path_value(value);
    } else if (key == "eval_interval") {
      c.eval_interval = parse_number<int>(key, value);
    } else if (key == "hidden") {
      c.model.hidden = parse_number<int>(key, value);
    } else if (key == "blocks") {
      c.model.blocks = parse_number<int>(key, value);
    } else if (key == "context") {
      c.model.context = parse_number<int>(key, value);
    } else if (key == "embedding" || key == "embed") {
      c.model.embedding = parse_number<int>(key, value);
    } else if (key == "fft_size") {
      c.model.stft.fft_size = parse_number<int>(key, value);
    } else if (key == "hop") {
      c.model.stft.hop = parse_number<int>(key, value);
    } else if (key == "crop_seconds") {
      c.crop_seconds = parse_number<double>(key, value);
    } else if (key == "reference_seconds") {
      c.reference_seconds = parse_number<double>(key, value);
    } else if (key == "selective_fraction") {
      c.selective_fraction = parse_number<double>(key, value);
    } else if (key == "reference_mode") {
      if (value == "disjoint") {
        c.reference_mode = ReferenceMode::kDisjointSegment;
      } else if (value == "same_category") {
        c.reference_mode = ReferenceMode::kSameCategory;
      } else {
        bad_config("reference_mode must be 'disjoint' or 'same_category'");
      }
    } else if (key == "noise_categories") {
      c.noise_categories = split_list(value);
    } else if (key == "noises_per_category") {
      c.noises_per_category = parse_number<int>(key, value);
    } else if (key == "clean_utterances") {
      c.clean_utterances = parse_number<int>(key, value);
    } else if (key == "speakers") {
      c.speakers = split_list(value);
    } else {
      bad_config("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.parent_path());
}

std::string render_train_config(const TrainConfig& c) {
  std::ostringstream out;
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", c.lr);
  out << "task=" << to_string(c.task) << '\n'
      << "steps=" << c.steps << '\n'
      << "batch_size=" << c.batch_size << '\n'
      << "lr=" << lr << '\n'
      << "lr_half_life=" << c.lr_half_life << '\n'
      << "snr_grid=" << join_grid(c.snr_grid) << '\n'
      << "plus_snr_grid=" << join_grid(c.plus_snr_grid) << '\n'
      << "minus_snr_grid=" << join_grid(c.minus_snr_grid) << '\n'
      << "seed=" << c.seed << '\n'
      << "corpus_seed=" << c.corpus_seed << '\n';
  if (!c.manifest.empty()) out << "manifest=" << c.manifest.string() << '\n';
  if (!c.corpus_root.empty()) out << "corpus_root=" << c.corpus_root.string() << '\n';
  if (!c.checkpoint.empty()) out << "checkpoint=" << c.checkpoint.string() << '\n';
  if (!c.log.empty()) out << "log=" << c.log.string() << '\n';
  if (!c.resume.empty()) out << "resume=" << c.resume.string() << '\n';
  out << "eval_interval=" << c.eval_interval << '\n'
      << "hidden=" << c.model.hidden << '\n'
      << "blocks=" << c.model.blocks << '\n'
      << "context=" << c.model.context << '\n'
      << "embedding=" << c.model.embedding << '\n'
      << "fft_size=" << c.model.stft.fft_size << '\n'
      << "hop=" << c.model.stft.hop << '\n'
      << "crop_seconds=" << c.crop_seconds << '\n'
      << "reference_seconds=" << c.reference_seconds << '\n'
      << "selective_fraction=" << c.selective_fraction << '\n'
      << "reference_mode="
      << (c.reference_mode == ReferenceMode::kDisjointSegment ? "disjoint" : "same_category")
      << '\n';
  if (!c.noise_categories.empty()) {
    out << "noise_categories=";
    for (std::size_t i = 0; i < c.noise_categories.size(); ++i) {
      out << (i ? "," : "") << c.noise_categories[i];
    }
    out << '\n';
  }
  if (c.noises_per_category > 0) out << "noises_per_category=" << c.noises_per_category << '\n';
  if (c.clean_utterances > 0) out << "clean_utterances=" << c.clean_utterances << '\n';
  if (!c.speakers.empty()) {
    out << "speakers=";
    for (std::size_t i = 0; i < c.speakers.size(); ++i) out << (i ? "," : "") << c.speakers[i];
    out << '\n';
  }
  return out.str();
}

Corpus resolve_corpus(const TrainConfig& config, Split split) {
  Corpus corpus;
  std::string where;
  if (!config.manifest.empty()) {
    if (!fs::exists(config.manifest)) {
      throw Error(ErrorCode::kCorpusMissing, "manifest not found: " + config.manifest.string());
    }
    corpus = load_corpus(load_manifest(config.manifest), split);
    where = config.manifest.string();
  } else if (!config.corpus_root.empty()) {
    if (!fs::is_directory(config.corpus_root)) {
      throw Error(ErrorCode::kCorpusMissing,
                  "corpus directory not found: " + config.corpus_root.string());
    }
    const fs::path tsv = config.corpus_root / "manifest.tsv";
    CorpusManifest manifest;
    if (fs::exists(tsv)) {
      manifest = load_manifest(tsv);
    } else {
      const auto parts =
          split_manifest(scan_corpus_tree(config.corpus_root), SplitRatios{}, config.corpus_seed);
      for (const auto& part : parts) {
        manifest.entries.insert(manifest.entries.end(), part.entries.begin(), part.entries.end());
      }
    }
    corpus = load_corpus(manifest, split);
    where = config.corpus_root.string();
  } else {
    synth::CorpusOptions options;
    if (config.noises_per_category > 0) options.noises_per_category = config.noises_per_category;
    if (config.clean_utterances > 0) options.clean_utterances = config.clean_utterances;
    for (const auto& cat : config.noise_categories) {
      const auto& known = synth::noise_categories();
      if (std::find(known.begin(), known.end(), cat) == known.end()) {
        throw Error(ErrorCode::kCorpusMissing, "unknown synthetic noise category '" + cat + "'");
      }
    }
    options.categories = config.noise_categories;
    corpus = synth::make_corpus(split, config.corpus_seed, options);
    where = "synthetic corpus";
  }
  if (!config.noise_categories.empty()) {
    std::erase_if(corpus.noise, [&](const LabeledAudio& n) {
      return std::find(config.noise_categories.begin(), config.noise_categories.end(),
                       n.label) == config.noise_categories.end();
    });
  }
  require_material(corpus, config.task, config.selective_fraction, config.speakers,
                   where + " (" + std::string(to_string(split)) + ")");
  return corpus;
}

MixTuple sample_tuple(const Corpus& corpus, const TrainConfig& config, std::uint64_t index) {
  std::mt19937_64 rng = derived_rng({config.seed, index, 0x7475706c65ULL});
  const SelectiveMixOptions options{config.reference_seconds, config.reference_mode};
  constexpr int kAttempts = 16;
  for (int attempt = 0;; ++attempt) {
    try {
      if (config.task == TaskKind::kSeparator) {
        const Groups speakers = group_by_label(corpus.speech, config.speakers);
        std::vector<std::string> usable;
        for (const auto& [k, v] : speakers) {
          if (v.size() >= 2) usable.push_back(k);
        }
        if (usable.size() < 2) {
          throw Error(ErrorCode::kCorpusMissing, "separator needs two usable speakers");
        }
        const std::size_t a = pick(rng, usable.size());
        std::size_t b = pick(rng, usable.size() - 1);
        if (b >= a) ++b;
        return separation_tuple(speakers, usable[a], usable[b], config.crop_seconds,
                                config.reference_seconds, rng);
      }
      const Groups noise = group_by_label(corpus.noise);
      const bool selective = std::bernoulli_distribution(config.selective_fraction)(rng);
      return denoise_family_tuple(corpus, noise, config.snr_grid, config.plus_snr_grid,
                                  config.minus_snr_grid, selective, config.crop_seconds,
                                  options, rng);
    } catch (const Error& e) {
      // Silent crops are redrawn from the same stream.
      if (e.code() != ErrorCode::kZeroEnergy || attempt + 1 == kAttempts) throw;
    }
  }
}

Batch make_batch(const ModelHyperparams& hp, std::span<const MixTuple> tuples) {
  if (tuples.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  std::vector<RealMatrix> inputs, noisy_mag, target_mag, plus, minus;
  Batch batch;
  for (const MixTuple& t : tuples) {
    StftParams params = hp.stft;
    params.sample_rate = t.noisy.sample_rate;
    const Spectrogram noisy = stft(t.noisy, params);
    const Spectrogram target = stft(t.target, params);
    inputs.push_back(
        stack_context(normalize_features(hp, log_magnitude(noisy).values), hp.context));
    noisy_mag.push_back(magnitude(noisy));
    target_mag.push_back(magnitude(target));
    plus.push_back(reference_features(hp, t.plus_rec));
    minus.push_back(reference_features(hp, t.minus_rec));
    batch.frame_counts.push_back(noisy.frame_count());
    batch.plus_counts.push_back(plus.back().rows());
    batch.minus_counts.push_back(minus.back().rows());
  }
  batch.input = vstack(inputs);
  batch.noisy_magnitude = vstack(noisy_mag);
  batch.target_magnitude = vstack(target_mag);
  batch.plus_frames = vstack(plus);
  batch.minus_frames = vstack(minus);
  return batch;
}

double batch_loss(const PmAuxModel& model, const Batch& batch) {
  nn::Graph g;
  return g.value(loss_graph(g, model, batch))(0, 0);
}

double train_step(PmAuxModel& model, nn::AdamState& optimizer, const Batch& batch) {
  nn::Graph g;
  const nn::Var loss = loss_graph(g, model, batch);
  const double value = g.value(loss)(0, 0);
  if (!std::isfinite(value)) return value;
  g.backward(loss);
  const auto params = model.parameters();
  nn::adam_step(optimizer, params);
  return value;
}

Checkpoint train(const TrainConfig& config,
                 const std::function<void(const TrainProgress&)>& on_step) {
  config.validate();
#ifdef __GLIBC__
  // Batch matrices cross the default mmap threshold; keep them on the heap
  // so each step does not map and unmap fresh pages.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  const Corpus corpus = resolve_corpus(config, Split::kTrain);

  Checkpoint cp;
  std::mt19937_64 rng = derived_rng({config.seed, 0x747261696eULL});
  if (!config.resume.empty()) {
    cp = load_checkpoint(config.resume);
    if (!same_model_family(cp.model.task, config.task)) {
      throw Error(ErrorCode::kTaskMismatch, "cannot resume a " +
                                                std::string(to_string(cp.model.task)) +
                                                " checkpoint as " +
                                                std::string(to_string(config.task)));
    }
    if (!cp.rng_state.empty()) {
      std::istringstream in(cp.rng_state);
      in >> rng;
      if (in.fail()) throw Error(ErrorCode::kCorruptPayload, "unreadable RNG state");
    }
  } else {
    cp.model = PmAuxModel::create(config.task, config.model, config.seed);
  }
  const auto params = cp.model.parameters();
  if (!cp.optimizer) cp.optimizer = nn::make_adam(params);
  cp.optimizer->config.lr = config.lr;

  std::ofstream log;
  if (!config.log.empty()) {
    log.open(config.log, config.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw Error(ErrorCode::kIoFailure, "cannot open log " + config.log.string());
  }
  auto store_rng = [&] {
    std::ostringstream out;
    out << rng;
    cp.rng_state = out.str();
  };

  const std::int64_t first = cp.step;
  const std::int64_t last = first + config.steps;
  std::vector<MixTuple> tuples(static_cast<std::size_t>(config.batch_size));
  for (std::int64_t step = first + 1; step <= last; ++step) {
    for (auto& t : tuples) t = sample_tuple(corpus, config, rng());
    const Batch batch = make_batch(cp.model.hyperparams, tuples);
    cp.optimizer->config.lr = learning_rate(config, step);
    const double loss = train_step(cp.model, *cp.optimizer, batch);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "non-finite loss at step " + std::to_string(step) +
                      "; lower lr (currently " + std::to_string(config.lr) + ")");
    }
    cp.step = step;
    if (log) {
      char line[64];
      std::snprintf(line, sizeof line, "%lld\t%.9g\n", static_cast<long long>(step), loss);
      log << line << std::flush;
    }
    if (on_step) on_step(TrainProgress{step, loss});
    if (!config.checkpoint.empty() && config.eval_interval > 0 &&
        (step - first) % config.eval_interval == 0 && step != last) {
      store_rng();
      save_checkpoint(cp, config.checkpoint);
    }
  }
  store_rng();
  if (!config.checkpoint.empty()) save_checkpoint(cp, config.checkpoint);
  return cp;
}

namespace {

struct EvalJob {
  std::vector<std::string> keys;
  std::uint64_t seed = 0;
  std::string pair_a, pair_b;            // separator speakers
  std::optional<double> snr, plus, minus;
};

std::string db_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g dB", v);
  return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

EvalResult evaluate(const PmAuxModel& model, TaskKind task, const Corpus& test,
                    const EvalConfig& config) {
  if (!same_model_family(model.task, task)) {
    throw Error(ErrorCode::kTaskMismatch,
                "checkpoint holds a " + std::string(to_string(model.task)) +
                    " model, cannot evaluate it as " + std::string(to_string(task)));
  }
  if (config.pairs_per_cell <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "pairs_per_cell must be positive");
  }
  const double selective_fraction = task == TaskKind::kSelectiveDenoiser ? 1.0 : 0.0;
  require_material(test, task, selective_fraction, config.speakers, "test split");

  std::vector<EvalJob> jobs;
  auto add_cell = [&](EvalJob proto) {
    for (int i = 0; i < config.pairs_per_cell; ++i) {
      EvalJob job = proto;
      job.seed = jobs.size();
      jobs.push_back(std::move(job));
    }
  };
  const Groups speakers = group_by_label(test.speech, config.speakers);
  metrics::ReportLayout layout = metrics::ReportLayout::kDenoising;
  switch (task) {
    case TaskKind::kDenoiser:
      if (config.snr_grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty SNR grid");
      for (double snr : config.snr_grid) add_cell(EvalJob{{db_key(snr)}, 0, {}, {}, snr, {}, {}});
      break;
    case TaskKind::kSelectiveDenoiser:
      layout = metrics::ReportLayout::kSelective;
      if (config.plus_snr_grid.empty() || config.minus_snr_grid.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "empty SNR grid");
      }
      for (double p : config.plus_snr_grid) {
        for (double m : config.minus_snr_grid) {
          add_cell(EvalJob{{db_key(p), db_key(m)}, 0, {}, {}, {}, p, m});
        }
      }
      break;
    case TaskKind::kSeparator: {
      layout = metrics::ReportLayout::kSeparation;
      std::vector<std::string> ids;
      for (const auto& [k, v] : speakers) {
        if (v.size() >= 2) ids.push_back(k);
      }
      // Every ordered pair of distinct speakers, grouped by gender pairing.
      std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_tag;
      std::vector<std::string> tag_order;
      for (const auto& a : ids) {
        for (const auto& b : ids) {
          if (a == b) continue;
          std::string tag = gender_pair_tag(speakers.at(a).front()->gender,
                                            speakers.at(b).front()->gender);
          if (tag.empty()) tag = "any";
          if (!by_tag.count(tag)) tag_order.push_back(tag);
          by_tag[tag].emplace_back(a, b);
        }
      }
      std::sort(tag_order.begin(), tag_order.end());
      for (const auto& tag : tag_order) {
        const auto& pairs = by_tag[tag];
        for (int i = 0; i < config.pairs_per_cell; ++i) {
          const auto& [a, b] = pairs[static_cast<std::size_t>(i) % pairs.size()];
          EvalJob job{{tag}, jobs.size(), a, b, {}, {}, {}};
          jobs.push_back(std::move(job));
        }
      }
      break;
    }
  }

  const Groups noise = group_by_label(test.noise);
  const SelectiveMixOptions options{config.reference_seconds, config.reference_mode};
  std::vector<metrics::ScoredPair> enhanced(jobs.size()), baseline(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    const EvalJob& job = jobs[i];
    std::mt19937_64 rng = derived_rng({config.seed, job.seed, 0x6576616cULL});
    MixTuple t;
    AudioBuffer out;
    for (int attempt = 0;; ++attempt) {
      try {
        if (task == TaskKind::kSeparator) {
          t = separation_tuple(speakers, job.pair_a, job.pair_b, 0.0, 0.0, rng);
        } else {
          const bool selective = task == TaskKind::kSelectiveDenoiser;
          const std::vector<double> snr{job.snr.value_or(0.0)};
          const std::vector<double> plus{job.plus.value_or(0.0)};
          const std::vector<double> minus{job.minus.value_or(0.0)};
          t = denoise_family_tuple(test, noise, snr, plus, minus, selective, 0.0, options, rng);
        }
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kZeroEnergy || attempt == 15) throw;
      }
    }
    switch (task) {
      case TaskKind::kDenoiser:
        out = denoise(model, t.noisy, t.minus_rec, config.enhance);
        break;
      case TaskKind::kSelectiveDenoiser:
        out = selective_denoise(model, t.noisy, t.plus_rec, t.minus_rec, config.enhance);
        break;
      case TaskKind::kSeparator:
        out = separate(model, t.noisy, t.plus_rec, t.minus_rec, config.enhance);
        break;
    }
    AudioBuffer interference = t.noisy;
    for (std::size_t k = 0; k < interference.samples.size(); ++k) {
      interference.samples[k] -= t.target.samples[k];
    }
    enhanced[i] = {job.keys,
                   metrics::score_pair(t.target, interference, out, config.filter_length)};
    baseline[i] = {job.keys,
                   metrics::score_pair(t.target, interference, t.noisy, config.filter_length)};
  });

  if (task == TaskKind::kSeparator) {
    const std::size_t n = enhanced.size();
    for (std::size_t i = 0; i < n; ++i) {
      enhanced.push_back({{"all"}, enhanced[i].metrics});
      baseline.push_back({{"all"}, baseline[i].metrics});
    }
  }
  return EvalResult{metrics::aggregate_report(enhanced, layout),
                    metrics::aggregate_report(baseline, layout)};
}

}  // namespace nhans
