// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/cli.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nhans/audio_io.h"
#include "nhans/checkpoint.h"
#include "nhans/error.h"
#include "nhans/rtf.h"
#include "nhans/synth_corpus.h"
#include "nhans/training.h"

namespace nhans::cli {

namespace fs = std::filesystem;

namespace {

// Raised for usage problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnhanceArgs {
  std::string input;
  std::string output;
  std::string pos;
  std::string neg;
  std::string model;
  std::string format = "pcm16";
  bool overwrite = false;
  int jobs = 0;
};

struct TrainArgs {
  std::string config;
  std::string output;
  std::string log;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

struct EvalArgs {
  std::string model;
  std::string task;
  std::string config;
  std::string corpus;
  std::string output;
  std::string grid;
  std::string plus_grid;
  std::string minus_grid;
  std::optional<std::uint64_t> seed;
  int pairs = 8;
  int jobs = 0;
};

struct BenchArgs {
  std::string model;
  std::string config;
  std::string output;
  double duration = 10.0;
  int repetitions = 5;
  std::uint64_t seed = 1;
};

struct CorpusArgs {
  std::string output;
  std::uint64_t seed = 2020;
  bool overwrite = false;
};

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

std::string family_file(TaskKind task) {
  return task == TaskKind::kSeparator ? "separator.ckpt" : "denoiser.ckpt";
}

fs::path resolve_model_path(const std::string& flag, TaskKind task) {
  if (!flag.empty()) {
    fs::path p(flag);
    return fs::is_directory(p) ? p / family_file(task) : p;
  }
  const char* dir = std::getenv("NHANS_MODEL_DIR");
  if (dir == nullptr || *dir == '\0') {
    throw UsageError("no --model given and NHANS_MODEL_DIR is not set");
  }
  return fs::path(dir) / family_file(task);
}

WavSampleFormat parse_format(const std::string& name) {
  if (name == "pcm16") return WavSampleFormat::kPcm16;
  if (name == "float32") return WavSampleFormat::kFloat32;
  throw UsageError("--format must be pcm16 or float32");
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw UsageError("bad SNR grid entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty SNR grid");
  return out;
}

void write_output(const fs::path& path, const AudioBuffer& audio, WavSampleFormat format) {
  fs::path tmp = path;
  tmp += ".partial";
  write_wav(tmp, audio, format);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

int run_enhance(TaskKind task, const EnhanceArgs& a, std::ostream& err) {
  const std::string name = task == TaskKind::kDenoiser            ? "denoise"
                           : task == TaskKind::kSelectiveDenoiser ? "selective"
                                                                  : "separate";
  if (task == TaskKind::kDenoiser && !a.pos.empty()) {
    throw UsageError("denoise does not take --pos; use selective for a noise to preserve");
  }
  if (task != TaskKind::kDenoiser && a.pos.empty()) {
    throw UsageError(name + " requires --pos");
  }
  const WavSampleFormat format = parse_format(a.format);
  const fs::path input(a.input);
  const fs::path output(a.output);
  if (!fs::exists(input)) throw Error(ErrorCode::kFileNotFound, "no such input: " + a.input);

  const PmAuxModel model = load_model(resolve_model_path(a.model, task));
  const AudioBuffer neg = read_wav(a.neg);
  const std::optional<AudioBuffer> pos =
      a.pos.empty() ? std::nullopt : std::optional<AudioBuffer>(read_wav(a.pos));

  auto process = [&](const fs::path& in, const fs::path& out) {
    if (fs::exists(out) && !a.overwrite) {
      throw Error(ErrorCode::kIoFailure,
                  out.string() + " already exists (pass --overwrite to replace it)");
    }
    const AudioBuffer noisy = read_wav(in);
    AudioBuffer result;
    switch (task) {
      case TaskKind::kDenoiser: result = denoise(model, noisy, neg); break;
      case TaskKind::kSelectiveDenoiser:
        result = selective_denoise(model, noisy, *pos, neg);
        break;
      case TaskKind::kSeparator: result = separate(model, noisy, *pos, neg); break;
    }
    write_output(out, result, format);
  };

  if (!fs::is_directory(input)) {
    fs::path out = output;
    if (fs::is_directory(out)) out /= input.filename();
    process(input, out);
    return 0;
  }

  if (fs::exists(output) && !fs::is_directory(output)) {
    throw UsageError("input is a directory, so --output must be a directory");
  }
  fs::create_directories(output);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (!entry.is_regular_file()) continue;
    if (!is_wav(entry.path())) {
      err << "nhans " << name << ": warning: skipping non-WAV file "
          << entry.path().filename().string() << '\n';
      continue;
    }
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::mutex err_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        process(files[i], output / files[i].filename());
      } catch (const std::exception& e) {
        ++failures;
        std::lock_guard lock(err_mutex);
        err << "nhans " << name << ": error: " << files[i].filename().string() << ": "
            << e.what() << '\n';
      }
    }
  };
  std::size_t threads = a.jobs > 0 ? static_cast<std::size_t>(a.jobs)
                                   : std::max(1u, std::thread::hardware_concurrency());
  threads = std::max<std::size_t>(1, std::min(threads, files.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failures > 0) {
    err << "nhans " << name << ": " << failures << " of " << files.size()
        << " files failed\n";
    return 1;
  }
  return 0;
}

int run_train(const TrainArgs& a, std::ostream& err) {
  TrainConfig config = load_train_config(a.config);
  if (!a.output.empty()) config.checkpoint = a.output;
  if (!a.log.empty()) config.log = a.log;
  if (a.seed) config.seed = *a.seed;
  if (a.steps) config.steps = *a.steps;
  if (config.checkpoint.empty()) throw UsageError("train needs a checkpoint path (--output)");
  const std::int64_t every = std::max(1, config.steps / 20);
  train(config, [&](const TrainProgress& p) {
    if (p.step % every == 0) err << "step " << p.step << "  loss " << p.loss << '\n';
  });
  err << "wrote " << config.checkpoint.string() << '\n';
  return 0;
}

int run_evaluate(const EvalArgs& a, std::ostream& err) {
  const Checkpoint cp = load_checkpoint(resolve_model_path(
      a.model, a.task.empty() ? TaskKind::kDenoiser : parse_task(a.task)));
  const TaskKind task = a.task.empty() ? cp.model.task : parse_task(a.task);

  TrainConfig source = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  source.task = task;
  source.selective_fraction = task == TaskKind::kSelectiveDenoiser ? 1.0 : 0.0;
  if (!a.corpus.empty()) {
    source.corpus_root = a.corpus;
    source.manifest.clear();
  }
  const Corpus test = resolve_corpus(source, Split::kTest);

  EvalConfig config;
  config.pairs_per_cell = a.pairs;
  config.threads = a.jobs;
  config.speakers = source.speakers;
  config.reference_mode = source.reference_mode;
  config.reference_seconds = source.reference_seconds;
  if (a.seed) config.seed = *a.seed;
  if (!a.grid.empty()) config.snr_grid = parse_grid(a.grid);
  if (!a.plus_grid.empty()) config.plus_snr_grid = parse_grid(a.plus_grid);
  if (!a.minus_grid.empty()) config.minus_snr_grid = parse_grid(a.minus_grid);

  const EvalResult result = evaluate(cp.model, task, test, config);
  const std::string table = metrics::render_table(result.enhanced, "enhanced") + "\n" +
                            metrics::render_table(result.baseline, "unprocessed");
  err << table;
  if (!a.output.empty()) {
    const fs::path out(a.output);
    if (out.extension() == ".csv") {
      std::string csv = metrics::render_csv(result.enhanced);
      std::string base = metrics::render_csv(result.baseline);
      // One header; baseline groups are prefixed.
      std::istringstream lines(base);
      std::string line;
      std::getline(lines, line);
      while (std::getline(lines, line)) csv += "baseline " + line + "\n";
      write_text(out, csv);
    } else {
      write_text(out, table);
    }
  }
  return 0;
}

int run_benchmark(const BenchArgs& a, std::ostream& err) {
  PmAuxModel model;
  const char* env = std::getenv("NHANS_MODEL_DIR");
  if (!a.model.empty() || (env != nullptr && *env != '\0')) {
    model = load_model(resolve_model_path(a.model, TaskKind::kDenoiser));
  } else {
    const TrainConfig config = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    err << "nhans benchmark: no model given, timing a randomly initialized network\n";
    model = PmAuxModel::create(TaskKind::kDenoiser, config.model, a.seed);
  }
  const RtfReport report = benchmark_rtf(model, a.duration, a.repetitions, a.seed);
  const std::string text = render_rtf(report);
  err << text;
  if (!a.output.empty()) write_text(a.output, text);
  return 0;
}

int run_make_corpus(const CorpusArgs& a, std::ostream& err) {
  const fs::path root(a.output);
  if (fs::exists(root / "manifest.tsv") && !a.overwrite) {
    throw UsageError(root.string() + " already holds a corpus (pass --overwrite)");
  }
  fs::create_directories(root);
  const CorpusManifest m = synth::write_corpus(root, a.seed);
  err << "wrote " << m.entries.size() << " files under " << root.string() << '\n';
  return 0;
}

void add_enhance_options(CLI::App* cmd, EnhanceArgs& a, bool with_pos, const char* pos_help,
                         const char* neg_help) {
  cmd->add_option("--input", a.input, "noisy WAV file or directory of WAV files")->required();
  cmd->add_option("--output", a.output, "output WAV file or directory")->required();
  cmd->add_option("--neg", a.neg, neg_help)->required();
  auto* pos = cmd->add_option("--pos", a.pos, pos_help);
  if (with_pos) {
    pos->required();
  } else {
    pos->group("");  // accepted only to report a clear error
  }
  cmd->add_option("--model", a.model, "checkpoint file or directory (default: $NHANS_MODEL_DIR)");
  cmd->add_option("--format", a.format, "output sample format: pcm16 or float32");
  cmd->add_option("--jobs", a.jobs, "worker threads for directory input (0: all cores)");
  cmd->add_flag("--overwrite", a.overwrite, "replace existing outputs");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"N-HANS noise and speaker aware enhancement", "nhans"};
  app.set_version_flag("--version", NHANS_VERSION_STRING);
  app.require_subcommand(1);

  EnhanceArgs den, sel, sep;
  auto* denoise_cmd = app.add_subcommand("denoise", "suppress the noise given by --neg");
  add_enhance_options(denoise_cmd, den, false, "", "recording of the noise to suppress");
  auto* selective_cmd =
      app.add_subcommand("selective", "keep the --pos noise, suppress the --neg noise");
  add_enhance_options(selective_cmd, sel, true, "recording of the noise to preserve",
                      "recording of the noise to suppress");
  auto* separate_cmd =
      app.add_subcommand("separate", "extract the --pos speaker, suppress the --neg speaker");
  add_enhance_options(separate_cmd, sep, true, "enrollment recording of the target speaker",
                      "enrollment recording of the interfering speaker");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model from a key=value config");
  train_cmd->add_option("--config", tr.config, "training config file")->required();
  train_cmd->add_option("--output", tr.output, "checkpoint path (overrides config)");
  train_cmd->add_option("--log", tr.log, "step/loss log path (overrides config)");
  train_cmd->add_option("--seed", tr.seed, "random seed (overrides config)");
  train_cmd->add_option("--steps", tr.steps, "number of updates (overrides config)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  eval_cmd->add_option("--model", ev.model, "checkpoint (default: $NHANS_MODEL_DIR)");
  eval_cmd->add_option("--task", ev.task, "denoiser, selective_denoiser or separator");
  eval_cmd->add_option("--config", ev.config, "config naming the corpus");
  eval_cmd->add_option("--corpus", ev.corpus, "corpus directory (overrides config)");
  eval_cmd->add_option("--output", ev.output, "report file (.csv for CSV)");
  eval_cmd->add_option("--grid", ev.grid, "comma-separated SNRs in dB");
  eval_cmd->add_option("--plus-grid", ev.plus_grid, "comma-separated +SNRs in dB");
  eval_cmd->add_option("--minus-grid", ev.minus_grid, "comma-separated -SNRs in dB");
  eval_cmd->add_option("--pairs", ev.pairs, "test mixtures per grid cell");
  eval_cmd->add_option("--seed", ev.seed, "mixture seed");
  eval_cmd->add_option("--jobs", ev.jobs, "worker threads (0: all cores)");

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("benchmark", "measure the real-time factor");
  bench_cmd->add_option("--model", bn.model, "checkpoint (default: $NHANS_MODEL_DIR)");
  bench_cmd->add_option("--config", bn.config, "hyperparameters when no model is given");
  bench_cmd->add_option("--duration", bn.duration, "seconds of audio per repetition");
  bench_cmd->add_option("--repetitions", bn.repetitions, "timed repetitions");
  bench_cmd->add_option("--seed", bn.seed, "input signal seed");
  bench_cmd->add_option("--output", bn.output, "report file");

  CorpusArgs co;
  auto* corpus_cmd = app.add_subcommand("make-corpus", "write the synthetic corpus as WAV files");
  corpus_cmd->add_option("--output", co.output, "corpus directory")->required();
  corpus_cmd->add_option("--seed", co.seed, "corpus seed");
  corpus_cmd->add_flag("--overwrite", co.overwrite, "replace an existing corpus");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, err, err);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, err, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "nhans: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*denoise_cmd) return run_enhance(TaskKind::kDenoiser, den, err);
    if (*selective_cmd) return run_enhance(TaskKind::kSelectiveDenoiser, sel, err);
    if (*separate_cmd) return run_enhance(TaskKind::kSeparator, sep, err);
    if (*train_cmd) return run_train(tr, err);
    if (*eval_cmd) return run_evaluate(ev, err);
    if (*bench_cmd) return run_benchmark(bn, err);
    if (*corpus_cmd) return run_make_corpus(co, err);
  } catch (const UsageError& e) {
    err << "nhans: error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "nhans: error: " << e.what() << " [" << to_string(e.code()) << "]\n";
    return 1;
  } catch (const std::exception& e) {
    err << "nhans: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cerr);
}

}  // namespace nhans::cli
