// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_TRAINING_H_
#define NHANS_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nhans/checkpoint.h"
#include "nhans/metrics.h"
#include "nhans/mixing.h"
#include "nhans/model.h"

namespace nhans {

/// Training run description. Text form: one key=value per line, '#' starts
/// a comment; see parse_train_config for the keys.
struct TrainConfig {
  TaskKind task = TaskKind::kDenoiser;
  int steps = 1000;
  int batch_size = 8;
  double lr = 1e-4;
  /// Steps over which the learning rate halves, counted from step 0 so a
  /// resumed run follows the same curve; 0 keeps it constant.
  int lr_half_life = 0;
  std::vector<double> snr_grid{0, 3, 5, 8, 10, 15};
  std::vector<double> plus_snr_grid{0, 3, 5, 8, 10, 15};
  std::vector<double> minus_snr_grid{0, 3, 5, 8, 10, 15};
  std::uint64_t seed = 1;
  /// Corpus source, first match wins: manifest file, corpus directory tree
  /// (clean/, noise/, speakers/), otherwise the synthetic corpus.
  std::filesystem::path manifest;
  std::filesystem::path corpus_root;
  std::uint64_t corpus_seed = 2020;
  /// Restricts the noise material to these categories; empty keeps all.
  std::vector<std::string> noise_categories;
  /// Synthetic corpus size overrides; 0 keeps the generator defaults.
  int noises_per_category = 0;
  int clean_utterances = 0;
  std::filesystem::path checkpoint;  // written every eval_interval steps and at the end
  std::filesystem::path log;         // "step\tloss" lines
  std::filesystem::path resume;      // continue from this checkpoint
  int eval_interval = 0;             // 0: only the final checkpoint
  ModelHyperparams model;
  double crop_seconds = 1.0;
  double reference_seconds = 1.0;
  /// Share of selective tuples (positive noise present) for the denoiser family.
  /// Positive and negative noise come from different categories when more
  /// than one is available, else from different files of the one category.
  double selective_fraction = 0.5;
  ReferenceMode reference_mode = ReferenceMode::kDisjointSegment;
  /// Speaker ids the separator draws from; empty means all.
  std::vector<std::string> speakers;

  /// Throws Error(kInvalidArgument) on a bad value.
  void validate() const;
};

/// Unknown keys and malformed values throw Error(kInvalidArgument) naming the line.
TrainConfig parse_train_config(std::string_view text, const std::filesystem::path& base = {});
/// Relative paths in the file are resolved against its directory.
TrainConfig load_train_config(const std::filesystem::path& path);
std::string render_train_config(const TrainConfig& config);

/// Adam step size used for update `step` (1-based).
double learning_rate(const TrainConfig& config, std::int64_t step);

/// Throws Error(kCorpusMissing) if a configured path does not exist or the
/// selected split lacks the material the task needs.
Corpus resolve_corpus(const TrainConfig& config, Split split);

/// The tuple used as example `index` of a run. Pure in (corpus, config, index).
MixTuple sample_tuple(const Corpus& corpus, const TrainConfig& config, std::uint64_t index);

/// Network inputs and regression targets for a set of tuples.
struct Batch {
  RealMatrix input;         // stacked context features, rows = all noisy frames
  RealMatrix noisy_magnitude;
  RealMatrix target_magnitude;
  RealMatrix plus_frames;   // reference features, concatenated per example
  RealMatrix minus_frames;
  std::vector<Eigen::Index> frame_counts;
  std::vector<Eigen::Index> plus_counts;
  std::vector<Eigen::Index> minus_counts;
};

Batch make_batch(const ModelHyperparams& hp, std::span<const MixTuple> tuples);

/// Mean squared error between mask * |noisy| and |target|.
double batch_loss(const PmAuxModel& model, const Batch& batch);

/// One Adam update; returns the loss before the update.
double train_step(PmAuxModel& model, nn::AdamState& optimizer, const Batch& batch);

struct TrainProgress {
  std::int64_t step = 0;
  double loss = 0.0;
};

/// Runs config.steps updates (counting from the resumed step, if any).
/// Throws Error(kNonFiniteLoss) naming the step if the loss diverges.
Checkpoint train(const TrainConfig& config,
                 const std::function<void(const TrainProgress&)>& on_step = {});

struct EvalConfig {
  /// Denoiser: SNR per row. Selective: every (+SNR, -SNR) pair.
  std::vector<double> snr_grid{0, 3, 5, 10, 15};
  std::vector<double> plus_snr_grid{0, 5, 10};
  std::vector<double> minus_snr_grid{0, 5, 10};
  int pairs_per_cell = 8;
  std::uint64_t seed = 77;
  double reference_seconds = 1.0;
  ReferenceMode reference_mode = ReferenceMode::kDisjointSegment;
  std::vector<std::string> speakers;
  int filter_length = 512;
  int threads = 0;  // 0: hardware concurrency
  EnhanceOptions enhance;
};

struct EvalResult {
  metrics::MetricReport enhanced;
  metrics::MetricReport baseline;  // unprocessed mixture scored the same way
};

/// task selects the layout: denoiser, selective_denoiser or separator.
/// Throws Error(kTaskMismatch) if the model family does not match task.
EvalResult evaluate(const PmAuxModel& model, TaskKind task, const Corpus& test,
                    const EvalConfig& config);

}  // namespace nhans

#endif  // NHANS_TRAINING_H_
