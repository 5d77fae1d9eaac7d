// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_MODEL_H_
#define NHANS_MODEL_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nhans/audio_io.h"
#include "nhans/dsp.h"
#include "nhans/nn.h"

namespace nhans {

enum class TaskKind { kDenoiser, kSelectiveDenoiser, kSeparator };

std::string_view to_string(TaskKind task);
/// Accepts "denoiser", "selective_denoiser" and "separator".
TaskKind parse_task(std::string_view name);

/// Denoiser and selective denoiser share one parameter set.
bool same_model_family(TaskKind a, TaskKind b);

enum class Polarity { kPositive, kNegative };

struct ModelHyperparams {
  int hidden = 256;
  int blocks = 4;
  int context = 5;
  int embedding = 64;
  StftParams stft;
  // Log-magnitudes are mapped to (x - offset) / scale before the network.
  // The defaults center speech-plus-noise spectra near zero mean, unit spread.
  double feature_offset = -8.0;
  double feature_scale = 6.0;

  int bins() const { return stft.bins(); }
  int context_width() const { return (2 * context + 1) * bins(); }
  void validate() const;
  bool operator==(const ModelHyperparams&) const = default;
};

struct EmbeddingVector {
  Eigen::RowVectorXd values;
  Polarity polarity = Polarity::kPositive;
};

/// frames x bins gains in (0, 1).
struct RatioMask {
  RealMatrix values;
};

struct ReferenceEncoder {
  nn::DenseLayer input;
  std::vector<nn::ResidualBlock> blocks;
  nn::DenseLayer output;
};

struct Enhancer {
  nn::DenseLayer input;
  std::vector<nn::ResidualBlock> blocks;  // conditioned on [+emb, -emb]
  nn::DenseLayer mask_head;
};

/// The +A / -A reference encoders and the conditioned enhancement network.
/// Immutable once loaded; all inference entry points take it by const ref.
struct PmAuxModel {
  TaskKind task = TaskKind::kDenoiser;
  ModelHyperparams hyperparams;
  ReferenceEncoder plus_encoder;
  ReferenceEncoder minus_encoder;
  Enhancer enhancer;

  static PmAuxModel create(TaskKind task, const ModelHyperparams& hp,
                           std::uint64_t seed);

  /// Stable order, used by the optimizer and the checkpoint format.
  std::vector<nn::Tensor*> parameters();
  std::vector<const nn::Tensor*> parameters() const;
};

// Building blocks shared by inference and training.

/// (logmag - offset) / scale.
RealMatrix normalize_features(const ModelHyperparams& hp, const RealMatrix& logmag);

/// Row t is [f(t-C), ..., f(t+C)] with out-of-range frames mirrored.
RealMatrix stack_context(const RealMatrix& features, int context);

/// Per-frame encoder followed by a mean over each segment of rows.
nn::Var forward_embeddings(nn::Graph& g, ReferenceEncoder& encoder,
                           nn::Var frames, std::span<const Eigen::Index> lengths);
nn::Var forward_embeddings(nn::Graph& g, const ReferenceEncoder& encoder,
                           nn::Var frames, std::span<const Eigen::Index> lengths);

/// Mask rows for stacked input rows; plus/minus rows must align with them.
nn::Var forward_mask(nn::Graph& g, Enhancer& enhancer, nn::Var input,
                     nn::Var plus_rows, nn::Var minus_rows);
nn::Var forward_mask(nn::Graph& g, const Enhancer& enhancer, nn::Var input,
                     nn::Var plus_rows, nn::Var minus_rows);

/// The recording that stands in for "mute": 0.1 s of zeros at 16 kHz.
AudioBuffer mute_recording();

/// Shortest reference accepted by the encoders; shorter input is zero-padded.
inline constexpr double kMinReferenceSeconds = 0.1;

/// Log-magnitude frames of a reference after format conversion, padding and
/// the silent-recording canonicalization.
RealMatrix reference_features(const ModelHyperparams& hp, const AudioBuffer& rec);

EmbeddingVector encode_reference(const PmAuxModel& model, Polarity polarity,
                                 const AudioBuffer& rec);

RatioMask estimate_mask(const PmAuxModel& model, const LogMagSpectrogram& noisy,
                        const EmbeddingVector& plus, const EmbeddingVector& minus);

/// Passing kMute as the positive reference selects the denoising special case.
inline constexpr std::nullopt_t kMute = std::nullopt;

struct EnhanceOptions {
  /// Replaces the estimated mask by a constant (tests and baselines).
  std::optional<double> forced_mask;
};

AudioBuffer enhance(const PmAuxModel& model, const AudioBuffer& noisy,
                    const std::optional<AudioBuffer>& plus_rec,
                    const AudioBuffer& minus_rec, const EnhanceOptions& options = {});

AudioBuffer denoise(const PmAuxModel& model, const AudioBuffer& noisy,
                    const AudioBuffer& minus_rec, const EnhanceOptions& options = {});

AudioBuffer selective_denoise(const PmAuxModel& model, const AudioBuffer& noisy,
                              const AudioBuffer& plus_rec, const AudioBuffer& minus_rec,
                              const EnhanceOptions& options = {});

AudioBuffer separate(const PmAuxModel& model, const AudioBuffer& mixture,
                     const AudioBuffer& target_ref, const AudioBuffer& interference_ref,
                     const EnhanceOptions& options = {});

}  // namespace nhans

#endif  // NHANS_MODEL_H_
