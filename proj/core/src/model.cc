// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "nhans/error.h"

namespace nhans {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kDenoiser: return "denoiser";
    case TaskKind::kSelectiveDenoiser: return "selective_denoiser";
    case TaskKind::kSeparator: return "separator";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  if (name == "denoiser") return TaskKind::kDenoiser;
  if (name == "selective_denoiser" || name == "selective") {
    return TaskKind::kSelectiveDenoiser;
  }
  if (name == "separator") return TaskKind::kSeparator;
  throw Error(ErrorCode::kInvalidArgument, "unknown task '" + std::string(name) + "'");
}

bool same_model_family(TaskKind a, TaskKind b) {
  return (a == TaskKind::kSeparator) == (b == TaskKind::kSeparator);
}

void ModelHyperparams::validate() const {
  stft.validate();
  if (hidden <= 0 || blocks < 0 || context < 0 || embedding <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "model hyperparameters must be positive");
  }
  if (!(feature_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "feature_scale must be positive");
  }
}

namespace {

// Each residual branch starts at 1/sqrt(2R) of the He scale, so R blocks
// grow the hidden variance by a bounded factor and the mask head starts
// away from sigmoid saturation.
double branch_gain(const ModelHyperparams& hp) {
  return 1.0 / std::sqrt(2.0 * hp.blocks);
}

ReferenceEncoder make_encoder(const std::string& name, const ModelHyperparams& hp,
                              nn::Rng& rng) {
  ReferenceEncoder enc;
  enc.input = nn::make_dense(name + ".input", hp.bins(), hp.hidden, nn::Init::kHeUniform, rng);
  for (int b = 0; b < hp.blocks; ++b) {
    enc.blocks.push_back(nn::make_residual_block(name + ".block" + std::to_string(b),
                                                 hp.hidden, 0, rng, branch_gain(hp)));
  }
  enc.output = nn::make_dense(name + ".output", hp.hidden, hp.embedding,
                              nn::Init::kHeUniform, rng);
  return enc;
}

template <typename Block>
void collect(Block& block, auto& out) {
  if (block.condition) {
    out.push_back(&block.condition->weight);
    out.push_back(&block.condition->bias);
  }
  out.push_back(&block.inner.weight);
  out.push_back(&block.inner.bias);
  out.push_back(&block.outer.weight);
  out.push_back(&block.outer.bias);
}

template <typename Model, typename Out>
void collect_model(Model& m, Out& out) {
  for (auto* enc : {&m.plus_encoder, &m.minus_encoder}) {
    out.push_back(&enc->input.weight);
    out.push_back(&enc->input.bias);
    for (auto& b : enc->blocks) collect(b, out);
    out.push_back(&enc->output.weight);
    out.push_back(&enc->output.bias);
  }
  out.push_back(&m.enhancer.input.weight);
  out.push_back(&m.enhancer.input.bias);
  for (auto& b : m.enhancer.blocks) collect(b, out);
  out.push_back(&m.enhancer.mask_head.weight);
  out.push_back(&m.enhancer.mask_head.bias);
}

long mirror_index(long k, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  k %= period;
  if (k < 0) k += period;
  return k < n ? k : period - k;
}

template <typename Encoder>
nn::Var embeddings_impl(nn::Graph& g, Encoder& enc, nn::Var frames,
                        std::span<const Eigen::Index> lengths) {
  nn::Var h = g.dense(frames, enc.input);
  for (auto& block : enc.blocks) h = g.residual_block(h, block);
  nn::Var out = g.dense(g.relu(h), enc.output);
  return g.mean_pool_segments(out, lengths);
}

template <typename Enh>
nn::Var mask_impl(nn::Graph& g, Enh& enh, nn::Var input, nn::Var plus_rows,
                  nn::Var minus_rows) {
  nn::Var h = g.dense(input, enh.input);
  nn::Var condition = g.concat({plus_rows, minus_rows});
  for (auto& block : enh.blocks) h = g.residual_block(h, block, condition);
  return g.sigmoid(g.dense(g.relu(h), enh.mask_head));
}

bool is_silent(const AudioBuffer& a) {
  return std::all_of(a.samples.begin(), a.samples.end(), [](double s) { return s == 0.0; });
}

}  // namespace

PmAuxModel PmAuxModel::create(TaskKind task, const ModelHyperparams& hp,
                              std::uint64_t seed) {
  hp.validate();
  nn::Rng rng(seed);
  PmAuxModel m;
  m.task = task;
  m.hyperparams = hp;
  m.plus_encoder = make_encoder("plus_encoder", hp, rng);
  m.minus_encoder = make_encoder("minus_encoder", hp, rng);
  m.enhancer.input = nn::make_dense("enhancer.input", hp.context_width(), hp.hidden,
                                    nn::Init::kHeUniform, rng);
  for (int b = 0; b < hp.blocks; ++b) {
    m.enhancer.blocks.push_back(nn::make_residual_block(
        "enhancer.block" + std::to_string(b), hp.hidden, 2 * hp.embedding, rng, branch_gain(hp)));
  }
  m.enhancer.mask_head = nn::make_dense("enhancer.mask_head", hp.hidden, hp.bins(),
                                        nn::Init::kGlorotUniform, rng);
  return m;
}

std::vector<nn::Tensor*> PmAuxModel::parameters() {
  std::vector<nn::Tensor*> out;
  collect_model(*this, out);
  return out;
}

std::vector<const nn::Tensor*> PmAuxModel::parameters() const {
  std::vector<const nn::Tensor*> out;
  collect_model(*this, out);
  return out;
}

RealMatrix normalize_features(const ModelHyperparams& hp, const RealMatrix& logmag) {
  return ((logmag.array() - hp.feature_offset) / hp.feature_scale).matrix();
}

RealMatrix stack_context(const RealMatrix& features, int context) {
  const Eigen::Index frames = features.rows();
  const Eigen::Index bins = features.cols();
  RealMatrix out(frames, (2 * context + 1) * bins);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = -context; k <= context; ++k) {
      const long src = mirror_index(static_cast<long>(t) + k, static_cast<long>(frames));
      out.block(t, (k + context) * bins, 1, bins) = features.row(src);
    }
  }
  return out;
}

nn::Var forward_embeddings(nn::Graph& g, ReferenceEncoder& encoder, nn::Var frames,
                           std::span<const Eigen::Index> lengths) {
  return embeddings_impl(g, encoder, frames, lengths);
}

nn::Var forward_embeddings(nn::Graph& g, const ReferenceEncoder& encoder,
                           nn::Var frames, std::span<const Eigen::Index> lengths) {
  return embeddings_impl(g, encoder, frames, lengths);
}

nn::Var forward_mask(nn::Graph& g, Enhancer& enhancer, nn::Var input,
                     nn::Var plus_rows, nn::Var minus_rows) {
  return mask_impl(g, enhancer, input, plus_rows, minus_rows);
}

nn::Var forward_mask(nn::Graph& g, const Enhancer& enhancer, nn::Var input,
                     nn::Var plus_rows, nn::Var minus_rows) {
  return mask_impl(g, enhancer, input, plus_rows, minus_rows);
}

AudioBuffer mute_recording() {
  const auto n = static_cast<std::size_t>(kMinReferenceSeconds * kModelSampleRate);
  return AudioBuffer(std::vector<double>(n, 0.0), kModelSampleRate, 1);
}

RealMatrix reference_features(const ModelHyperparams& hp, const AudioBuffer& rec) {
  if (rec.empty()) throw Error(ErrorCode::kEmptyInput, "empty reference recording");
  AudioBuffer x = to_model_format(rec);
  // Any all-zero recording is the mute reference, whatever its length.
  if (is_silent(x)) x = mute_recording();
  const auto min_len = static_cast<std::size_t>(kMinReferenceSeconds * x.sample_rate);
  if (x.samples.size() < min_len) x.samples.resize(min_len, 0.0);
  StftParams params = hp.stft;
  params.sample_rate = x.sample_rate;
  return normalize_features(hp, log_magnitude(stft(x, params)).values);
}

EmbeddingVector encode_reference(const PmAuxModel& model, Polarity polarity,
                                 const AudioBuffer& rec) {
  RealMatrix features = reference_features(model.hyperparams, rec);
  const Eigen::Index lengths[] = {features.rows()};
  nn::Graph g;
  const ReferenceEncoder& enc =
      polarity == Polarity::kPositive ? model.plus_encoder : model.minus_encoder;
  nn::Var emb = forward_embeddings(g, enc, g.constant(std::move(features)), lengths);
  EmbeddingVector out;
  out.values = g.value(emb).row(0);
  out.polarity = polarity;
  return out;
}

RatioMask estimate_mask(const PmAuxModel& model, const LogMagSpectrogram& noisy,
                        const EmbeddingVector& plus, const EmbeddingVector& minus) {
  const ModelHyperparams& hp = model.hyperparams;
  if (noisy.values.cols() != hp.bins()) {
    throw Error(ErrorCode::kShapeMismatch, "noisy spectrogram has " +
                                               std::to_string(noisy.values.cols()) +
                                               " bins, model expects " +
                                               std::to_string(hp.bins()));
  }
  if (noisy.values.rows() == 0) throw Error(ErrorCode::kEmptyInput, "no frames");
  if (plus.values.size() != hp.embedding || minus.values.size() != hp.embedding) {
    throw Error(ErrorCode::kShapeMismatch, "embedding width mismatch");
  }
  if (plus.polarity != Polarity::kPositive || minus.polarity != Polarity::kNegative) {
    throw Error(ErrorCode::kInvalidArgument, "embedding polarity mismatch");
  }
  const Eigen::Index frames = noisy.values.rows();
  nn::Graph g;
  nn::Var input =
      g.constant(stack_context(normalize_features(hp, noisy.values), hp.context));
  const Eigen::Index lengths[] = {frames};
  nn::Var p = g.repeat_rows(g.constant(plus.values), lengths);
  nn::Var m = g.repeat_rows(g.constant(minus.values), lengths);
  nn::Var mask = forward_mask(g, model.enhancer, input, p, m);
  return RatioMask{g.value(mask)};
}

AudioBuffer enhance(const PmAuxModel& model, const AudioBuffer& noisy,
                    const std::optional<AudioBuffer>& plus_rec,
                    const AudioBuffer& minus_rec, const EnhanceOptions& options) {
  if (noisy.empty()) throw Error(ErrorCode::kEmptyInput, "empty noisy input");
  if (minus_rec.empty()) throw Error(ErrorCode::kEmptyInput, "empty negative recording");
  validate(noisy);
  const ModelHyperparams& hp = model.hyperparams;

  AudioBuffer x = to_model_format(noisy);
  StftParams params = hp.stft;
  params.sample_rate = x.sample_rate;
  Spectrogram spec = stft(x, params);

  RealMatrix gains;
  if (options.forced_mask) {
    gains = RealMatrix::Constant(spec.frame_count(), params.bins(), *options.forced_mask);
  } else {
    EmbeddingVector plus = encode_reference(model, Polarity::kPositive,
                                            plus_rec ? *plus_rec : mute_recording());
    EmbeddingVector minus = encode_reference(model, Polarity::kNegative, minus_rec);
    gains = estimate_mask(model, log_magnitude(spec), plus, minus).values;
  }
  spec.frames = spec.frames.cwiseProduct(gains.cast<std::complex<double>>());
  AudioBuffer out = istft(spec);

  if (noisy.sample_rate != out.sample_rate) {
    out = resample(out, noisy.sample_rate);
    out.samples.resize(noisy.frame_count(), 0.0);
  }
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : out.samples) s /= peak;
  }
  return out;
}

namespace {

void require_family(const PmAuxModel& model, TaskKind wanted) {
  if (!same_model_family(model.task, wanted)) {
    throw Error(ErrorCode::kTaskMismatch,
                std::string("model was trained as ") + std::string(to_string(model.task)) +
                    ", cannot run " + std::string(to_string(wanted)));
  }
}

}  // namespace

AudioBuffer denoise(const PmAuxModel& model, const AudioBuffer& noisy,
                    const AudioBuffer& minus_rec, const EnhanceOptions& options) {
  require_family(model, TaskKind::kDenoiser);
  return enhance(model, noisy, kMute, minus_rec, options);
}

AudioBuffer selective_denoise(const PmAuxModel& model, const AudioBuffer& noisy,
                              const AudioBuffer& plus_rec, const AudioBuffer& minus_rec,
                              const EnhanceOptions& options) {
  require_family(model, TaskKind::kSelectiveDenoiser);
  if (plus_rec.empty()) throw Error(ErrorCode::kEmptyInput, "empty positive recording");
  return enhance(model, noisy, plus_rec, minus_rec, options);
}

AudioBuffer separate(const PmAuxModel& model, const AudioBuffer& mixture,
                     const AudioBuffer& target_ref, const AudioBuffer& interference_ref,
                     const EnhanceOptions& options) {
  require_family(model, TaskKind::kSeparator);
  if (target_ref.empty()) throw Error(ErrorCode::kEmptyInput, "empty target reference");
  return enhance(model, mixture, target_ref, interference_ref, options);
}

}  // namespace nhans
