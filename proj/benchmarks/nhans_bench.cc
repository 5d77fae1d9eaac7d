// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <random>

#include <benchmark/benchmark.h>

#include "nhans/dsp.h"
#include "nhans/metrics.h"
#include "nhans/model.h"
#include "nhans/synth_corpus.h"
#include "nhans/training.h"

namespace {

nhans::ModelHyperparams desk_hyperparams() {
  nhans::ModelHyperparams hp;
  hp.hidden = 128;
  hp.blocks = 2;
  hp.context = 2;
  hp.embedding = 32;
  return hp;
}

nhans::AudioBuffer noisy_signal(double seconds) {
  std::mt19937_64 rng(3);
  nhans::AudioBuffer x = nhans::synth::voice(nhans::synth::speaker_profiles()[0], seconds, rng);
  const nhans::AudioBuffer n = nhans::synth::noise("pink", seconds, rng);
  for (std::size_t i = 0; i < x.samples.size(); ++i) x.samples[i] += n.samples[i];
  return x;
}

void BM_Stft(benchmark::State& state) {
  const nhans::AudioBuffer x = noisy_signal(static_cast<double>(state.range(0)));
  const nhans::StftParams params;
  for (auto _ : state) benchmark::DoNotOptimize(nhans::stft(x, params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_StftRoundTrip(benchmark::State& state) {
  const nhans::AudioBuffer x = noisy_signal(1.0);
  const nhans::StftParams params;
  for (auto _ : state) benchmark::DoNotOptimize(nhans::istft(nhans::stft(x, params)));
}
BENCHMARK(BM_StftRoundTrip)->Unit(benchmark::kMillisecond);

void BM_Resample44kTo16k(benchmark::State& state) {
  nhans::AudioBuffer x = noisy_signal(1.0);
  x = nhans::resample(x, 44100);
  for (auto _ : state) benchmark::DoNotOptimize(nhans::resample(x, 16000));
}
BENCHMARK(BM_Resample44kTo16k)->Unit(benchmark::kMillisecond);

void BM_MaskForward(benchmark::State& state) {
  const auto model =
      nhans::PmAuxModel::create(nhans::TaskKind::kDenoiser, desk_hyperparams(), 1);
  const nhans::AudioBuffer x = noisy_signal(1.0);
  const auto logmag = nhans::log_magnitude(nhans::stft(x, model.hyperparams.stft));
  const auto plus = nhans::encode_reference(model, nhans::Polarity::kPositive,
                                            nhans::mute_recording());
  const auto minus = nhans::encode_reference(model, nhans::Polarity::kNegative, x);
  for (auto _ : state) benchmark::DoNotOptimize(nhans::estimate_mask(model, logmag, plus, minus));
}
BENCHMARK(BM_MaskForward)->Unit(benchmark::kMillisecond);

void BM_EnhanceOneSecond(benchmark::State& state) {
  const auto model =
      nhans::PmAuxModel::create(nhans::TaskKind::kDenoiser, desk_hyperparams(), 1);
  const nhans::AudioBuffer x = noisy_signal(1.0);
  const nhans::AudioBuffer neg = noisy_signal(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(nhans::denoise(model, x, neg));
}
BENCHMARK(BM_EnhanceOneSecond)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  nhans::TrainConfig config;
  config.model = desk_hyperparams();
  config.batch_size = static_cast<int>(state.range(0));
  const nhans::Corpus corpus = nhans::resolve_corpus(config, nhans::Split::kTrain);
  std::vector<nhans::MixTuple> tuples;
  for (int i = 0; i < config.batch_size; ++i) {
    tuples.push_back(nhans::sample_tuple(corpus, config, static_cast<std::uint64_t>(i)));
  }
  const nhans::Batch batch = nhans::make_batch(config.model, tuples);
  auto model = nhans::PmAuxModel::create(config.task, config.model, 1);
  auto params = model.parameters();
  auto adam = nhans::nn::make_adam(params);
  for (auto _ : state) benchmark::DoNotOptimize(nhans::train_step(model, adam, batch));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SampleBatch(benchmark::State& state) {
  nhans::TrainConfig config;
  config.model = desk_hyperparams();
  const nhans::Corpus corpus = nhans::resolve_corpus(config, nhans::Split::kTrain);
  std::uint64_t index = 0;
  for (auto _ : state) {
    std::vector<nhans::MixTuple> tuples;
    for (int i = 0; i < 8; ++i) tuples.push_back(nhans::sample_tuple(corpus, config, index++));
    benchmark::DoNotOptimize(nhans::make_batch(config.model, tuples));
  }
}
BENCHMARK(BM_SampleBatch)->Unit(benchmark::kMillisecond);

void BM_BssEval(benchmark::State& state) {
  const nhans::AudioBuffer a = noisy_signal(3.0);
  std::mt19937_64 rng(9);
  const nhans::AudioBuffer b = nhans::synth::noise("white", 3.0, rng);
  const nhans::AudioBuffer refs[] = {a, b};
  for (auto _ : state) {
    benchmark::DoNotOptimize(nhans::metrics::bss_eval(refs, a, 0, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_BssEval)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Stoi(benchmark::State& state) {
  const nhans::AudioBuffer a = noisy_signal(3.0);
  for (auto _ : state) benchmark::DoNotOptimize(nhans::metrics::stoi(a, a));
}
BENCHMARK(BM_Stoi)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
