// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nhans/error.h"
#include "nhans/training.h"
#include "test_support.h"

using namespace nhans;
using namespace nhans::testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TrainConfig small_config(TaskKind task = TaskKind::kDenoiser) {
  TrainConfig c;
  c.task = task;
  c.model = tiny_hyperparams();
  c.steps = 3;
  c.batch_size = 2;
  c.clean_utterances = 4;
  c.noises_per_category = 2;
  c.crop_seconds = 0.5;
  c.reference_seconds = 0.5;
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

bool same_parameters(const PmAuxModel& a, const PmAuxModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value != pb[i]->value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config files parse every documented key", "[training]") {
  const TrainConfig c = parse_train_config(
      "# comment line\n"
      "task = selective_denoiser\n"
      "steps=20   # trailing comment\n"
      "batch_size=4\nlr=0.001\nlr_half_life=300\n"
      "snr_grid=0, 5\nplus_snr_grid=3\nminus_snr_grid=-5,10\n"
      "seed=9\ncorpus_seed=11\n"
      "checkpoint=out/model.ckpt\nlog=/tmp/abs.log\neval_interval=5\n"
      "hidden=32\nblocks=1\ncontext=2\nembed=8\nfft_size=256\nhop=64\n"
      "crop_seconds=2\nreference_seconds=0.5\nselective_fraction=0.25\n"
      "reference_mode=same_category\nnoise_categories=tone, pink\n"
      "noises_per_category=3\nclean_utterances=5\nspeakers=f_0,m_1\n",
      "/base");
  CHECK(c.task == TaskKind::kSelectiveDenoiser);
  CHECK(c.steps == 20);
  CHECK(c.batch_size == 4);
  CHECK(c.lr == 0.001);
  CHECK(c.lr_half_life == 300);
  CHECK(c.snr_grid == std::vector<double>{0, 5});
  CHECK(c.minus_snr_grid == std::vector<double>{-5, 10});
  CHECK(c.seed == 9);
  CHECK(c.corpus_seed == 11);
  CHECK(c.checkpoint == std::filesystem::path("/base/out/model.ckpt"));
  CHECK(c.log == std::filesystem::path("/tmp/abs.log"));
  CHECK(c.model.hidden == 32);
  CHECK(c.model.embedding == 8);
  CHECK(c.model.stft.fft_size == 256);
  CHECK(c.reference_mode == ReferenceMode::kSameCategory);
  CHECK(c.noise_categories == std::vector<std::string>{"tone", "pink"});
  CHECK(c.speakers == std::vector<std::string>{"f_0", "m_1"});
  CHECK(c.noises_per_category == 3);

  const TrainConfig again = parse_train_config(render_train_config(c));
  CHECK(render_train_config(again) == render_train_config(c));
}

TEST_CASE("config errors are reported", "[training]") {
  CHECK(code_of([] { parse_train_config("colour=blue\n"); }) == ErrorCode::kInvalidArgument);
  CHECK_THROWS_AS(parse_train_config("steps\n"), Error);
  CHECK_THROWS_AS(parse_train_config("steps=many\n"), Error);
  CHECK_THROWS_AS(parse_train_config("task=enhancer\n"), Error);
  TrainConfig c;
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.lr_half_life = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.snr_grid.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(code_of([] { load_train_config("/nonexistent/x.cfg"); }) == ErrorCode::kFileNotFound);
}

TEST_CASE("tuple sampling is a pure function of seed and index", "[training]") {
  const TrainConfig c = small_config();
  const Corpus corpus = resolve_corpus(c, Split::kTrain);
  const MixTuple a = sample_tuple(corpus, c, 5);
  const MixTuple b = sample_tuple(corpus, c, 5);
  const MixTuple other = sample_tuple(corpus, c, 6);
  CHECK(a.noisy.samples == b.noisy.samples);
  CHECK(a.minus_rec.samples == b.minus_rec.samples);
  CHECK(a.noisy.samples != other.noisy.samples);
  CHECK(a.noisy.samples.size() == 8000);
}

TEST_CASE("single-category selective tuples use two files of that category", "[training]") {
  TrainConfig c = small_config();
  c.noise_categories = {"tone"};
  c.selective_fraction = 1.0;
  const Corpus corpus = resolve_corpus(c, Split::kTrain);
  for (const auto& n : corpus.noise) CHECK(n.label == "tone");
  for (std::uint64_t i = 0; i < 8; ++i) {
    const MixTuple t = sample_tuple(corpus, c, i);
    CHECK(t.plus_snr_db.has_value());
    CHECK(energy(t.plus_component.samples) > 0.0);
  }
}

TEST_CASE("missing corpus material is reported", "[training]") {
  TrainConfig c = small_config();
  c.noise_categories = {"no-such-category"};
  CHECK(code_of([&] { resolve_corpus(c, Split::kTrain); }) == ErrorCode::kCorpusMissing);
}

TEST_CASE("batches stack every example", "[training]") {
  const TrainConfig c = small_config();
  const Corpus corpus = resolve_corpus(c, Split::kTrain);
  const std::vector<MixTuple> tuples = {sample_tuple(corpus, c, 0), sample_tuple(corpus, c, 1)};
  const Batch b = make_batch(c.model, tuples);
  REQUIRE(b.frame_counts.size() == 2);
  CHECK(b.input.rows() == b.frame_counts[0] + b.frame_counts[1]);
  CHECK(b.input.cols() == c.model.context_width());
  CHECK(b.noisy_magnitude.rows() == b.input.rows());
  CHECK(b.target_magnitude.cols() == c.model.bins());
  CHECK(b.plus_frames.rows() == b.plus_counts[0] + b.plus_counts[1]);
  CHECK_THROWS_AS(make_batch(c.model, std::span<const MixTuple>{}), Error);
}

TEST_CASE("a zero learning rate leaves the parameters untouched", "[training]") {
  const TrainConfig c = small_config();
  const Corpus corpus = resolve_corpus(c, Split::kTrain);
  const std::vector<MixTuple> tuples = {sample_tuple(corpus, c, 0), sample_tuple(corpus, c, 1)};
  const Batch batch = make_batch(c.model, tuples);
  PmAuxModel model = PmAuxModel::create(c.task, c.model, 1);
  const PmAuxModel before = model;
  nn::AdamState adam = nn::make_adam(model.parameters(), {.lr = 0.0});
  const double loss = train_step(model, adam, batch);
  CHECK(std::isfinite(loss));
  CHECK_THAT(loss, WithinAbs(batch_loss(before, batch), 1e-12));
  CHECK(same_parameters(model, before));
}

TEST_CASE("the loss falls on a fixed batch", "[training]") {
  const TrainConfig c = small_config();
  const Corpus corpus = resolve_corpus(c, Split::kTrain);
  std::vector<MixTuple> tuples;
  for (std::uint64_t i = 0; i < 4; ++i) tuples.push_back(sample_tuple(corpus, c, i));
  const Batch batch = make_batch(c.model, tuples);
  PmAuxModel model = PmAuxModel::create(c.task, c.model, 1);
  nn::AdamState adam = nn::make_adam(model.parameters(), {.lr = 1e-4});
  double previous = batch_loss(model, batch);
  const double first = previous;
  for (int step = 0; step < 50; ++step) {
    train_step(model, adam, batch);
    const double now = batch_loss(model, batch);
    CHECK(now < previous);
    previous = now;
  }
  CHECK(previous < first);
}

TEST_CASE("the learning rate halves every half life", "[training]") {
  TrainConfig c;
  c.lr = 1e-3;
  CHECK(learning_rate(c, 1) == 1e-3);
  CHECK(learning_rate(c, 5000) == 1e-3);
  c.lr_half_life = 100;
  CHECK(learning_rate(c, 1) == 1e-3);
  CHECK_THAT(learning_rate(c, 101), WithinRel(5e-4, 1e-12));
  CHECK_THAT(learning_rate(c, 301), WithinRel(1.25e-4, 1e-12));
}

TEST_CASE("training is deterministic and resumable", "[training]") {
  TempDir dir("train");
  TrainConfig c = small_config();
  c.steps = 4;
  c.lr_half_life = 3;
  c.checkpoint = dir / "full.ckpt";
  c.log = dir / "full.log";
  std::vector<TrainProgress> seen;
  train(c, [&](const TrainProgress& p) { seen.push_back(p); });
  REQUIRE(seen.size() == 4);
  CHECK(seen.back().step == 4);

  c.checkpoint = dir / "again.ckpt";
  c.log.clear();
  train(c);
  CHECK(read_bytes(dir / "full.ckpt") == read_bytes(dir / "again.ckpt"));

  c.steps = 2;
  c.checkpoint = dir / "half.ckpt";
  train(c);
  c.resume = dir / "half.ckpt";
  c.checkpoint = dir / "resumed.ckpt";
  train(c);
  CHECK(read_bytes(dir / "full.ckpt") == read_bytes(dir / "resumed.ckpt"));

  std::ifstream log(dir / "full.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    std::istringstream fields(line);
    long long step = 0;
    double loss = 0.0;
    fields >> step >> loss;
    CHECK(step == ++lines);
    // The log keeps nine significant digits.
    CHECK_THAT(loss, WithinRel(seen[static_cast<std::size_t>(step - 1)].loss, 1e-8));
  }
  CHECK(lines == 4);
}

TEST_CASE("resuming across model families is refused", "[training]") {
  TempDir dir("train");
  TrainConfig c = small_config();
  c.steps = 1;
  c.checkpoint = dir / "d.ckpt";
  train(c);
  TrainConfig s = small_config(TaskKind::kSeparator);
  s.resume = c.checkpoint;
  CHECK(code_of([&] { train(s); }) == ErrorCode::kTaskMismatch);
}

TEST_CASE("divergence aborts with a non-finite loss error", "[training]") {
  TrainConfig c = small_config();
  c.lr = 1e300;
  c.steps = 5;
  CHECK(code_of([&] { train(c); }) == ErrorCode::kNonFiniteLoss);
}

TEST_CASE("an identity enhancer scores like the unprocessed mixture", "[training]") {
  const TrainConfig c = small_config();
  const Corpus test = resolve_corpus(c, Split::kTest);
  const PmAuxModel model = PmAuxModel::create(TaskKind::kDenoiser, c.model, 1);
  EvalConfig e;
  e.pairs_per_cell = 1;
  e.filter_length = 32;
  e.enhance.forced_mask = 1.0;
  const EvalResult r = evaluate(model, TaskKind::kDenoiser, test, e);
  REQUIRE(r.enhanced.rows.size() == 5);
  REQUIRE(r.baseline.rows.size() == 5);
  CHECK(r.enhanced.rows[0].keys[0] == "0 dB");
  CHECK(r.enhanced.rows[4].keys[0] == "15 dB");
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& a = r.enhanced.rows[i].mean;
    const auto& b = r.baseline.rows[i].mean;
    CHECK_THAT(a.lsd, WithinAbs(b.lsd, 1e-6));
    CHECK_THAT(a.sdr, WithinAbs(b.sdr, 1e-6));
    CHECK_THAT(a.ssnr, WithinAbs(b.ssnr, 1e-6));
    CHECK_THAT(a.stoi, WithinAbs(b.stoi, 1e-6));
    CHECK(r.enhanced.rows[i].count == 1);
  }
}

TEST_CASE("selective evaluation covers the full grid", "[training]") {
  const TrainConfig c = small_config();
  const Corpus test = resolve_corpus(c, Split::kTest);
  const PmAuxModel model = PmAuxModel::create(TaskKind::kSelectiveDenoiser, c.model, 1);
  EvalConfig e;
  e.pairs_per_cell = 1;
  e.filter_length = 16;
  e.plus_snr_grid = {0, 5};
  e.minus_snr_grid = {0, 5, 10};
  const EvalResult r = evaluate(model, TaskKind::kSelectiveDenoiser, test, e);
  CHECK(r.enhanced.rows.size() == 6);
  CHECK(r.enhanced.layout == metrics::ReportLayout::kSelective);
}

TEST_CASE("evaluation refuses the wrong model family", "[training]") {
  const TrainConfig c = small_config();
  const Corpus test = resolve_corpus(c, Split::kTest);
  const PmAuxModel model = PmAuxModel::create(TaskKind::kDenoiser, c.model, 1);
  EvalConfig e;
  e.pairs_per_cell = 1;
  CHECK(code_of([&] { evaluate(model, TaskKind::kSeparator, test, e); }) ==
        ErrorCode::kTaskMismatch);
}
