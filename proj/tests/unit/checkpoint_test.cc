// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <fstream>
#include <string>

#include "nhans/checkpoint.h"
#include "nhans/error.h"
#include "test_support.h"

using namespace nhans;
using namespace nhans::testing;

namespace {

Checkpoint sample_checkpoint(bool with_optimizer) {
  Checkpoint cp;
  cp.model = PmAuxModel::create(TaskKind::kSelectiveDenoiser, tiny_hyperparams(), 21);
  cp.step = 123;
  cp.rng_state = "1 2 3";
  if (with_optimizer) {
    auto params = cp.model.parameters();
    nn::AdamState adam = nn::make_adam(params, {.lr = 5e-4});
    adam.step = 7;
    for (std::size_t i = 0; i < adam.first_moment.size(); ++i) {
      adam.first_moment[i].setConstant(0.25 + static_cast<double>(i));
      adam.second_moment[i].setConstant(0.5);
    }
    cp.optimizer = adam;
  }
  return cp;
}

ErrorCode code_of(std::span<const unsigned char> bytes) {
  try {
    parse_checkpoint(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("checkpoint was accepted");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("checkpoints round trip byte for byte", "[checkpoint]") {
  for (bool with_optimizer : {false, true}) {
    TempDir dir("ckpt");
    const Checkpoint cp = sample_checkpoint(with_optimizer);
    save_checkpoint(cp, dir / "a.ckpt");
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    save_checkpoint(back, dir / "b.ckpt");
    CHECK(read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt"));
    CHECK(back.step == 123);
    CHECK(back.rng_state == "1 2 3");
    CHECK(back.model.task == TaskKind::kSelectiveDenoiser);
    CHECK(back.model.hyperparams == cp.model.hyperparams);
    CHECK(back.optimizer.has_value() == with_optimizer);
    if (with_optimizer) {
      CHECK(back.optimizer->step == 7);
      CHECK(back.optimizer->config.lr == 5e-4);
      CHECK(back.optimizer->first_moment[1](0, 0) == 1.25);
    }
    const auto pa = cp.model.parameters();
    const auto pb = back.model.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->name == pb[i]->name);
      CHECK(pa[i]->value == pb[i]->value);
    }
  }
}

TEST_CASE("a reloaded model produces bit-identical output", "[checkpoint]") {
  TempDir dir("ckpt");
  const Checkpoint cp = sample_checkpoint(false);
  save_checkpoint(cp, dir / "m.ckpt");
  const PmAuxModel loaded = load_model(dir / "m.ckpt");
  const AudioBuffer noisy = add(sine(440, 0.5), white_noise(0.5, 3));
  const AudioBuffer pos = sine(900, 0.4);
  const AudioBuffer neg = white_noise(0.4, 4);
  CHECK(selective_denoise(cp.model, noisy, pos, neg).samples ==
        selective_denoise(loaded, noisy, pos, neg).samples);
}

TEST_CASE("damaged checkpoints are rejected with a specific error", "[checkpoint]") {
  const std::vector<unsigned char> good = serialize_checkpoint(sample_checkpoint(true));
  CHECK_NOTHROW(parse_checkpoint(good));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of(bad_magic) == ErrorCode::kVersionMismatch);

  std::string text(good.begin(), good.end());
  const auto version_at = text.find("NHANS-CKPT 1");
  if (version_at != std::string::npos) {
    auto future = good;
    future[version_at + 11] = '9';
    CHECK(code_of(future) == ErrorCode::kVersionMismatch);
  }

  const std::vector<unsigned char> truncated(good.begin(), good.end() - 5);
  CHECK(code_of(truncated) == ErrorCode::kTruncatedFile);

  const auto end_marker = text.find("\nend\n");
  REQUIRE(end_marker != std::string::npos);
  const std::vector<unsigned char> header_only(good.begin(),
                                               good.begin() + static_cast<long>(end_marker));
  CHECK(code_of(header_only) == ErrorCode::kTruncatedFile);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(code_of(trailing) == ErrorCode::kCorruptPayload);

  auto nonfinite = good;
  // Overwrite the first float of the payload with a quiet NaN.
  const std::size_t payload = end_marker + 5;
  const unsigned char nan_bytes[] = {0x00, 0x00, 0xc0, 0x7f};
  std::copy(std::begin(nan_bytes), std::end(nan_bytes), nonfinite.begin() + static_cast<long>(payload));
  CHECK(code_of(nonfinite) == ErrorCode::kCorruptPayload);

  std::string renamed = text;
  const auto hidden_at = renamed.find("hidden ");
  REQUIRE(hidden_at != std::string::npos);
  renamed.replace(hidden_at, 7, "hiddnn ");
  CHECK(code_of(std::vector<unsigned char>(renamed.begin(), renamed.end())) ==
        ErrorCode::kMalformedHeader);
}

TEST_CASE("loading a missing checkpoint reports the path", "[checkpoint]") {
  TempDir dir("ckpt");
  try {
    load_checkpoint(dir / "nope.ckpt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFileNotFound);
    CHECK(std::string(e.what()).find("nope.ckpt") != std::string::npos);
  }
}

TEST_CASE("saving leaves no temporary files behind", "[checkpoint]") {
  TempDir dir("ckpt");
  save_checkpoint(sample_checkpoint(false), dir / "m.ckpt");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
}
