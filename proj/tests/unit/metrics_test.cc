// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "nhans/dsp.h"
#include "nhans/error.h"
#include "nhans/metrics.h"
#include "nhans/synth_corpus.h"
#include "test_support.h"

using namespace nhans;
using namespace nhans::testing;
using namespace nhans::metrics;
using Catch::Matchers::WithinAbs;

namespace {

AudioBuffer speechlike(double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return synth::voice(synth::speaker_profiles().front(), seconds, rng);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Zero-delay BSS decomposition from explicit normal equations.
BssEvalResult single_tap_oracle(const AudioBuffer& s1, const AudioBuffer& s2,
                                const AudioBuffer& est) {
  const auto& a = s1.samples;
  const auto& b = s2.samples;
  const auto& e = est.samples;
  const double aa = dot(a, a), bb = dot(b, b), ab = dot(a, b);
  const double ea = dot(e, a), eb = dot(e, b);
  const double ct = ea / aa;
  const double det = aa * bb - ab * ab;
  const double c1 = (ea * bb - eb * ab) / det;
  const double c2 = (eb * aa - ea * ab) / det;
  double st = 0.0, ei = 0.0, ea2 = 0.0, dist = 0.0, filt = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) {
    const double target = ct * a[t];
    const double all = c1 * a[t] + c2 * b[t];
    const double interf = all - target;
    const double artif = e[t] - all;
    st += target * target;
    ei += interf * interf;
    ea2 += artif * artif;
    dist += (interf + artif) * (interf + artif);
    filt += all * all;
  }
  return {10 * std::log10(st / dist), 10 * std::log10(st / ei), 10 * std::log10(filt / ea2)};
}

}  // namespace

TEST_CASE("identical signals score perfectly", "[metrics]") {
  const AudioBuffer x = speechlike(2.0, 1);
  CHECK(lsd(x, x) == 0.0);
  CHECK(ssnr(x, x) == 35.0);
  CHECK_THAT(mcd(x, x), WithinAbs(0.0, 1e-12));
  CHECK_THAT(stoi(x, x), WithinAbs(1.0, 1e-9));
  const AudioBuffer refs[] = {x, white_noise(2.0, 2)};
  const BssEvalResult r = bss_eval(refs, x, 0);
  CHECK(r.sdr > 60.0);
  CHECK(r.sdr <= kDbCap);
}

TEST_CASE("doubling the amplitude costs 20 log10 2 of spectral distance", "[metrics]") {
  const AudioBuffer x = white_noise(1.0, 3, kModelSampleRate, 0.3);
  CHECK_THAT(lsd(x, scaled(x, 2.0)), WithinAbs(20.0 * std::log10(2.0), 1e-4));
  CHECK_THAT(lsd(x, scaled(x, 2.0)), WithinAbs(6.0206, 1e-4));
}

TEST_CASE("spectral distance is symmetric", "[metrics]") {
  const AudioBuffer a = speechlike(1.0, 4);
  const AudioBuffer b = add(a, white_noise(1.0, 5));
  CHECK_THAT(lsd(a, b), WithinAbs(lsd(b, a), 1e-12));
  CHECK(lsd(a, b) > 0.0);
}

TEST_CASE("segmental SNR follows the clipping range", "[metrics]") {
  const AudioBuffer x = white_noise(2.0, 6, kModelSampleRate, 0.3);
  AudioBuffer silent = x;
  for (double& s : silent.samples) s = 0.0;
  // A silent estimate leaves an error equal to the reference: 0 dB per frame.
  CHECK_THAT(ssnr(x, silent), WithinAbs(0.0, 1e-9));
  // Stationary white noise at a global 10 dB gives about 10 dB in every frame.
  const AudioBuffer n = scaled(white_noise(2.0, 7, kModelSampleRate, 0.3), std::pow(10.0, -0.5));
  CHECK_THAT(ssnr(x, add(x, n)), WithinAbs(10.0, 0.5));
  // Anti-phase estimate: error is twice the reference, clipped at -10 dB floor or above.
  CHECK(ssnr(x, scaled(x, -1.0)) >= -10.0);
  CHECK_THROWS_AS(ssnr(silent, x), Error);
}

TEST_CASE("cepstral distortion ignores overall gain", "[metrics]") {
  const AudioBuffer x = speechlike(1.5, 8);
  CHECK_THAT(mcd(x, scaled(x, 0.25)), WithinAbs(0.0, 1e-6));
  CHECK_THAT(mcd(x, scaled(x, 2.0)), WithinAbs(0.0, 1e-6));
  CHECK(mcd(x, add(x, white_noise(1.5, 9, kModelSampleRate, 0.2))) > 0.1);
}

TEST_CASE("cepstral distortion of a spectral tilt matches the formula", "[metrics]") {
  // Stationary noise keeps every frame above the silence gate.
  const AudioBuffer x = white_noise(1.0, 23, kModelSampleRate, 0.3);
  AudioBuffer tilted = x;
  for (std::size_t i = 1; i < x.samples.size(); ++i) {
    tilted.samples[i] = x.samples[i] - 0.9 * x.samples[i - 1];
  }
  const StftParams p;
  const RealMatrix fb = mel_filterbank(40, p);
  auto cepstra = [&](const AudioBuffer& a) {
    const RealMatrix mel = stft(a, p).frames.cwiseAbs2() * fb.transpose();
    const double floor = 1e-10 * mel.maxCoeff();
    std::vector<std::vector<double>> out;
    for (Eigen::Index t = 0; t < mel.rows(); ++t) {
      std::vector<double> c(13, 0.0);
      for (int k = 0; k < 13; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / 40.0);
        for (int m = 0; m < 40; ++m) {
          c[k] += std::log(mel(t, m) + floor) * std::cos(M_PI * k * (2 * m + 1) / 80.0);
        }
        c[k] *= scale;
      }
      out.push_back(c);
    }
    return out;
  };
  const auto cr = cepstra(x);
  const auto ce = cepstra(tilted);
  double total = 0.0;
  for (std::size_t t = 0; t < cr.size(); ++t) {
    double acc = 0.0;
    for (int k = 1; k <= 12; ++k) acc += (cr[t][k] - ce[t][k]) * (cr[t][k] - ce[t][k]);
    total += 10.0 / std::log(10.0) * std::sqrt(2.0 * acc);
  }
  const double expected = total / static_cast<double>(cr.size());
  CHECK(expected > 1.0);
  CHECK_THAT(mcd(x, tilted), WithinAbs(expected, 1e-6));
}

TEST_CASE("intelligibility behaves at the extremes", "[metrics]") {
  const AudioBuffer x = speechlike(3.0, 10);
  CHECK_THAT(stoi(x, scaled(x, 0.3)), WithinAbs(1.0, 1e-6));
  CHECK(stoi(x, white_noise(3.0, 11, kModelSampleRate, 0.3)) < 0.3);
  const double mild = stoi(x, add(x, white_noise(3.0, 12, kModelSampleRate, 0.01)));
  const double heavy = stoi(x, add(x, white_noise(3.0, 12, kModelSampleRate, 0.3)));
  CHECK(mild > heavy);
  try {
    stoi(speechlike(0.2, 1), speechlike(0.2, 1));
    FAIL("expected too short");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooShort);
  }
}

TEST_CASE("single-tap BSS decomposition matches the closed form", "[metrics]") {
  const AudioBuffer s1 = speechlike(1.0, 13);
  const AudioBuffer s2 = white_noise(1.0, 14, kModelSampleRate, 0.2);
  const AudioBuffer art = white_noise(1.0, 15, kModelSampleRate, 0.05);
  const AudioBuffer est = add(add(scaled(s1, 0.9), scaled(s2, 0.3)), art);
  const AudioBuffer refs[] = {s1, s2};
  const BssEvalResult got = bss_eval(refs, est, 0, 1);
  const BssEvalResult want = single_tap_oracle(s1, s2, est);
  CHECK_THAT(got.sdr, WithinAbs(want.sdr, 0.01));
  CHECK_THAT(got.sir, WithinAbs(want.sir, 0.01));
  CHECK_THAT(got.sar, WithinAbs(want.sar, 0.01));
}

TEST_CASE("scoring the interferer as the target gives a very low SIR", "[metrics]") {
  const AudioBuffer target = white_noise(3.0, 18);
  const AudioBuffer interference = speechlike(3.0, 16);
  const AudioBuffer refs[] = {target, interference};
  const BssEvalResult r = bss_eval(refs, interference, 0, 1);
  CHECK(r.sir <= -40.0);
  const BssEvalResult want = single_tap_oracle(target, interference, interference);
  CHECK_THAT(r.sir, WithinAbs(want.sir, 0.01));
}

TEST_CASE("single-tap BSS agrees on short white sources", "[metrics]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    AudioBuffer a = white_noise(0.0625, 100 + seed);
    AudioBuffer b = white_noise(0.0625, 200 + seed);
    a.samples.resize(1000);
    b.samples.resize(1000);
    const AudioBuffer est = add(add(scaled(a, 0.8), scaled(b, 0.2)),
                                scaled(white_noise(0.0625, 300 + seed), 0.1));
    AudioBuffer e = est;
    e.samples.resize(1000);
    const AudioBuffer refs[] = {a, b};
    const BssEvalResult got = bss_eval(refs, e, 0, 1);
    const BssEvalResult want = single_tap_oracle(a, b, e);
    CHECK_THAT(got.sdr, WithinAbs(want.sdr, 0.01));
    CHECK_THAT(got.sir, WithinAbs(want.sir, 0.01));
    CHECK_THAT(got.sar, WithinAbs(want.sar, 0.01));
  }
}

TEST_CASE("BSS ratios are capped", "[metrics]") {
  const AudioBuffer s1 = white_noise(0.5, 19);
  const AudioBuffer s2 = white_noise(0.5, 20);
  const AudioBuffer refs[] = {s1, s2};
  const BssEvalResult r = bss_eval(refs, s1, 0, 1);
  CHECK(r.sdr <= kDbCap);
  CHECK(r.sir <= kDbCap);
  CHECK(r.sar <= kDbCap);
  CHECK(r.sdr >= -kDbCap);
}

TEST_CASE("BSS input validation", "[metrics]") {
  const AudioBuffer s1 = white_noise(0.5, 19);
  AudioBuffer zero = s1;
  for (double& v : zero.samples) v = 0.0;
  const AudioBuffer refs[] = {s1, zero};
  CHECK_THROWS_AS(bss_eval(refs, s1, 0), Error);
  const AudioBuffer mismatched[] = {s1, white_noise(0.4, 2)};
  CHECK_THROWS_AS(bss_eval(mismatched, s1, 0), Error);
  const AudioBuffer one[] = {s1};
  CHECK_THROWS_AS(bss_eval(one, s1, 1), Error);
  CHECK_THROWS_AS(bss_eval(one, s1, 0, 0), Error);
}

TEST_CASE("undefined metrics become NaN in pair scores", "[metrics]") {
  const AudioBuffer target = speechlike(0.2, 21);
  const AudioBuffer interference = white_noise(0.2, 22);
  const MetricValues v = score_pair(target, interference, add(target, interference), 64);
  CHECK(std::isnan(v.stoi));
  CHECK(std::isfinite(v.lsd));
  CHECK(std::isfinite(v.sdr));
}

TEST_CASE("reports average per group and skip NaN", "[metrics]") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<ScoredPair> pairs(3);
  pairs[0].keys = {"5 dB"};
  pairs[0].metrics.lsd = 1.0;
  pairs[0].metrics.stoi = 0.5;
  pairs[1].keys = {"0 dB"};
  pairs[1].metrics.lsd = 4.0;
  pairs[2].keys = {"5 dB"};
  pairs[2].metrics.lsd = 3.0;
  pairs[2].metrics.stoi = nan;
  const MetricReport r = aggregate_report(pairs, ReportLayout::kDenoising);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].keys[0] == "5 dB");
  CHECK(r.rows[0].count == 2);
  CHECK(r.rows[0].mean.lsd == 2.0);
  CHECK(r.rows[0].mean.stoi == 0.5);
  CHECK(r.rows[1].mean.lsd == 4.0);

  const std::string table = render_table(r, "denoiser");
  CHECK(table.find("denoiser") == 0);
  CHECK(table.find("PESQ") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(table.find("SSNR") != std::string::npos);
  const std::string csv = render_csv(r);
  CHECK(csv.rfind("group,metric,value\n", 0) == 0);
  CHECK(csv.find("pesq,n/a") != std::string::npos);

  const MetricReport sep = aggregate_report(pairs, ReportLayout::kSeparation);
  const std::string sep_table = render_table(sep);
  CHECK(sep_table.find("SIR") != std::string::npos);
  CHECK(sep_table.find("LSD") == std::string::npos);
}
