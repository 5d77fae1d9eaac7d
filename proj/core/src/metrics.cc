// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/metrics.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/FFT>

#include "nhans/dsp.h"
#include "nhans/error.h"

namespace nhans::metrics {

namespace {

constexpr double kPowerFloor = 1e-10;
constexpr double kSilenceGateDb = 40.0;
constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

std::pair<std::vector<double>, std::vector<double>> trimmed(const AudioBuffer& ref,
                                                            const AudioBuffer& est) {
  if (ref.empty() || est.empty()) throw Error(ErrorCode::kEmptyInput, "metric on empty signal");
  if (ref.sample_rate != est.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "metric inputs have different sample rates");
  }
  if (ref.channel_count != 1 || est.channel_count != 1) {
    throw Error(ErrorCode::kInvalidArgument, "metrics expect mono signals");
  }
  const std::size_t n = std::min(ref.samples.size(), est.samples.size());
  return {std::vector<double>(ref.samples.begin(), ref.samples.begin() + static_cast<long>(n)),
          std::vector<double>(est.samples.begin(), est.samples.begin() + static_cast<long>(n))};
}

StftParams analysis_params(int rate) {
  StftParams p;
  p.sample_rate = rate;
  return p;
}

RealMatrix power(std::span<const double> x, const StftParams& p) {
  return stft(x, p).frames.cwiseAbs2();
}

double clamp_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kDbCap : 0.0;
  if (num <= 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

// Frames of the reference whose energy is within 40 dB of the loudest one.
std::vector<bool> active_frames(const Eigen::VectorXd& energies) {
  const double peak = energies.maxCoeff();
  std::vector<bool> keep(static_cast<std::size_t>(energies.size()), false);
  if (peak <= 0.0) return keep;
  const double gate = peak * std::pow(10.0, -kSilenceGateDb / 10.0);
  for (Eigen::Index i = 0; i < energies.size(); ++i) {
    keep[static_cast<std::size_t>(i)] = energies(i) > 0.0 && energies(i) >= gate;
  }
  return keep;
}

}  // namespace

double lsd(const AudioBuffer& ref, const AudioBuffer& est) {
  auto [r, e] = trimmed(ref, est);
  const StftParams p = analysis_params(ref.sample_rate);
  const RealMatrix pr = power(r, p);
  const RealMatrix pe = power(e, p);
  const RealMatrix diff = 10.0 * ((pr.array() + kPowerFloor).log10() -
                                  (pe.array() + kPowerFloor).log10()).matrix();
  const Eigen::VectorXd per_frame =
      (diff.array().square().rowwise().sum() / static_cast<double>(diff.cols())).sqrt();
  return per_frame.mean();
}

double ssnr(const AudioBuffer& ref, const AudioBuffer& est) {
  auto [r, e] = trimmed(ref, est);
  constexpr std::size_t kFrame = 512;
  constexpr std::size_t kHop = 256;
  const std::size_t n = r.size();
  const std::size_t frame = std::min(kFrame, n);
  std::vector<double> signal_energy;
  std::vector<double> error_energy;
  for (std::size_t start = 0; start + frame <= n; start += kHop) {
    double s = 0.0, d = 0.0;
    for (std::size_t i = start; i < start + frame; ++i) {
      s += r[i] * r[i];
      d += (r[i] - e[i]) * (r[i] - e[i]);
    }
    signal_energy.push_back(s);
    error_energy.push_back(d);
    if (frame < kFrame) break;
  }
  const auto keep = active_frames(
      Eigen::Map<const Eigen::VectorXd>(signal_energy.data(),
                                        static_cast<Eigen::Index>(signal_energy.size())));
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    double v = error_energy[i] > 0.0 ? 10.0 * std::log10(signal_energy[i] / error_energy[i])
                                     : 35.0;
    total += std::clamp(v, -10.0, 35.0);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kDegenerate, "ssnr: every frame is silent");
  return total / static_cast<double>(used);
}

namespace {

// The floor scales with the signal's loudest band, so a uniform gain only
// shifts every log-energy by one constant and leaves c1..c12 untouched.
RealMatrix mel_log_energies(const RealMatrix& power_frames, const RealMatrix& fb) {
  const RealMatrix mel = power_frames * fb.transpose();
  const double peak = mel.size() ? mel.maxCoeff() : 0.0;
  const double floor = peak > 0.0 ? kPowerFloor * peak : kPowerFloor;
  return (mel.array() + floor).log().matrix();
}

}  // namespace

double mcd(const AudioBuffer& ref, const AudioBuffer& est) {
  auto [r, e] = trimmed(ref, est);
  constexpr int kMels = 40;
  constexpr std::size_t kCoeffs = 13;
  const StftParams p = analysis_params(ref.sample_rate);
  const RealMatrix pr = power(r, p);
  const RealMatrix pe = power(e, p);
  const RealMatrix fb = mel_filterbank(kMels, p);
  const RealMatrix mr = mel_log_energies(pr, fb);
  const RealMatrix me = mel_log_energies(pe, fb);
  const auto keep = active_frames(pr.rowwise().sum());
  const double k = 10.0 / std::log(10.0);
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> row(kMels);
  for (Eigen::Index t = 0; t < pr.rows(); ++t) {
    if (!keep[static_cast<std::size_t>(t)]) continue;
    for (int m = 0; m < kMels; ++m) row[static_cast<std::size_t>(m)] = mr(t, m);
    const auto cr = dct_ii(row, kCoeffs);
    for (int m = 0; m < kMels; ++m) row[static_cast<std::size_t>(m)] = me(t, m);
    const auto ce = dct_ii(row, kCoeffs);
    double acc = 0.0;
    for (std::size_t c = 1; c < kCoeffs; ++c) acc += (cr[c] - ce[c]) * (cr[c] - ce[c]);
    total += k * std::sqrt(2.0 * acc);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::kDegenerate, "mcd: reference is silent");
  return total / static_cast<double>(used);
}

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;

// Symmetric Hann of length L+2 without its zero end points.
std::vector<double> stoi_window() {
  std::vector<double> w(kStoiFrame);
  for (int i = 0; i < kStoiFrame; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (i + 1) / (kStoiFrame + 1));
  }
  return w;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = stoi_window();
  const std::size_t hop = kStoiFrame / 2;
  const std::size_t frame = kStoiFrame;
  std::vector<std::size_t> starts;
  std::vector<double> energy_db;
  for (std::size_t i = 0; i + frame <= x.size(); i += hop) {
    double acc = 0.0;
    for (std::size_t j = 0; j < frame; ++j) acc += (w[j] * x[i + j]) * (w[j] * x[i + j]);
    starts.push_back(i);
    energy_db.push_back(20.0 * std::log10(std::sqrt(acc) + kMachineEps));
  }
  if (starts.empty()) throw Error(ErrorCode::kTooShort, "stoi: signal shorter than one frame");
  const double peak = *std::max_element(energy_db.begin(), energy_db.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (peak - kSilenceGateDb - energy_db[f] < 0.0) kept.push_back(starts[f]);
  }
  const std::size_t out_len = kept.empty() ? 0 : (kept.size() - 1) * hop + frame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    for (std::size_t j = 0; j < frame; ++j) {
      xs[k * hop + j] += w[j] * x[kept[k] + j];
      ys[k * hop + j] += w[j] * y[kept[k] + j];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// Third-octave band envelopes, bands x frames.
RealMatrix band_envelopes(const std::vector<double>& x, const RealMatrix& obm) {
  const auto w = stoi_window();
  const std::size_t hop = kStoiFrame / 2;
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kStoiFrame < x.size(); i += hop) starts.push_back(i);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(kStoiFft, 0.0);
  std::vector<std::complex<double>> spec;
  RealMatrix power(static_cast<Eigen::Index>(starts.size()), kStoiFft / 2 + 1);
  for (std::size_t f = 0; f < starts.size(); ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int j = 0; j < kStoiFrame; ++j) {
      buf[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] *
                                         x[starts[f] + static_cast<std::size_t>(j)];
    }
    fft.fwd(spec, buf);
    for (int k = 0; k <= kStoiFft / 2; ++k) {
      power(static_cast<Eigen::Index>(f), k) = std::norm(spec[static_cast<std::size_t>(k)]);
    }
  }
  return (obm * power.transpose()).cwiseSqrt();
}

}  // namespace

double stoi(const AudioBuffer& ref, const AudioBuffer& est) {
  auto [r, e] = trimmed(ref, est);
  std::vector<double> x =
      resample(AudioBuffer(std::move(r), ref.sample_rate, 1), kStoiRate).samples;
  std::vector<double> y =
      resample(AudioBuffer(std::move(e), est.sample_rate, 1), kStoiRate).samples;
  remove_silent_frames(x, y);

  StftParams p;
  p.fft_size = kStoiFft;
  p.hop = kStoiFrame / 2;
  p.sample_rate = kStoiRate;
  const RealMatrix obm = third_octave_bands(p, kStoiBands, kStoiMinFreq).matrix;
  const RealMatrix xt = band_envelopes(x, obm);
  const RealMatrix yt = band_envelopes(y, obm);
  if (xt.cols() < kStoiSegment) {
    throw Error(ErrorCode::kTooShort,
                "stoi: fewer than 30 non-silent frames (need about 384 ms of active signal)");
  }
  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index m = kStoiSegment; m <= xt.cols(); ++m) {
    for (Eigen::Index b = 0; b < xt.rows(); ++b) {
      Eigen::RowVectorXd xs = xt.block(b, m - kStoiSegment, 1, kStoiSegment);
      Eigen::RowVectorXd ys = yt.block(b, m - kStoiSegment, 1, kStoiSegment);
      const double scale = xs.norm() / (ys.norm() + kMachineEps);
      Eigen::RowVectorXd yp = (ys * scale).cwiseMin(xs * (1.0 + clip));
      yp.array() -= yp.mean();
      xs.array() -= xs.mean();
      yp /= yp.norm() + kMachineEps;
      xs /= xs.norm() + kMachineEps;
      total += yp.dot(xs);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

using ComplexVec = std::vector<std::complex<double>>;

ComplexVec spectrum(Eigen::FFT<double>& fft, const std::vector<double>& x, std::size_t nfft) {
  std::vector<double> buf(nfft, 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  ComplexVec out;
  fft.fwd(out, buf);
  return out;
}

// out[k] = sum_m a[m] b[m + k] for k in [0, nfft).
std::vector<double> correlate(Eigen::FFT<double>& fft, const ComplexVec& a,
                              const ComplexVec& b) {
  ComplexVec prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) prod[i] = std::conj(a[i]) * b[i];
  std::vector<double> out;
  fft.inv(out, prod);
  return out;
}

// Least-squares projection of est onto the delays 0..F-1 of the given sources.
std::vector<double> project(Eigen::FFT<double>& fft, const std::vector<ComplexVec>& spectra,
                            const std::vector<const std::vector<double>*>& sources,
                            const ComplexVec& est_spec, std::size_t nfft, std::size_t n,
                            int filter_length) {
  const auto m = static_cast<Eigen::Index>(spectra.size());
  const Eigen::Index f = filter_length;
  Eigen::MatrixXd gram(m * f, m * f);
  Eigen::VectorXd rhs(m * f);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto c = correlate(fft, spectra[static_cast<std::size_t>(i)],
                               spectra[static_cast<std::size_t>(j)]);
      for (Eigen::Index a = 0; a < f; ++a) {
        for (Eigen::Index b = 0; b < f; ++b) {
          const Eigen::Index lag = a - b;
          const std::size_t idx =
              lag >= 0 ? static_cast<std::size_t>(lag) : nfft - static_cast<std::size_t>(-lag);
          gram(i * f + a, j * f + b) = c[idx];
        }
      }
    }
    const auto d = correlate(fft, spectra[static_cast<std::size_t>(i)], est_spec);
    for (Eigen::Index a = 0; a < f; ++a) rhs(i * f + a) = d[static_cast<std::size_t>(a)];
  }
  const double lambda = 1e-9 * gram.trace();
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd coef = gram.ldlt().solve(rhs);

  const std::size_t out_len = n + static_cast<std::size_t>(filter_length) - 1;
  std::vector<double> proj(out_len, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& s = *sources[static_cast<std::size_t>(i)];
    for (Eigen::Index a = 0; a < f; ++a) {
      const double c = coef(i * f + a);
      if (c == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) proj[t + static_cast<std::size_t>(a)] += c * s[t];
    }
  }
  return proj;
}

double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

}  // namespace

BssEvalResult bss_eval(std::span<const AudioBuffer> references, const AudioBuffer& est,
                       std::size_t est_index, int filter_length) {
  if (references.empty() || references.size() > 2) {
    throw Error(ErrorCode::kInvalidArgument, "bss_eval supports one or two reference sources");
  }
  if (est_index >= references.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bss_eval: est_index out of range");
  }
  if (filter_length < 1) throw Error(ErrorCode::kInvalidArgument, "filter_length must be >= 1");
  const std::size_t n = est.samples.size();
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "bss_eval: empty estimate");
  for (const auto& r : references) {
    if (r.samples.size() != n) {
      throw Error(ErrorCode::kShapeMismatch, "bss_eval: references and estimate differ in length");
    }
    if (energy(r.samples) == 0.0) {
      throw Error(ErrorCode::kZeroEnergy, "bss_eval: zero-energy reference source");
    }
  }
  std::size_t nfft = 1;
  while (nfft < n + static_cast<std::size_t>(filter_length)) nfft <<= 1;
  Eigen::FFT<double> fft;

  std::vector<ComplexVec> spectra;
  std::vector<const std::vector<double>*> sources;
  for (const auto& r : references) {
    spectra.push_back(spectrum(fft, r.samples, nfft));
    sources.push_back(&r.samples);
  }
  const ComplexVec est_spec = spectrum(fft, est.samples, nfft);

  const std::vector<double> s_target =
      project(fft, {spectra[est_index]}, {sources[est_index]}, est_spec, nfft, n, filter_length);
  const std::vector<double> p_all =
      project(fft, spectra, sources, est_spec, nfft, n, filter_length);

  const std::size_t len = s_target.size();
  std::vector<double> e_interf(len), e_artif(len), distortion(len), filtered(len);
  for (std::size_t t = 0; t < len; ++t) {
    const double e = t < n ? est.samples[t] : 0.0;
    e_interf[t] = p_all[t] - s_target[t];
    e_artif[t] = e - p_all[t];
    distortion[t] = e_interf[t] + e_artif[t];
    filtered[t] = s_target[t] + e_interf[t];
  }
  BssEvalResult r;
  r.sdr = clamp_db(energy(s_target), energy(distortion));
  r.sir = clamp_db(energy(s_target), energy(e_interf));
  r.sar = clamp_db(energy(filtered), energy(e_artif));
  return r;
}

MetricValues score_pair(const AudioBuffer& target, const AudioBuffer& interference,
                        const AudioBuffer& est, int filter_length) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const Error&) {
      return kNaN;
    }
  };
  MetricValues v;
  v.lsd = guarded([&] { return lsd(target, est); });
  v.ssnr = guarded([&] { return ssnr(target, est); });
  v.mcd = guarded([&] { return mcd(target, est); });
  v.stoi = guarded([&] { return stoi(target, est); });
  try {
    const AudioBuffer refs[] = {target, interference};
    const BssEvalResult b = bss_eval(refs, est, 0, filter_length);
    v.sdr = b.sdr;
    v.sir = b.sir;
    v.sar = b.sar;
  } catch (const Error&) {
    v.sdr = v.sir = v.sar = kNaN;
  }
  return v;
}

namespace {

struct MetricField {
  const char* name;
  double MetricValues::*member;
};

constexpr MetricField kFields[] = {
    {"lsd", &MetricValues::lsd},   {"sdr", &MetricValues::sdr},   {"stoi", &MetricValues::stoi},
    {"mcd", &MetricValues::mcd},   {"ssnr", &MetricValues::ssnr}, {"sir", &MetricValues::sir},
    {"sar", &MetricValues::sar},
};

std::string join_keys(const std::vector<std::string>& keys) {
  std::string out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) out += ' ';
    out += keys[i];
  }
  return out;
}

std::string format_value(double v, int precision = 2) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

MetricReport aggregate_report(std::span<const ScoredPair> pairs, ReportLayout layout) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "aggregate_report: no pairs");
  MetricReport report;
  report.layout = layout;
  struct Acc {
    double sum[std::size(kFields)] = {};
    std::size_t n[std::size(kFields)] = {};
  };
  std::vector<Acc> accs;
  for (const auto& p : pairs) {
    auto it = std::find_if(report.rows.begin(), report.rows.end(),
                           [&](const ReportRow& r) { return r.keys == p.keys; });
    if (it == report.rows.end()) {
      report.rows.push_back(ReportRow{p.keys, 0, {}});
      accs.emplace_back();
      it = report.rows.end() - 1;
    }
    const auto row = static_cast<std::size_t>(it - report.rows.begin());
    ++it->count;
    for (std::size_t f = 0; f < std::size(kFields); ++f) {
      const double v = p.metrics.*kFields[f].member;
      if (std::isfinite(v)) {
        accs[row].sum[f] += v;
        ++accs[row].n[f];
      }
    }
  }
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    for (std::size_t f = 0; f < std::size(kFields); ++f) {
      report.rows[r].mean.*kFields[f].member =
          accs[r].n[f] ? accs[r].sum[f] / static_cast<double>(accs[r].n[f])
                       : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return report;
}

std::string render_table(const MetricReport& report, std::string_view title) {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> cells;
  const bool separation = report.layout == ReportLayout::kSeparation;
  switch (report.layout) {
    case ReportLayout::kDenoising: headers = {"SNR"}; break;
    case ReportLayout::kSelective: headers = {"+SNR", "-SNR"}; break;
    case ReportLayout::kSeparation: headers = {"Pair"}; break;
  }
  if (separation) {
    headers.insert(headers.end(), {"SDR", "SAR", "SIR", "N"});
  } else {
    headers.insert(headers.end(), {"LSD", "SDR", "PESQ", "STOI", "MCD", "SSNR", "N"});
  }
  const std::size_t key_cols = report.layout == ReportLayout::kSelective ? 2 : 1;
  for (const auto& row : report.rows) {
    std::vector<std::string> line;
    for (std::size_t k = 0; k < key_cols; ++k) line.push_back(k < row.keys.size() ? row.keys[k] : "");
    const MetricValues& m = row.mean;
    if (separation) {
      line.insert(line.end(), {format_value(m.sdr), format_value(m.sar), format_value(m.sir)});
    } else {
      line.insert(line.end(), {format_value(m.lsd), format_value(m.sdr), "n/a",
                               format_value(m.stoi), format_value(m.mcd), format_value(m.ssnr)});
    }
    line.push_back(std::to_string(row.count));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out << "  ";
      const std::string pad(width[c] - line[c].size(), ' ');
      // Group columns are left-aligned, numbers right-aligned.
      out << (c < key_cols ? line[c] + pad : pad + line[c]);
    }
    out << '\n';
  };
  emit(headers);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& line : cells) emit(line);
  return out.str();
}

std::string render_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "group,metric,value\n";
  for (const auto& row : report.rows) {
    const std::string group = join_keys(row.keys);
    for (const auto& f : kFields) {
      out << group << ',' << f.name << ',' << format_value(row.mean.*f.member, 6) << '\n';
    }
    out << group << ",pesq,n/a\n";
  }
  return out.str();
}

}  // namespace nhans::metrics
