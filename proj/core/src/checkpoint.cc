// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/checkpoint.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "nhans/error.h"

namespace nhans {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_f32(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

void put_matrix(std::vector<unsigned char>& out, const nn::Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, m.data()[i]);
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformedHeader, "checkpoint header: " + what);
}

struct Header {
  std::map<std::string, std::string> fields;
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
  };
  std::vector<Entry> tensors;

  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) malformed("missing field '" + key + "'");
    return it->second;
  }
  template <typename T>
  T number(const std::string& key) const {
    std::istringstream in(get(key));
    T v{};
    in >> v;
    if (in.fail()) malformed("bad value for '" + key + "'");
    return v;
  }
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& cp) {
  const PmAuxModel& m = cp.model;
  const ModelHyperparams& hp = m.hyperparams;
  const auto params = m.parameters();
  std::ostringstream h;
  h << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  h << "task " << to_string(m.task) << '\n';
  h << "hidden " << hp.hidden << '\n';
  h << "blocks " << hp.blocks << '\n';
  h << "context " << hp.context << '\n';
  h << "embedding " << hp.embedding << '\n';
  h << "fft_size " << hp.stft.fft_size << '\n';
  h << "hop " << hp.stft.hop << '\n';
  h << "sample_rate " << hp.stft.sample_rate << '\n';
  h << "feature_offset " << exact(hp.feature_offset) << '\n';
  h << "feature_scale " << exact(hp.feature_scale) << '\n';
  h << "step " << cp.step << '\n';
  h << "rng " << cp.rng_state << '\n';
  if (cp.optimizer) {
    const nn::AdamConfig& c = cp.optimizer->config;
    h << "optimizer adam\n";
    h << "adam_step " << cp.optimizer->step << '\n';
    h << "adam_config " << exact(c.lr) << ' ' << exact(c.beta1) << ' ' << exact(c.beta2)
      << ' ' << exact(c.epsilon) << '\n';
  } else {
    h << "optimizer none\n";
  }
  h << "tensors " << params.size() << '\n';
  for (const nn::Tensor* t : params) {
    h << "tensor " << t->name << ' ' << t->value.rows() << ' ' << t->value.cols() << '\n';
  }
  h << "end\n";

  const std::string text = h.str();
  std::vector<unsigned char> out(text.begin(), text.end());
  for (const nn::Tensor* t : params) put_matrix(out, t->value);
  if (cp.optimizer) {
    if (cp.optimizer->first_moment.size() != params.size() ||
        cp.optimizer->second_moment.size() != params.size()) {
      throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match the model");
    }
    for (const auto& mm : cp.optimizer->first_moment) put_matrix(out, mm);
    for (const auto& mm : cp.optimizer->second_moment) put_matrix(out, mm);
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const unsigned char> bytes) {
  const std::string magic = std::string(kCheckpointMagic) + ' ';
  if (bytes.size() < magic.size() ||
      std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw Error(ErrorCode::kVersionMismatch, "not an N-HANS checkpoint (bad magic)");
  }
  static constexpr char kEnd[] = "\nend\n";
  const std::string_view all(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const std::size_t end_pos = all.find(kEnd);
  if (end_pos == std::string_view::npos) {
    throw Error(ErrorCode::kTruncatedFile, "checkpoint header is not terminated");
  }
  const std::size_t payload_start = end_pos + std::strlen(kEnd);

  Header header;
  std::istringstream lines(std::string(all.substr(0, end_pos + 1)));
  std::string line;
  std::getline(lines, line);
  {
    std::istringstream first(line);
    std::string word;
    int version = 0;
    first >> word >> version;
    if (first.fail() || version != kCheckpointVersion) {
      throw Error(ErrorCode::kVersionMismatch,
                  "unsupported checkpoint version in '" + line + "'");
    }
  }
  while (std::getline(lines, line)) {
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "tensor") {
      std::istringstream in(value);
      Header::Entry e;
      in >> e.name >> e.rows >> e.cols;
      if (in.fail() || e.rows < 0 || e.cols < 0) malformed("bad tensor line '" + line + "'");
      header.tensors.push_back(e);
    } else {
      header.fields[key] = value;
    }
  }

  Checkpoint cp;
  ModelHyperparams hp;
  hp.hidden = header.number<int>("hidden");
  hp.blocks = header.number<int>("blocks");
  hp.context = header.number<int>("context");
  hp.embedding = header.number<int>("embedding");
  hp.stft.fft_size = header.number<int>("fft_size");
  hp.stft.hop = header.number<int>("hop");
  hp.stft.sample_rate = header.number<int>("sample_rate");
  hp.feature_offset = header.number<double>("feature_offset");
  hp.feature_scale = header.number<double>("feature_scale");
  TaskKind task;
  try {
    task = parse_task(header.get("task"));
  } catch (const Error&) {
    malformed("unknown task '" + header.get("task") + "'");
  }
  try {
    hp.validate();
  } catch (const Error& e) {
    malformed(e.what());
  }
  cp.step = header.number<std::int64_t>("step");
  cp.rng_state = header.get("rng");

  const std::string& opt = header.get("optimizer");
  if (opt != "none" && opt != "adam") malformed("unknown optimizer '" + opt + "'");

  if (header.number<std::size_t>("tensors") != header.tensors.size()) {
    throw Error(ErrorCode::kCorruptPayload, "tensor count disagrees with the tensor list");
  }
  cp.model = PmAuxModel::create(task, hp, 0);
  auto params = cp.model.parameters();
  if (params.size() != header.tensors.size()) {
    throw Error(ErrorCode::kCorruptPayload,
                "checkpoint lists " + std::to_string(header.tensors.size()) +
                    " tensors, the architecture has " + std::to_string(params.size()));
  }
  std::size_t floats = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = header.tensors[i];
    const nn::Tensor& t = *params[i];
    if (e.name != t.name || e.rows != t.value.rows() || e.cols != t.value.cols()) {
      throw Error(ErrorCode::kCorruptPayload,
                  "tensor '" + e.name + "' " + std::to_string(e.rows) + "x" +
                      std::to_string(e.cols) + " does not match '" + t.name + "' " +
                      std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()));
    }
    floats += static_cast<std::size_t>(t.value.size());
  }
  const std::size_t copies = opt == "adam" ? 3 : 1;
  const std::size_t expected = 4 * floats * copies;
  const std::size_t available = bytes.size() - payload_start;
  if (available < expected) {
    throw Error(ErrorCode::kTruncatedFile,
                "checkpoint payload has " + std::to_string(available) + " bytes, expected " +
                    std::to_string(expected));
  }
  if (available > expected) {
    throw Error(ErrorCode::kCorruptPayload,
                "checkpoint payload has " + std::to_string(available - expected) +
                    " trailing bytes");
  }

  const unsigned char* p = bytes.data() + payload_start;
  auto read_matrix = [&](nn::Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i, p += 4) {
      const float v = get_f32(p);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kCorruptPayload, "non-finite value in checkpoint payload");
      }
      m.data()[i] = v;
    }
  };
  for (nn::Tensor* t : params) {
    read_matrix(t->value);
    t->zero_grad();
  }
  if (opt == "adam") {
    nn::AdamState state = nn::make_adam(params);
    std::istringstream in(header.get("adam_config"));
    in >> state.config.lr >> state.config.beta1 >> state.config.beta2 >> state.config.epsilon;
    if (in.fail()) malformed("bad adam_config");
    state.step = header.number<std::int64_t>("adam_step");
    for (auto& m : state.first_moment) read_matrix(m);
    for (auto& m : state.second_moment) read_matrix(m);
    cp.optimizer = std::move(state);
  }
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(cp);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot move checkpoint into " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

PmAuxModel load_model(const std::filesystem::path& path) {
  return load_checkpoint(path).model;
}

}  // namespace nhans
