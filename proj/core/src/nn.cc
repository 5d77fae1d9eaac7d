// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nhans/error.h"

namespace nhans::nn {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

constexpr double kSigmoidClamp = 30.0;

}  // namespace

void round_to_float(Matrix& m) {
  m = m.cast<float>().cast<double>();
}

DenseLayer make_dense(const std::string& name, int in, int out, Init init,
                      Rng& rng, double gain) {
  DenseLayer layer;
  layer.weight.name = name + ".weight";
  layer.bias.name = name + ".bias";
  layer.weight.value = Matrix::Zero(out, in);
  layer.bias.value = Matrix::Zero(1, out);
  double limit = 0.0;
  if (init == Init::kHeUniform) {
    limit = std::sqrt(6.0 / in);
  } else if (init == Init::kGlorotUniform) {
    limit = std::sqrt(6.0 / (in + out));
  }
  limit *= gain;
  if (limit > 0.0) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < layer.weight.value.size(); ++i) {
      layer.weight.value.data()[i] = dist(rng);
    }
    round_to_float(layer.weight.value);
  }
  layer.weight.zero_grad();
  layer.bias.zero_grad();
  return layer;
}

ResidualBlock make_residual_block(const std::string& name, int hidden,
                                  int condition_width, Rng& rng, double branch_gain) {
  ResidualBlock block;
  if (condition_width > 0) {
    block.condition = make_dense(name + ".condition", hidden + condition_width,
                                 hidden, Init::kHeUniform, rng);
  }
  block.inner = make_dense(name + ".inner", hidden, hidden, Init::kHeUniform, rng);
  block.outer = make_dense(name + ".outer", hidden, hidden, Init::kHeUniform, rng, branch_gain);
  return block;
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

const Matrix& Graph::grad(Var v) const { return node(v).grad; }

void Graph::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

template <typename Expr>
void Graph::accumulate_expr(Var v, const Expr& g) {
  Node& n = node(v);
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(Tensor& tensor) {
  Node n;
  n.external = &tensor.value;
  n.param = &tensor;
  n.needs_grad = tensor.requires_grad;
  return push(std::move(n));
}

Var Graph::parameter(const Tensor& tensor) {
  Node n;
  n.external = &tensor.value;
  return push(std::move(n));
}

Var Graph::dense(Var x, DenseLayer& layer) {
  check(value(x).cols() == layer.in_features(), "dense: input width mismatch");
  return dense_impl(x, parameter(layer.weight), parameter(layer.bias));
}

Var Graph::dense(Var x, const DenseLayer& layer) {
  check(value(x).cols() == layer.in_features(), "dense: input width mismatch");
  return dense_impl(x, parameter(layer.weight), parameter(layer.bias));
}

Var Graph::dense_impl(Var x, Var w, Var b) {
  const Matrix& W = value(w);
  Node n;
  n.value.noalias() = value(x) * W.transpose();
  n.value.rowwise() += value(b).row(0);
  n.needs_grad = needs(x) || needs(w) || needs(b);
  n.backprop = [x, w, b](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    if (g.needs(x)) {
      Matrix dx;
      dx.noalias() = dy * g.value(w);
      g.accumulate(x, dx);
    }
    if (g.needs(w)) {
      Matrix dw;
      dw.noalias() = dy.transpose() * g.value(x);
      g.accumulate(w, dw);
    }
    if (g.needs(b)) g.accumulate_expr(b, dy.colwise().sum());
  };
  return push(std::move(n));
}

Var Graph::relu(Var x) {
  Node n;
  n.value = value(x).cwiseMax(0.0);
  n.needs_grad = needs(x);
  n.backprop = [x](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    g.accumulate_expr(x, (g.value(x).array() > 0.0).select(dy.array(), 0.0).matrix());
  };
  return push(std::move(n));
}

Var Graph::sigmoid(Var x) {
  Node n;
  n.value = value(x)
                .array()
                .max(-kSigmoidClamp)
                .min(kSigmoidClamp)
                .unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); })
                .matrix();
  n.needs_grad = needs(x);
  n.backprop = [x](Graph& g, int self) {
    const Node& me = g.nodes_[static_cast<std::size_t>(self)];
    g.accumulate_expr(
        x, (me.grad.array() * me.value.array() * (1.0 - me.value.array())).matrix());
  };
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  check(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
        "add: shape mismatch");
  Node n;
  n.value = value(a) + value(b);
  n.needs_grad = needs(a) || needs(b);
  n.backprop = [a, b](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    if (g.needs(a)) g.accumulate(a, dy);
    if (g.needs(b)) g.accumulate(b, dy);
  };
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
        "mul: shape mismatch");
  Node n;
  n.value = value(a).cwiseProduct(value(b));
  n.needs_grad = needs(a) || needs(b);
  n.backprop = [a, b](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    if (g.needs(a)) g.accumulate_expr(a, dy.cwiseProduct(g.value(b)));
    if (g.needs(b)) g.accumulate_expr(b, dy.cwiseProduct(g.value(a)));
  };
  return push(std::move(n));
}

Var Graph::concat(std::span<const Var> parts) {
  check(!parts.empty(), "concat: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    check(value(p).rows() == rows, "concat: row count mismatch");
    cols += value(p).cols();
  }
  Node n;
  n.value.resize(rows, cols);
  Eigen::Index offset = 0;
  std::vector<Var> inputs(parts.begin(), parts.end());
  for (Var p : inputs) {
    n.value.middleCols(offset, value(p).cols()) = value(p);
    n.needs_grad = n.needs_grad || needs(p);
    offset += value(p).cols();
  }
  n.backprop = [inputs](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    Eigen::Index off = 0;
    for (Var p : inputs) {
      const Eigen::Index w = g.value(p).cols();
      if (g.needs(p)) g.accumulate_expr(p, dy.middleCols(off, w));
      off += w;
    }
  };
  return push(std::move(n));
}

Var Graph::mean_pool_frames(Var x) {
  const Eigen::Index rows = value(x).rows();
  check(rows > 0, "mean_pool_frames: no frames");
  const Eigen::Index lengths[] = {rows};
  return mean_pool_segments(x, lengths);
}

Var Graph::mean_pool_segments(Var x, std::span<const Eigen::Index> lengths) {
  const Matrix& in = value(x);
  const Eigen::Index total = std::accumulate(lengths.begin(), lengths.end(), Eigen::Index{0});
  check(total == in.rows(), "mean_pool_segments: lengths do not cover the rows");
  std::vector<Eigen::Index> segs(lengths.begin(), lengths.end());
  Node n;
  n.value.resize(static_cast<Eigen::Index>(segs.size()), in.cols());
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    check(segs[s] > 0, "mean_pool_segments: empty segment");
    n.value.row(static_cast<Eigen::Index>(s)) =
        in.middleRows(row, segs[s]).colwise().sum() / static_cast<double>(segs[s]);
    row += segs[s];
  }
  n.needs_grad = needs(x);
  n.backprop = [x, segs](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    Matrix dx(g.value(x).rows(), g.value(x).cols());
    Eigen::Index r = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      dx.middleRows(r, segs[s]).rowwise() =
          dy.row(static_cast<Eigen::Index>(s)) / static_cast<double>(segs[s]);
      r += segs[s];
    }
    g.accumulate(x, dx);
  };
  return push(std::move(n));
}

Var Graph::repeat_rows(Var x, std::span<const Eigen::Index> lengths) {
  const Matrix& in = value(x);
  check(static_cast<Eigen::Index>(lengths.size()) == in.rows(),
        "repeat_rows: one length per row required");
  std::vector<Eigen::Index> segs(lengths.begin(), lengths.end());
  const Eigen::Index total = std::accumulate(segs.begin(), segs.end(), Eigen::Index{0});
  Node n;
  n.value.resize(total, in.cols());
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    n.value.middleRows(row, segs[s]).rowwise() = in.row(static_cast<Eigen::Index>(s));
    row += segs[s];
  }
  n.needs_grad = needs(x);
  n.backprop = [x, segs](Graph& g, int self) {
    const Matrix& dy = g.nodes_[static_cast<std::size_t>(self)].grad;
    Matrix dx(static_cast<Eigen::Index>(segs.size()), dy.cols());
    Eigen::Index r = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      dx.row(static_cast<Eigen::Index>(s)) = dy.middleRows(r, segs[s]).colwise().sum();
      r += segs[s];
    }
    g.accumulate(x, dx);
  };
  return push(std::move(n));
}

Var Graph::sum(Var x) {
  Node n;
  n.value = Matrix::Constant(1, 1, value(x).sum());
  n.needs_grad = needs(x);
  n.backprop = [x](Graph& g, int self) {
    const double dy = g.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
    g.accumulate_expr(x, Matrix::Constant(g.value(x).rows(), g.value(x).cols(), dy));
  };
  return push(std::move(n));
}

Var Graph::mse(Var prediction, Var target) {
  const Matrix& p = value(prediction);
  const Matrix& t = value(target);
  check(p.rows() == t.rows() && p.cols() == t.cols(), "mse: shape mismatch");
  check(p.size() > 0, "mse: empty input");
  Node n;
  const double count = static_cast<double>(p.size());
  n.value = Matrix::Constant(1, 1, (p - t).squaredNorm() / count);
  n.needs_grad = needs(prediction) || needs(target);
  n.backprop = [prediction, target, count](Graph& g, int self) {
    const double dy = g.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
    Matrix diff = (g.value(prediction) - g.value(target)) * (2.0 * dy / count);
    if (g.needs(prediction)) g.accumulate(prediction, diff);
    if (g.needs(target)) g.accumulate_expr(target, -diff);
  };
  return push(std::move(n));
}

Var Graph::residual_block(Var h, ResidualBlock& block, std::optional<Var> condition) {
  return residual_block_impl(h, block, condition);
}

Var Graph::residual_block(Var h, const ResidualBlock& block,
                          std::optional<Var> condition) {
  return residual_block_impl(h, block, condition);
}

template <typename Block>
Var Graph::residual_block_impl(Var h, Block& block, std::optional<Var> condition) {
  Var u;
  if (block.condition) {
    check(condition.has_value(), "residual_block: conditioned block needs a condition");
    u = relu(dense(concat({h, *condition}), *block.condition));
  } else {
    u = relu(h);
  }
  Var v = relu(dense(u, block.inner));
  return add(h, dense(v, block.outer));
}

void Graph::backward(Var loss) {
  const Matrix& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "backward: loss must be a scalar");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  node(loss).grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.needs_grad) continue;
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    } else if (n.backprop) {
      n.backprop(*this, i);
    }
  }
}

AdamState make_adam(std::span<Tensor* const> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (Tensor* p : params) {
    state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  return state;
}

void adam_step(AdamState& state, std::span<Tensor* const> params) {
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw Error(ErrorCode::kInvalidArgument, "adam_step: optimizer state not initialized for these parameters");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "adam_step: moment shape mismatch for " + p.name);
    }
    if (p.requires_grad) {
      m = c.beta1 * m + (1.0 - c.beta1) * p.grad;
      v = c.beta2 * v + (1.0 - c.beta2) * p.grad.cwiseProduct(p.grad);
      round_to_float(m);
      round_to_float(v);
      p.value.array() -= c.lr * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + c.epsilon);
      round_to_float(p.value);
    }
    p.zero_grad();
  }
}

double GradientCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

GradientCheckReport gradient_check(const std::function<Var(Graph&)>& build_loss,
                                   std::span<Tensor* const> params,
                                   double tolerance, double step) {
  for (Tensor* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(build_loss(g));
  }
  auto eval = [&] {
    Graph g;
    return g.value(build_loss(g))(0, 0);
  };
  GradientCheckReport report;
  report.tolerance = tolerance;
  for (Tensor* p : params) {
    if (!p->requires_grad) continue;
    GradientCheckEntry entry;
    entry.name = p->name;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + step;
      const double up = eval();
      w = saved - step;
      const double down = eval();
      w = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad.data()[i];
      const double abs_err = std::abs(numeric - analytic);
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      entry.max_absolute_error = std::max(entry.max_absolute_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, abs_err / scale);
    }
    report.entries.push_back(entry);
  }
  for (Tensor* p : params) p->zero_grad();
  return report;
}

}  // namespace nhans::nn
