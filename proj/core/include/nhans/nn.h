// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Minimal reverse-mode differentiation over row-major matrices. A Graph is
// a tape: every op appends a node holding its value and a closure that
// pushes the node's gradient to its parents. Parameters live outside the
// graph in Tensor objects and receive accumulated gradients on backward().

#ifndef NHANS_NN_H_
#define NHANS_NN_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nhans/dsp.h"

namespace nhans::nn {

using Matrix = RealMatrix;
using Rng = std::mt19937_64;

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool requires_grad = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

enum class Init { kHeUniform, kGlorotUniform, kZero };

/// y = x W^T + b, with W stored out x in and b as a 1 x out row.
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }
};

/// gain scales the uniform init limit.
DenseLayer make_dense(const std::string& name, int in, int out, Init init,
                      Rng& rng, double gain = 1.0);

// h' = h + outer(relu(inner(u))), where u = relu(condition([h, c])) for a
// conditioned block and u = relu(h) otherwise.
struct ResidualBlock {
  std::optional<DenseLayer> condition;
  DenseLayer inner;
  DenseLayer outer;

  int hidden() const { return inner.in_features(); }
  int condition_width() const {
    return condition ? condition->in_features() - hidden() : 0;
  }
};

/// branch_gain scales the outer layer's init so a stack of blocks starts
/// close to the identity.
ResidualBlock make_residual_block(const std::string& name, int hidden,
                                  int condition_width, Rng& rng, double branch_gain = 1.0);

/// Handle to a node on a Graph tape.
struct Var {
  int id = -1;
};

class Graph {
 public:
  Var constant(Matrix value);
  /// Trainable leaf when tensor.requires_grad; gradients land in tensor.grad.
  Var parameter(Tensor& tensor);
  /// Read-only view; never receives gradients.
  Var parameter(const Tensor& tensor);

  Var dense(Var x, DenseLayer& layer);
  Var dense(Var x, const DenseLayer& layer);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }
  /// Mean over all rows: frames x d -> 1 x d.
  Var mean_pool_frames(Var x);
  /// Mean over consecutive row segments: sum(lengths) x d -> segments x d.
  Var mean_pool_segments(Var x, std::span<const Eigen::Index> lengths);
  /// Inverse layout of mean_pool_segments: row s is repeated lengths[s] times.
  Var repeat_rows(Var x, std::span<const Eigen::Index> lengths);
  Var sum(Var x);
  Var mse(Var prediction, Var target);

  Var residual_block(Var h, ResidualBlock& block,
                     std::optional<Var> condition = std::nullopt);
  Var residual_block(Var h, const ResidualBlock& block,
                     std::optional<Var> condition = std::nullopt);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() w.r.t. this node (empty if unreached).
  const Matrix& grad(Var v) const;

  /// Throws Error(kShapeMismatch) if loss is not 1 x 1.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Tensor* param = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&, int)> backprop;
  };

  Var push(Node node);
  Var dense_impl(Var x, Var w, Var b);
  template <typename Block>
  Var residual_block_impl(Var h, Block& block, std::optional<Var> condition);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool needs(Var v) const { return node(v).needs_grad; }
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g);

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

AdamState make_adam(std::span<Tensor* const> params, AdamConfig config = {});

// Bias-corrected Adam update followed by clearing the gradients.
// Parameters and moments are kept on the float32 grid so checkpoints are
// lossless. Throws Error(kInvalidArgument) if state does not match params.
void adam_step(AdamState& state, std::span<Tensor* const> params);

/// Rounds every entry to the nearest float32 value.
void round_to_float(Matrix& m);

struct GradientCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double tolerance = 0.0;

  double max_relative_error() const;
  bool passed() const { return max_relative_error() <= tolerance; }
};

/// Compares backward() against central differences for every parameter
/// with requires_grad set. build_loss must be deterministic.
GradientCheckReport gradient_check(
    const std::function<Var(Graph&)>& build_loss,
    std::span<Tensor* const> params, double tolerance, double step = 1e-4);

}  // namespace nhans::nn

#endif  // NHANS_NN_H_
