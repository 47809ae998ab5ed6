#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "equiroute/rng.hpp"
#include "equiroute/tensor.hpp"

namespace equiroute {

enum class Activation { identity, relu };

/// y = act(x W^T + b), W is out x in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  /// Weights uniform in +-sqrt(6 / (in + out)), zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Activation act, Rng& rng);
  static DenseLayer zeros(std::size_t in, std::size_t out, Activation act);

  DenseLayer zeros_like() const { return zeros(in_dim(), out_dim(), activation); }

  /// Weight block followed by bias block.
  void append_parameters(std::vector<std::span<double>>& out);
  void append_parameters(std::vector<std::span<const double>>& out) const;

  bool operator==(const DenseLayer&) const = default;
};

/// Counts multiply-adds performed by forward passes.
struct OpCounter {
  std::uint64_t macs = 0;
};

Matrix forward(const DenseLayer& layer, const Matrix& x, OpCounter* ops = nullptr);

struct DenseGrads {
  Matrix grad_x;
  Matrix grad_weight;
  std::vector<double> grad_bias;
};

/// Chain rule through one layer; `y` is the forward output for `x`.
DenseGrads backward(const DenseLayer& layer, const Matrix& x, const Matrix& y, const Matrix& grad_out);
/// Recomputes the forward output first.
DenseGrads backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out);

/// Like backward(), but adds weight/bias gradients into `acc` and skips grad_x
/// when `grad_x` is null.
void backward_accumulate(const DenseLayer& layer, const Matrix& x, const Matrix& y, const Matrix& grad_out,
                         DenseLayer& acc, Matrix* grad_x);

/// Stack of layers applied in order; keeps every intermediate output.
std::vector<Matrix> forward_stack(const std::vector<DenseLayer>& layers, const Matrix& x, OpCounter* ops = nullptr);
/// Returns the gradient with respect to the stack input when `want_input_grad`.
Matrix backward_stack(const std::vector<DenseLayer>& layers, const std::vector<Matrix>& activations,
                      const Matrix& input, Matrix grad_out, std::vector<DenseLayer>& acc, bool want_input_grad);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled decay: param -= learning_rate * weight_decay * param each step.
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One bias-corrected Adam update in place. Moment buffers are sized on the
/// first call and must keep matching the parameter shapes afterwards.
void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads);
void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<double>>& grads);

std::vector<double> flatten(const std::vector<std::span<double>>& blocks);
void unflatten(std::span<const double> flat, const std::vector<std::span<double>>& blocks);
std::size_t parameter_count(const std::vector<std::span<double>>& blocks);

/// Loss and gradient at theta; `grad` is empty when only the value is needed.
using LossFunction = std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences (L(theta + h e_i) - L(theta - h e_i)) / 2h against the
/// analytic gradient. Relative error is |g - fd| / max(|g|, |fd|, floor) with
/// floor = 1e-7. When max_coords > 0 and smaller than the parameter count, a
/// seeded sample of coordinates is checked.
GradCheckReport grad_check(const LossFunction& loss, std::span<const double> theta, double h, double tol,
                           std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace equiroute
