#include "equiroute/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace equiroute {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer = zeros(in, out, act);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
  return layer;
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out, Activation act) {
  return {Matrix(out, in), std::vector<double>(out, 0.0), act};
}

void DenseLayer::append_parameters(std::vector<std::span<double>>& out) {
  out.push_back(weight.values());
  out.push_back(bias);
}

void DenseLayer::append_parameters(std::vector<std::span<const double>>& out) const {
  out.push_back(weight.values());
  out.push_back(bias);
}

Matrix forward(const DenseLayer& layer, const Matrix& x, OpCounter* ops) {
  require(x.cols() == layer.in_dim(), "dense forward: input width does not match layer");
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  Matrix y(x.rows(), out);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const double* xr = x.row(b).data();
    double* yr = y.row(b).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = layer.weight.row(o).data();
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = (layer.activation == Activation::relu && acc < 0.0) ? 0.0 : acc;
    }
  }
  if (ops) ops->macs += static_cast<std::uint64_t>(x.rows()) * in * out;
  return y;
}

void backward_accumulate(const DenseLayer& layer, const Matrix& x, const Matrix& y, const Matrix& grad_out,
                         DenseLayer& acc, Matrix* grad_x) {
  require(x.cols() == layer.in_dim(), "dense backward: input width does not match layer");
  require(grad_out.rows() == x.rows() && grad_out.cols() == layer.out_dim(),
          "dense backward: grad_out shape does not match");
  require(y.rows() == x.rows() && y.cols() == layer.out_dim(), "dense backward: output shape does not match");
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  if (grad_x) *grad_x = Matrix(x.rows(), in);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const double* xr = x.row(b).data();
    const double* yr = y.row(b).data();
    const double* gr = grad_out.row(b).data();
    double* gx = grad_x ? grad_x->row(b).data() : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      double g = gr[o];
      if (layer.activation == Activation::relu && yr[o] <= 0.0) g = 0.0;
      if (g == 0.0) continue;
      acc.bias[o] += g;
      double* gw = acc.weight.row(o).data();
      for (std::size_t i = 0; i < in; ++i) gw[i] += g * xr[i];
      if (gx) {
        const double* wr = layer.weight.row(o).data();
        for (std::size_t i = 0; i < in; ++i) gx[i] += g * wr[i];
      }
    }
  }
}

DenseGrads backward(const DenseLayer& layer, const Matrix& x, const Matrix& y, const Matrix& grad_out) {
  DenseLayer acc = layer.zeros_like();
  DenseGrads grads;
  backward_accumulate(layer, x, y, grad_out, acc, &grads.grad_x);
  grads.grad_weight = std::move(acc.weight);
  grads.grad_bias = std::move(acc.bias);
  return grads;
}

DenseGrads backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out) {
  return backward(layer, x, forward(layer, x), grad_out);
}

std::vector<Matrix> forward_stack(const std::vector<DenseLayer>& layers, const Matrix& x, OpCounter* ops) {
  std::vector<Matrix> acts;
  acts.reserve(layers.size());
  const Matrix* in = &x;
  for (const auto& layer : layers) {
    acts.push_back(forward(layer, *in, ops));
    in = &acts.back();
  }
  return acts;
}

Matrix backward_stack(const std::vector<DenseLayer>& layers, const std::vector<Matrix>& activations,
                      const Matrix& input, Matrix grad_out, std::vector<DenseLayer>& acc, bool want_input_grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& in = l == 0 ? input : activations[l - 1];
    const bool need_x = l > 0 || want_input_grad;
    Matrix grad_in;
    backward_accumulate(layers[l], in, activations[l], grad_out, acc[l], need_x ? &grad_in : nullptr);
    grad_out = std::move(grad_in);
  }
  return grad_out;
}

void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads) {
  require(params.size() == grads.size(), "adam_step: parameter and gradient block counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(params[k].size() == grads[k].size(), "adam_step: parameter and gradient shapes differ");
  }
  if (state.step == 0 && state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  require(state.first_moment.size() == params.size(), "adam_step: state does not match parameter blocks");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(state.first_moment[k].size() == params[k].size(), "adam_step: state does not match parameter shape");
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto p = params[k];
    const auto g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * p[i]);
    }
  }
}

void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<double>>& grads) {
  std::vector<std::span<const double>> cgrads(grads.begin(), grads.end());
  adam_step(state, params, cgrads);
}

std::size_t parameter_count(const std::vector<std::span<double>>& blocks) {
  return std::accumulate(blocks.begin(), blocks.end(), std::size_t{0},
                         [](std::size_t s, const auto& b) { return s + b.size(); });
}

std::vector<double> flatten(const std::vector<std::span<double>>& blocks) {
  std::vector<double> flat;
  flat.reserve(parameter_count(blocks));
  for (const auto& b : blocks) flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

void unflatten(std::span<const double> flat, const std::vector<std::span<double>>& blocks) {
  require(flat.size() == parameter_count(blocks), "unflatten: size mismatch");
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), b.size(), b.begin());
    offset += b.size();
  }
}

GradCheckReport grad_check(const LossFunction& loss, std::span<const double> theta, double h, double tol,
                           std::size_t max_coords, std::uint64_t seed) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("grad_check: step h must be positive");
  constexpr double kFloor = 1e-7;

  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> analytic(point.size(), 0.0);
  const double base = loss(point, analytic);
  if (!std::isfinite(base)) throw NumericsError("grad_check: non-finite loss");

  std::vector<std::size_t> coords = [&] {
    std::vector<std::size_t> all(point.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }();
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  for (std::size_t i : coords) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = loss(point, {});
    point[i] = saved - h;
    const double down = loss(point, {});
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericsError("grad_check: non-finite loss");
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), kFloor});
    const double rel = std::abs(analytic[i] - fd) / denom;
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = i;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace equiroute
