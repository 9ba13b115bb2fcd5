#include "avatar/neural_field.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace avatar {

void validate(const FieldParams& params) {
  if (params.arch.num_freqs < 0 || params.arch.width < 1 || params.arch.depth < 1) {
    throw std::invalid_argument("invalid field architecture");
  }
  if (params.values.size() != param_count(params.arch.mlp())) {
    throw std::invalid_argument("field parameter vector length does not match its architecture");
  }
  for (double v : params.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("field parameters contain non-finite values");
  }
}

void encode_into(const Eigen::Vector3d& x, int num_freqs, std::span<double> out) {
  out[0] = x.x();
  out[1] = x.y();
  out[2] = x.z();
  if (num_freqs == 0) return;
  // Octaves by the double-angle identities from one sin/cos per axis.
  for (int d = 0; d < 3; ++d) {
    out[3 + d] = std::sin(std::numbers::pi * x[d]);
    out[6 + d] = std::cos(std::numbers::pi * x[d]);
  }
  for (int k = 1; k < num_freqs; ++k) {
    const double* p = &out[3 + 6 * (k - 1)];
    double* s = &out[3 + 6 * k];
    for (int d = 0; d < 3; ++d) {
      s[d] = 2.0 * p[d] * p[d + 3];
      s[d + 3] = (p[d + 3] - p[d]) * (p[d + 3] + p[d]);
    }
  }
}

std::vector<double> encode(const Eigen::Vector3d& x, int num_freqs) {
  std::vector<double> out(3 + 6 * num_freqs);
  encode_into(x, num_freqs, out);
  return out;
}

Eigen::Vector3d encode_backward(const Eigen::Vector3d& x, int num_freqs, std::span<const double> g) {
  Eigen::Vector3d grad(g[0], g[1], g[2]);
  double freq = std::numbers::pi;
  for (int k = 0; k < num_freqs; ++k) {
    const double* s = &g[3 + 6 * k];
    for (int d = 0; d < 3; ++d) {
      grad[d] += freq * (s[d] * std::cos(freq * x[d]) - s[d + 3] * std::sin(freq * x[d]));
    }
    freq *= 2.0;
  }
  return grad;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

FieldParams init_field(const FieldArch& arch, std::uint64_t seed) {
  FieldParams p{arch, init_mlp(arch.mlp(), seed, 0.1)};
  const MlpArch m = arch.mlp();
  const std::size_t bias = weight_offset(m, m.depth) + static_cast<std::size_t>(m.layer_in(m.depth)) * m.output_dim;
  p.values[bias + 3] = std::log(std::expm1(0.1));
  return p;
}

FieldEvaluator::FieldEvaluator(const FieldParams& params)
    : params_(&params),
      mlp_(params.arch.mlp()),
      ws_(mlp_),
      encoded_(params.arch.encoded_dim()),
      grad_encoded_(params.arch.encoded_dim()) {}

RadianceSample FieldEvaluator::forward(const Eigen::Vector3d& x) {
  if (!x.allFinite()) throw NumericError("field input is not finite");
  last_x_ = x;
  encode_into(x, params_->arch.num_freqs, encoded_);
  const int bad = mlp_forward(mlp_, params_->values, encoded_, raw_, ws_);
  if (bad >= 0) throw NumericError("non-finite activation in field layer " + std::to_string(bad));
  last_.c = {sigmoid(raw_[0]), sigmoid(raw_[1]), sigmoid(raw_[2])};
  last_.sigma = softplus(raw_[3]);
  return last_;
}

Eigen::Vector3d FieldEvaluator::backward(const Eigen::Vector3d& grad_c, double grad_sigma,
                                         std::span<double> grad_params, bool need_position) {
  double grad_raw[4];
  for (int k = 0; k < 3; ++k) grad_raw[k] = grad_c[k] * last_.c[k] * (1.0 - last_.c[k]);
  grad_raw[3] = grad_sigma * sigmoid(raw_[3]);
  if (!need_position) {
    mlp_backward(mlp_, params_->values, ws_, grad_raw, grad_params, {});
    return Eigen::Vector3d::Zero();
  }
  mlp_backward(mlp_, params_->values, ws_, grad_raw, grad_params, grad_encoded_);
  // d sin(fx)/dx = f cos(fx), d cos(fx)/dx = -f sin(fx), read from the cached encoding
  const double* e = encoded_.data();
  const double* g = grad_encoded_.data();
  Eigen::Vector3d grad(g[0], g[1], g[2]);
  double freq = std::numbers::pi;
  for (int k = 0; k < params_->arch.num_freqs; ++k) {
    const int o = 3 + 6 * k;
    for (int d = 0; d < 3; ++d) grad[d] += freq * (g[o + d] * e[o + d + 3] - g[o + d + 3] * e[o + d]);
    freq *= 2.0;
  }
  return grad;
}

RadianceSample evaluate(const FieldParams& params, const Eigen::Vector3d& x) {
  FieldEvaluator ev(params);
  return ev.forward(x);
}

std::vector<double> gradient(const FieldParams& params, const GradientClosure& closure) {
  std::vector<double> grad(params.values.size(), 0.0);
  closure(params, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient at parameter " + std::to_string(i));
  }
  return grad;
}

}  // namespace avatar
