#pragma once

#include "avatar/mlp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace avatar {

/// Canonical appearance volume: position → (color, density). No view
/// direction input.
struct FieldArch {
  int num_freqs = 10;
  int width = 256;
  int depth = 8;
  int skip = 4;

  static FieldArch full() { return {}; }
  static FieldArch desk() { return {6, 16, 2, -1}; }

  int encoded_dim() const { return 3 + 6 * num_freqs; }
  MlpArch mlp() const { return {encoded_dim(), width, depth, skip, 4}; }

  friend bool operator==(const FieldArch&, const FieldArch&) = default;
};

struct FieldParams {
  FieldArch arch;
  std::vector<double> values;
};

/// Throws std::invalid_argument on length mismatch or non-finite values.
void validate(const FieldParams& params);

struct RadianceSample {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double sigma = 0.0;
};

/// [x, sin(2^k π x), cos(2^k π x)] for k = 0..num_freqs-1.
std::vector<double> encode(const Eigen::Vector3d& x, int num_freqs);
void encode_into(const Eigen::Vector3d& x, int num_freqs, std::span<double> out);
/// dL/dx given dL/d(encoding).
Eigen::Vector3d encode_backward(const Eigen::Vector3d& x, int num_freqs, std::span<const double> grad_encoded);

/// Seeded fan-in init; the density bias makes the initial density ≈ 0.1/m.
FieldParams init_field(const FieldArch& arch, std::uint64_t seed);

double softplus(double x);
double sigmoid(double x);

/// Single-threaded evaluator with cached activations for backpropagation.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const FieldParams& params);

  /// Throws NumericError naming the layer on a non-finite intermediate.
  RadianceSample forward(const Eigen::Vector3d& x);

  /// Backpropagates through the last forward() call. Accumulates into
  /// grad_params; returns dL/dx, or zero when need_position is false.
  Eigen::Vector3d backward(const Eigen::Vector3d& grad_c, double grad_sigma, std::span<double> grad_params,
                           bool need_position = true);

 private:
  const FieldParams* params_;
  MlpArch mlp_;
  MlpWorkspace ws_;
  std::vector<double> encoded_;
  std::vector<double> grad_encoded_;
  double raw_[4] = {0, 0, 0, 0};
  RadianceSample last_;
  Eigen::Vector3d last_x_ = Eigen::Vector3d::Zero();
};

RadianceSample evaluate(const FieldParams& params, const Eigen::Vector3d& x);

/// A differentiable scalar: returns the loss at `params` and accumulates its
/// gradient into `grad` (pre-sized to params.values.size(), zeroed).
using GradientClosure = std::function<double(const FieldParams& params, std::span<double> grad)>;

/// Throws NumericError if any gradient entry is non-finite.
std::vector<double> gradient(const FieldParams& params, const GradientClosure& closure);

}  // namespace avatar
