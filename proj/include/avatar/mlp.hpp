#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace avatar {

/// Fully connected network with a linear output layer. Hidden units use
/// the squareplus rectifier (z + sqrt(z² + 1)) / 2, a smooth stand-in for
/// ReLU whose derivatives exist everywhere. Hidden layer
/// `skip` (when >= 1) receives the network input concatenated to the
/// previous activation.
struct MlpArch {
  int input_dim = 3;
  int width = 16;
  int depth = 2;
  int skip = -1;
  int output_dim = 4;

  int layer_count() const { return depth + 1; }
  int layer_in(int l) const;
  int layer_out(int l) const { return l == depth ? output_dim : width; }

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

double squareplus(double z);
double squareplus_grad(double z);

/// Flat parameter layout: per layer, W (out×in, row-major) then b (out).
std::size_t param_count(const MlpArch& arch);
std::size_t weight_offset(const MlpArch& arch, int layer);

/// Per-evaluation scratch holding every layer input and pre-activation,
/// reused across calls by one thread.
class MlpWorkspace {
 public:
  explicit MlpWorkspace(const MlpArch& arch);

  std::span<double> layer_input(int l) { return {inputs_.data() + in_off_[l], static_cast<std::size_t>(in_dim_[l])}; }
  std::span<const double> layer_input(int l) const {
    return {inputs_.data() + in_off_[l], static_cast<std::size_t>(in_dim_[l])};
  }
  std::span<double> pre(int l) { return {pre_.data() + out_off_[l], static_cast<std::size_t>(out_dim_[l])}; }
  std::span<const double> pre(int l) const {
    return {pre_.data() + out_off_[l], static_cast<std::size_t>(out_dim_[l])};
  }
  std::vector<double>& scratch_a() { return scratch_a_; }
  std::vector<double>& scratch_b() { return scratch_b_; }

 private:
  std::vector<int> in_dim_, out_dim_;
  std::vector<std::size_t> in_off_, out_off_;
  std::vector<double> inputs_, pre_;
  std::vector<double> scratch_a_, scratch_b_;
};

/// Returns the index of the first layer whose output is non-finite, or -1.
int mlp_forward(const MlpArch& arch, std::span<const double> params, std::span<const double> input,
                std::span<double> output, MlpWorkspace& ws);

/// Accumulates dL/dparams into grad_params; writes dL/dinput when grad_input is non-empty.
void mlp_backward(const MlpArch& arch, std::span<const double> params, MlpWorkspace& ws,
                  std::span<const double> grad_output, std::span<double> grad_params, std::span<double> grad_input);

/// Fan-in scaled uniform init (He for hidden layers), zero biases; the
/// output layer is scaled by `output_gain`.
std::vector<double> init_mlp(const MlpArch& arch, std::uint64_t seed, double output_gain);

}  // namespace avatar
