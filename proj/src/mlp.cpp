#include "avatar/mlp.hpp"

#include "avatar/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avatar {

int MlpArch::layer_in(int l) const {
  if (l == 0) return input_dim;
  if (l == skip && l < depth) return width + input_dim;
  return width;
}

double squareplus(double z) {
  const double r = std::sqrt(z * z + 1.0);
  // (r + z)(r - z) = 1 avoids cancellation for negative z
  return z >= 0.0 ? 0.5 * (z + r) : 0.5 / (r - z);
}

double squareplus_grad(double z) {
  const double r = std::sqrt(z * z + 1.0);
  return z >= 0.0 ? 0.5 * (1.0 + z / r) : 0.5 / (r * (r - z));
}

std::size_t param_count(const MlpArch& arch) { return weight_offset(arch, arch.layer_count()); }

std::size_t weight_offset(const MlpArch& arch, int layer) {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(arch.layer_in(l)) * arch.layer_out(l) + arch.layer_out(l);
  }
  return off;
}

MlpWorkspace::MlpWorkspace(const MlpArch& arch) {
  if (arch.depth < 1) throw std::invalid_argument("mlp depth must be at least 1");
  std::size_t in_total = 0;
  std::size_t out_total = 0;
  int widest = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    in_dim_.push_back(arch.layer_in(l));
    out_dim_.push_back(arch.layer_out(l));
    in_off_.push_back(in_total);
    out_off_.push_back(out_total);
    in_total += arch.layer_in(l);
    out_total += arch.layer_out(l);
    widest = std::max({widest, arch.layer_in(l), arch.layer_out(l)});
  }
  inputs_.assign(in_total, 0.0);
  pre_.assign(out_total, 0.0);
  scratch_a_.assign(widest, 0.0);
  scratch_b_.assign(widest, 0.0);
}

int mlp_forward(const MlpArch& arch, std::span<const double> params, std::span<const double> input,
                std::span<double> output, MlpWorkspace& ws) {
  std::copy(input.begin(), input.end(), ws.layer_input(0).begin());
  int bad_layer = -1;
  const double* p = params.data();
  for (int l = 0; l <= arch.depth; ++l) {
    const int in = arch.layer_in(l);
    const int out = arch.layer_out(l);
    const double* w = p;
    const double* b = p + static_cast<std::size_t>(in) * out;
    p = b + out;
    const double* x = ws.layer_input(l).data();
    double* z = ws.pre(l).data();
    // Four rows at a time gives independent accumulation chains; each
    // output keeps its own left-to-right order.
    int o = 0;
    for (; o + 4 <= out; o += 4) {
      const double* r0 = w + static_cast<std::size_t>(o) * in;
      const double* r1 = r0 + in;
      const double* r2 = r1 + in;
      const double* r3 = r2 + in;
      double a0 = b[o], a1 = b[o + 1], a2 = b[o + 2], a3 = b[o + 3];
      for (int i = 0; i < in; ++i) {
        const double xi = x[i];
        a0 += r0[i] * xi;
        a1 += r1[i] * xi;
        a2 += r2[i] * xi;
        a3 += r3[i] * xi;
      }
      z[o] = a0;
      z[o + 1] = a1;
      z[o + 2] = a2;
      z[o + 3] = a3;
    }
    for (; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
    if (bad_layer < 0) {
      for (int o = 0; o < out; ++o) {
        if (!std::isfinite(z[o])) {
          bad_layer = l;
          break;
        }
      }
    }
    if (l < arch.depth) {
      double* next = ws.layer_input(l + 1).data();
      for (int o = 0; o < out; ++o) next[o] = squareplus(z[o]);
      if (l + 1 == arch.skip) std::copy(input.begin(), input.end(), next + out);
    } else {
      std::copy(z, z + out, output.begin());
    }
  }
  return bad_layer;
}

void mlp_backward(const MlpArch& arch, std::span<const double> params, MlpWorkspace& ws,
                  std::span<const double> grad_output, std::span<double> grad_params, std::span<double> grad_input) {
  std::vector<double>& gz = ws.scratch_a();
  std::vector<double>& gx = ws.scratch_b();
  std::copy(grad_output.begin(), grad_output.end(), gz.begin());
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (int l = arch.depth; l >= 0; --l) {
    const int in = arch.layer_in(l);
    const int out = arch.layer_out(l);
    const std::size_t off = weight_offset(arch, l);
    const double* w = params.data() + off;
    double* gw = grad_params.data() + off;
    double* gb = gw + static_cast<std::size_t>(in) * out;
    const double* x = ws.layer_input(l).data();
    if (l < arch.depth) {
      const double* z = ws.pre(l).data();
      for (int o = 0; o < out; ++o) gz[o] *= squareplus_grad(z[o]);
    }
    const bool need_gx = l > 0 || !grad_input.empty();
    std::fill(gx.begin(), gx.begin() + in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double g = gz[o];
      if (g == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in;
      double* grow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) grow[i] += g * x[i];
      if (need_gx) {
        for (int i = 0; i < in; ++i) gx[i] += g * row[i];
      }
      gb[o] += g;
    }
    if (l == 0) {
      if (!grad_input.empty()) {
        for (int i = 0; i < in; ++i) grad_input[i] += gx[i];
      }
    } else {
      if (l == arch.skip && !grad_input.empty()) {
        for (int i = 0; i < arch.input_dim; ++i) grad_input[i] += gx[arch.width + i];
      }
      std::copy(gx.begin(), gx.begin() + arch.width, gz.begin());
    }
  }
}

std::vector<double> init_mlp(const MlpArch& arch, std::uint64_t seed, double output_gain) {
  std::vector<double> params(param_count(arch), 0.0);
  Rng rng(seed);
  for (int l = 0; l <= arch.depth; ++l) {
    const int in = arch.layer_in(l);
    const int out = arch.layer_out(l);
    const double bound = (l < arch.depth ? std::sqrt(6.0 / in) : std::sqrt(3.0 / in) * output_gain);
    double* w = params.data() + weight_offset(arch, l);
    for (std::size_t k = 0; k < static_cast<std::size_t>(in) * out; ++k) w[k] = uniform(rng, -bound, bound);
  }
  return params;
}

}  // namespace avatar
