#pragma once

// Finite-difference harness for loss gradients through the renderer: an 8×8
// view of the bent capsule rendered from a 2×16 field, differentiated with
// respect to every field parameter.

#include "avatar/body_model.hpp"
#include "avatar/cameras.hpp"
#include "avatar/losses.hpp"
#include "avatar/motion_field.hpp"
#include "avatar/neural_field.hpp"
#include "avatar/renderer.hpp"
#include "avatar/semantic_embedder.hpp"
#include "support.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace avatar::test {

struct GradScene {
  std::shared_ptr<const SkinnedBodyModel> model;
  WarpField warp;
  PoseCondition pose;
  Camera camera;
  RenderSettings settings;
  FieldParams field;
  SilhouetteMask mask;
  ImageBuffer target;
};

inline GradScene make_grad_scene(std::uint64_t seed = 1, bool use_residual = false) {
  GradScene s;
  s.model = std::make_shared<const SkinnedBodyModel>(make_capsule_fixture(2, 100));
  s.warp = make_warp_field(s.model, {}, 8, use_residual, seed);
  PoseParams p;
  p.theta[5] = 30.0 * std::numbers::pi / 180.0;
  s.pose = pose_condition(*s.model, {}, p);
  s.camera = look_at_camera({0.0, 0.5, 0.0}, 3.0, 0.0, 20.0, 150.0 * 8.0 / 64.0, 8, 8);
  s.settings.samples_per_ray = 16;
  s.settings.background = {0.2, 0.1, 0.3};
  s.field = init_field({4, 16, 2, -1}, seed);
  // denser start so both color and alpha carry signal
  const MlpArch m = s.field.arch.mlp();
  const std::size_t bias = weight_offset(m, m.depth) + static_cast<std::size_t>(m.layer_in(m.depth)) * m.output_dim;
  s.field.values[bias + 3] = std::log(std::expm1(3.0));
  // A solid block rather than the two-pixel-wide body silhouette, so the
  // chamfer term sees interior pixels at distances 1 and 2.
  s.mask = SilhouetteMask(8, 8);
  for (int y = 1; y < 7; ++y) {
    for (int x = 1; x < 7; ++x) s.mask(x, y) = 1;
  }
  Rng rng(seed + 100);
  s.target = random_image(8, 8, rng);
  return s;
}

/// Scalar loss of a rendered view; fills d/d(image) and d/d(alpha) when the
/// pointers are non-null.
using ViewLoss = std::function<double(const RenderOutput& out, ImageBuffer* grad_image, AlphaMap* grad_alpha)>;

inline double view_loss_value(const GradScene& s, const FieldParams& field, const ViewLoss& loss) {
  const RenderOutput out = render_image(field, s.warp, s.pose, s.camera, s.settings);
  return loss(out, nullptr, nullptr);
}

inline std::vector<double> view_loss_gradient(const GradScene& s, const ViewLoss& loss) {
  RenderTape tape(s.field, s.warp, s.pose, s.camera, s.settings);
  ImageBuffer gi(8, 8);
  AlphaMap ga(8, 8, 0.0);
  loss(tape.output(), &gi, &ga);
  std::vector<double> grad(s.field.values.size(), 0.0);
  tape.backward(gi, ga, grad, {});
  return grad;
}

inline std::vector<double> view_loss_numeric(const GradScene& s, const ViewLoss& loss, double step) {
  FieldParams probe = s.field;
  return central_difference(
      s.field.values,
      [&](std::span<const double> v) {
        probe.values.assign(v.begin(), v.end());
        return view_loss_value(s, probe, loss);
      },
      step);
}

struct GradCheck {
  double max_rel = 0.0;
  double max_abs_grad = 0.0;
};

/// Relative error per coordinate, |a − n| / max(|a|, |n|, floor), with the
/// floor a fixed fraction of the largest gradient entry so coordinates that
/// are numerically zero do not divide by zero.
inline GradCheck check_view_loss(const GradScene& s, const ViewLoss& loss, double step = 1e-4) {
  const std::vector<double> a = view_loss_gradient(s, loss);
  const std::vector<double> n = view_loss_numeric(s, loss, step);
  GradCheck r;
  for (double v : n) r.max_abs_grad = std::max(r.max_abs_grad, std::abs(v));
  r.max_rel = max_rel_error(a, n, 1e-12 * r.max_abs_grad);
  return r;
}

inline ViewLoss reconstruction_view_loss(const ImageBuffer& target, std::shared_ptr<PerceptualMetric> metric) {
  return [target, metric](const RenderOutput& out, ImageBuffer* gi, AlphaMap*) {
    return reconstruction_loss(out.image, target, *metric, 1.0, gi).total;
  };
}

inline ViewLoss semantic_view_loss(std::shared_ptr<Embedder> embedder, const Embedding& reference) {
  return [embedder, reference](const RenderOutput& out, ImageBuffer* gi, AlphaMap*) {
    return semantic_loss(*embedder, out.image, reference, gi);
  };
}

inline ViewLoss silhouette_view_loss(const SilhouetteMask& mask, SilhouetteOptions opts) {
  return [mask, opts](const RenderOutput& out, ImageBuffer*, AlphaMap* ga) {
    const SilhouetteTerms t = silhouette_loss(out.alpha, mask, opts);
    if (ga) *ga = silhouette_gradient(out.alpha, mask, opts, 1.0, 1.0);
    return t.mse + t.chamfer + t.outside;
  };
}

inline ViewLoss pixel_mse_view_loss(const ImageBuffer& target) {
  return [target](const RenderOutput& out, ImageBuffer* gi, AlphaMap*) {
    NullPerceptual none;
    return reconstruction_loss(out.image, target, none, 1.0, gi).total;
  };
}

}  // namespace avatar::test
