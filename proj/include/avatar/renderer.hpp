#pragma once

#include "avatar/cameras.hpp"
#include "avatar/image.hpp"
#include "avatar/motion_field.hpp"
#include "avatar/neural_field.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace avatar {

enum class BoundsPolicy {
  kFixed,    // [t_near, t_far] from the settings
  kBodyBox,  // posed-vertex AABB dilated by box_margin; rays that miss it see only background
};

struct RenderSettings {
  int samples_per_ray = 64;
  BoundsPolicy bounds = BoundsPolicy::kBodyBox;
  double t_near = 0.0;
  double t_far = 6.0;
  double box_margin = 0.15;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  bool stratified = false;
  std::uint64_t seed = 0;
  // Jitter is counter-based on (seed, stream, ray, sample); training passes the iteration here.
  std::uint64_t stream = 0;
};

/// Throws std::invalid_argument when samples_per_ray < 2 or the fixed bounds are inverted.
void validate(const RenderSettings& settings);

struct RayResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double alpha = 0.0;
};

/// Front-to-back alpha compositing of discrete samples.
RayResult composite(std::span<const double> sigma, std::span<const Eigen::Vector3d> color,
                    std::span<const double> delta, const Eigen::Vector3d& background);

/// Sample depths in [ray.t_near, ray.t_far]: bin midpoints, or one uniform
/// draw per bin when stratified. Every bin has the same width.
std::vector<double> sample_depths(const Ray& ray, const RenderSettings& settings, std::uint64_t ray_id);

RayResult render_ray(const RadianceFn& radiance, const Ray& ray, const RenderSettings& settings,
                     std::uint64_t ray_id = 0);

/// Ray parameter interval inside an axis-aligned box, clipped to t >= 0.
std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, const Eigen::Vector3d& lo,
                                                     const Eigen::Vector3d& hi);

struct RenderOutput {
  ImageBuffer image;
  AlphaMap alpha;
};

RenderOutput render_image(const FieldParams& field, const WarpField& warp, const PoseCondition& pose,
                          const Camera& camera, const RenderSettings& settings);

/// render_image under part_patch_camera(camera, bbox, patch).
ImageBuffer render_patch(const FieldParams& field, const WarpField& warp, const PoseCondition& pose,
                         const Camera& camera, const PixelRect& bbox, int patch, const RenderSettings& settings);

/// Forward render that keeps what backward() needs. backward() recomputes
/// per-sample activations rather than storing them.
class RenderTape {
 public:
  RenderTape(const FieldParams& field, const WarpField& warp, const PoseCondition& pose, const Camera& camera,
             const RenderSettings& settings);

  const ImageBuffer& image() const { return out_.image; }
  const AlphaMap& alpha() const { return out_.alpha; }
  RenderOutput& output() { return out_; }

  /// Accumulates dL/d(field params) and, when the warp has a residual,
  /// dL/d(residual params). Either alpha gradient may be empty.
  void backward(const ImageBuffer& grad_image, const AlphaMap& grad_alpha, std::span<double> grad_field,
                std::span<double> grad_residual) const;

 private:
  struct RaySpan {
    std::size_t first = 0;
    int count = 0;
    double delta = 0.0;
  };

  const FieldParams* field_;
  const WarpField* warp_;
  PosedWarp posed_;
  Eigen::Vector3d background_;
  RenderOutput out_;
  std::vector<RaySpan> rays_;
  std::vector<Eigen::Vector3d> skeletal_;  // per sample, warp without residual
  std::vector<Eigen::Vector3d> color_;
  std::vector<double> sigma_;
};

}  // namespace avatar
