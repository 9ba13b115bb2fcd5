#pragma once

#include "avatar/body_model.hpp"
#include "avatar/mlp.hpp"
#include "avatar/neural_field.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace avatar {

/// Non-rigid correction network on (encoded skeletal-warp point, pose feature).
struct ResidualArch {
  int num_freqs = 4;
  int width = 32;
  int depth = 2;

  MlpArch mlp(int joints) const { return {3 + 6 * num_freqs + 9 * joints, width, depth, -1, 3}; }
  friend bool operator==(const ResidualArch&, const ResidualArch&) = default;
};

/// Observed → canonical warp of a skinned body. Canonical space is the
/// shaped rest pose.
struct WarpField {
  std::shared_ptr<const SkinnedBodyModel> model;
  BodyShapeParams shape;
  PoseCondition canonical;
  Vertices canonical_vertices;
  int knn = 8;
  double fallback_distance = 1.0;
  bool use_residual = false;
  ResidualArch residual_arch;
  std::vector<double> residual_params;  // zero-initialized output layer

  std::size_t residual_size() const { return use_residual ? residual_params.size() : 0; }
};

WarpField make_warp_field(std::shared_ptr<const SkinnedBodyModel> model, const BodyShapeParams& shape, int knn = 8,
                          bool use_residual = false, std::uint64_t seed = 0);

/// vec(Ω_j − I) over all joints, the residual network's pose input.
std::vector<double> pose_feature(const PoseCondition& p);

/// Warp bound to one observed pose. Holds the posed vertices and a uniform
/// grid over them for nearest-neighbor queries; read-only once built.
class PosedWarp {
 public:
  PosedWarp(const WarpField& field, const PoseCondition& pose);

  const WarpField& field() const { return *field_; }
  const PoseCondition& pose() const { return pose_; }
  const Vertices& posed_vertices() const { return posed_; }
  /// Axis-aligned bounds of the posed vertices.
  Eigen::Vector3d bbox_min() const { return lo_; }
  Eigen::Vector3d bbox_max() const { return hi_; }

  /// Per-joint blend weights at an observed point.
  Eigen::VectorXd blend_weights(const Eigen::Vector3d& x) const;

  /// Skeletal inverse-skinning estimate (no residual).
  Eigen::Vector3d skeletal_warp(const Eigen::Vector3d& x) const;

  /// Full warp including the residual displacement.
  Eigen::Vector3d warp(const Eigen::Vector3d& x) const;

  std::span<const double> feature() const { return feature_; }

 private:
  struct Neighbor {
    double dist2;
    int index;
  };
  int nearest(const Eigen::Vector3d& x, int k, Neighbor* out) const;

  const WarpField* field_;
  PoseCondition pose_;
  Vertices posed_;
  std::vector<Eigen::Matrix3d> inv_rot_;
  Eigen::Vector3d lo_, hi_;
  double cell_ = 1.0;
  Eigen::Vector3i dims_;
  std::vector<int> cell_start_;
  std::vector<int> cell_items_;
  std::vector<double> feature_;
};

/// Residual evaluation with backpropagation to the residual parameters.
class ResidualEvaluator {
 public:
  explicit ResidualEvaluator(const WarpField& field);
  Eigen::Vector3d forward(const Eigen::Vector3d& x_skeletal, std::span<const double> pose_feature);
  void backward(const Eigen::Vector3d& grad_out, std::span<double> grad_params);

 private:
  const WarpField* field_;
  MlpArch mlp_;
  MlpWorkspace ws_;
  std::vector<double> input_;
};

Eigen::Vector3d warp(const WarpField& field, const Eigen::Vector3d& x_observed, const PoseCondition& p);

using RadianceFn = std::function<RadianceSample(const Eigen::Vector3d&)>;

/// F_o(x, p) = F_c(T(x, p)). The returned function keeps its own posed
/// state; the referenced params and field must outlive it.
RadianceFn composed_field(const FieldParams& field_params, const WarpField& warp_field, const PoseCondition& p);

}  // namespace avatar
