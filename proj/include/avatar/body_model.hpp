#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

namespace avatar {

inline constexpr int kShapeDims = 10;
inline constexpr int kPoseDims = 72;
inline constexpr int kSmplVertices = 6890;
inline constexpr int kSmplJoints = 24;

/// Part ids shared by every model. 0 is reserved for "whole body" in
/// sampling and for background in segmentation maps.
enum BodyPart : int {
  kWholeBody = 0,
  kHead = 1,
  kTorso = 2,
  kLeftArm = 3,
  kRightArm = 4,
  kLeftLeg = 5,
  kRightLeg = 6,
};
inline constexpr int kSmplPartCount = 6;

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// SMPL-style skinned body. Immutable after construction + validate().
struct SkinnedBodyModel {
  Vertices template_vertices;      // N×3, meters
  Faces faces;                     // F×3
  Eigen::MatrixXd shape_dirs;      // 3N×10, row 3v+k is coordinate k of vertex v
  Eigen::MatrixXd pose_dirs;       // 3N×9(J-1)
  Eigen::MatrixXd joint_regressor; // J×N
  Eigen::MatrixXd skin_weights;    // N×J
  std::vector<int> part_labels;    // N, values in [1..K]
  std::vector<int> parents;        // J, -1 for the root; parent index < child index

  int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_parts() const;
};

/// Throws AssetError("invalid model data: ...") naming the violated statistic.
void validate(const SkinnedBodyModel& model);

struct BodyShapeParams {
  Eigen::Matrix<double, kShapeDims, 1> beta = Eigen::Matrix<double, kShapeDims, 1>::Zero();
};

/// 24 axis-angle rotations, root first. Models with fewer joints read the
/// leading 3·J entries.
struct PoseParams {
  Eigen::Matrix<double, kPoseDims, 1> theta = Eigen::Matrix<double, kPoseDims, 1>::Zero();
};

struct PosedMesh {
  Vertices vertices;
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> joints;
  std::vector<int> part_labels;
};

/// Posed joint locations and accumulated (world) joint rotations.
struct PoseCondition {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> joints;
  std::vector<Eigen::Matrix3d> rotations;
};

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle);

PosedMesh forward(const SkinnedBodyModel& model, const BodyShapeParams& shape, const PoseParams& pose,
                  const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

PoseCondition pose_condition(const SkinnedBodyModel& model, const BodyShapeParams& shape, const PoseParams& pose,
                             const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

/// template + shape_dirs·β, the canonical (rest) surface.
Vertices shaped_rest_vertices(const SkinnedBodyModel& model, const BodyShapeParams& shape);

/// Kinematic parents of the standard 24-joint SMPL skeleton.
const std::array<int, kSmplJoints>& smpl_parents();

/// Joint → part table for the 24-joint skeleton:
/// head {neck, head}; torso {pelvis, spine1-3, collars};
/// left/right arm {shoulder, elbow, wrist, hand}; left/right leg {hip, knee, ankle, foot}.
const std::array<int, kSmplJoints>& smpl_joint_parts();

/// Per-vertex part = joint_parts[argmax_j skin_weights(v, j)].
std::vector<int> derive_part_labels(const Eigen::MatrixXd& skin_weights, const std::vector<int>& joint_parts);

/// Vertical chain of rigid capsule segments, one per joint, each 0.5 m long
/// with 0.15 m radius, standing on the origin along +y. The top segment is
/// labelled kHead and the rest kTorso. Skin weights are one-hot per segment;
/// pose blend shapes are zero; shape direction 0 inflates the radius.
SkinnedBodyModel make_capsule_fixture(int joints, int verts_per_segment);

/// Full-size (6890 vertex, 24 joint) procedural body used where SMPL assets
/// are unavailable. Geometry is a crude stick figure; only the array layout
/// and invariants match the real archive.
SkinnedBodyModel make_smpl_layout_fixture();

}  // namespace avatar
