#include "avatar/body_model.hpp"

#include "avatar/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace avatar {
namespace {

std::string describe(const char* what, int index, double value) {
  std::ostringstream os;
  os.precision(17);
  os << "invalid model data: " << what << " at index " << index << " (value " << value << ")";
  return os.str();
}

struct Skeleton {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> rest_joints;
  std::vector<Eigen::Matrix3d> local;
  std::vector<Eigen::Matrix3d> global_rot;
  std::vector<Eigen::Vector3d> global_trans;  // posed joint location (before root translation)
};

Skeleton solve_skeleton(const SkinnedBodyModel& model, const Vertices& shaped, const PoseParams& pose) {
  const int nj = model.num_joints();
  if (nj > kSmplJoints) throw std::invalid_argument("pose vector supports at most 24 joints");
  Skeleton s;
  s.rest_joints = model.joint_regressor * shaped;
  s.local.resize(nj);
  s.global_rot.resize(nj);
  s.global_trans.resize(nj);
  for (int j = 0; j < nj; ++j) {
    s.local[j] = rodrigues(pose.theta.segment<3>(3 * j));
    const Eigen::Vector3d jr = s.rest_joints.row(j).transpose();
    const int p = model.parents[j];
    if (p < 0) {
      s.global_rot[j] = s.local[j];
      s.global_trans[j] = jr;
    } else {
      const Eigen::Vector3d offset = jr - s.rest_joints.row(p).transpose();
      s.global_rot[j] = s.global_rot[p] * s.local[j];
      s.global_trans[j] = s.global_rot[p] * offset + s.global_trans[p];
    }
  }
  return s;
}

void check_dims(const SkinnedBodyModel& model) {
  if (model.num_joints() < 1 || model.num_joints() > kSmplJoints) {
    throw std::invalid_argument("model joint count outside [1, 24]");
  }
}

}  // namespace

int SkinnedBodyModel::num_parts() const {
  return part_labels.empty() ? 0 : *std::max_element(part_labels.begin(), part_labels.end());
}

void validate(const SkinnedBodyModel& m) {
  const int n = m.num_vertices();
  const int nj = m.num_joints();
  if (n < 1) throw AssetError("invalid model data: no vertices");
  if (nj < 1) throw AssetError("invalid model data: no joints");
  if (nj > kSmplJoints) throw AssetError(describe("joint count exceeds 24", 0, nj));
  if (!m.template_vertices.allFinite()) throw AssetError("invalid model data: non-finite template vertex");
  if (m.shape_dirs.rows() != 3 * n || m.shape_dirs.cols() != kShapeDims) {
    throw AssetError("invalid model data: shapedirs shape mismatch");
  }
  if (m.pose_dirs.rows() != 3 * n || m.pose_dirs.cols() != 9 * (nj - 1)) {
    throw AssetError("invalid model data: posedirs shape mismatch");
  }
  if (m.joint_regressor.rows() != nj || m.joint_regressor.cols() != n) {
    throw AssetError("invalid model data: J_regressor shape mismatch");
  }
  if (m.skin_weights.rows() != n || m.skin_weights.cols() != nj) {
    throw AssetError("invalid model data: weights shape mismatch");
  }
  if (static_cast<int>(m.part_labels.size()) != n) throw AssetError("invalid model data: part_labels length");
  for (int v = 0; v < n; ++v) {
    const auto row = m.skin_weights.row(v);
    if (row.minCoeff() < 0.0) throw AssetError(describe("negative skinning weight", v, row.minCoeff()));
    const double sum = row.sum();
    if (!(std::abs(sum - 1.0) <= 1e-6)) throw AssetError(describe("skinning weight row sum", v, sum));
    if (m.part_labels[v] < 1) throw AssetError(describe("part label below 1", v, m.part_labels[v]));
  }
  for (int j = 0; j < nj; ++j) {
    const double sum = m.joint_regressor.row(j).sum();
    if (!(std::abs(sum - 1.0) <= 1e-4)) throw AssetError(describe("joint regressor row sum", j, sum));
  }
  for (int f = 0; f < m.faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (m.faces(f, k) < 0 || m.faces(f, k) >= n) throw AssetError(describe("face index", f, m.faces(f, k)));
    }
  }
  int roots = 0;
  for (int j = 0; j < nj; ++j) {
    const int p = m.parents[j];
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= j) {
      throw AssetError(describe("kinematic parent not preceding child", j, p));
    }
  }
  if (roots != 1 || m.parents[0] != -1) throw AssetError(describe("kinematic root count", 0, roots));
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-12) {
    // first-order expansion keeps tiny rotations orthonormal to machine precision
    Eigen::Matrix3d k;
    k << 0, -axis_angle.z(), axis_angle.y(), axis_angle.z(), 0, -axis_angle.x(), -axis_angle.y(), axis_angle.x(), 0;
    return Eigen::Matrix3d::Identity() + k;
  }
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vertices shaped_rest_vertices(const SkinnedBodyModel& model, const BodyShapeParams& shape) {
  const Eigen::VectorXd offsets = model.shape_dirs * shape.beta;
  Vertices out = model.template_vertices;
  for (int v = 0; v < out.rows(); ++v) {
    out(v, 0) += offsets(3 * v);
    out(v, 1) += offsets(3 * v + 1);
    out(v, 2) += offsets(3 * v + 2);
  }
  return out;
}

PosedMesh forward(const SkinnedBodyModel& model, const BodyShapeParams& shape, const PoseParams& pose,
                  const Eigen::Vector3d& translation) {
  check_dims(model);
  const int n = model.num_vertices();
  const int nj = model.num_joints();
  const Vertices shaped = shaped_rest_vertices(model, shape);
  const Skeleton s = solve_skeleton(model, shaped, pose);

  Vertices posed_rest = shaped;
  if (nj > 1 && model.pose_dirs.size() > 0) {
    Eigen::VectorXd feature(9 * (nj - 1));
    for (int j = 1; j < nj; ++j) {
      const Eigen::Matrix3d d = s.local[j] - Eigen::Matrix3d::Identity();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) feature(9 * (j - 1) + 3 * r + c) = d(r, c);
      }
    }
    if (!feature.isZero(0.0)) {
      const Eigen::VectorXd offsets = model.pose_dirs * feature;
      for (int v = 0; v < n; ++v) {
        posed_rest(v, 0) += offsets(3 * v);
        posed_rest(v, 1) += offsets(3 * v + 1);
        posed_rest(v, 2) += offsets(3 * v + 2);
      }
    }
  }

  // Skinning transform of joint j maps rest space to posed space:
  // x -> R_j (x - J_j) + G_j.
  std::vector<Eigen::Vector3d> shift(nj);
  for (int j = 0; j < nj; ++j) {
    shift[j] = s.global_trans[j] - s.global_rot[j] * s.rest_joints.row(j).transpose();
  }

  PosedMesh mesh;
  mesh.vertices.resize(n, 3);
  for (int v = 0; v < n; ++v) {
    Eigen::Matrix3d rot = Eigen::Matrix3d::Zero();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    for (int j = 0; j < nj; ++j) {
      const double w = model.skin_weights(v, j);
      if (w == 0.0) continue;
      rot += w * s.global_rot[j];
      t += w * shift[j];
    }
    mesh.vertices.row(v) = (rot * posed_rest.row(v).transpose() + t + translation).transpose();
  }
  mesh.joints.resize(nj, 3);
  for (int j = 0; j < nj; ++j) mesh.joints.row(j) = (s.global_trans[j] + translation).transpose();
  mesh.part_labels = model.part_labels;
  return mesh;
}

PoseCondition pose_condition(const SkinnedBodyModel& model, const BodyShapeParams& shape, const PoseParams& pose,
                             const Eigen::Vector3d& translation) {
  check_dims(model);
  const Vertices shaped = shaped_rest_vertices(model, shape);
  const Skeleton s = solve_skeleton(model, shaped, pose);
  PoseCondition pc;
  pc.joints.resize(model.num_joints(), 3);
  for (int j = 0; j < model.num_joints(); ++j) pc.joints.row(j) = (s.global_trans[j] + translation).transpose();
  pc.rotations = s.global_rot;
  return pc;
}

const std::array<int, kSmplJoints>& smpl_parents() {
  static const std::array<int, kSmplJoints> parents = {-1, 0,  0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                                       9,  9,  9,  12, 13, 14, 16, 17, 18, 19, 20, 21};
  return parents;
}

const std::array<int, kSmplJoints>& smpl_joint_parts() {
  static const std::array<int, kSmplJoints> parts = {
      kTorso,   kLeftLeg,  kRightLeg, kTorso,   kLeftLeg, kRightLeg, kTorso,   kLeftLeg,
      kRightLeg, kTorso,   kLeftLeg,  kRightLeg, kHead,   kTorso,    kTorso,   kHead,
      kLeftArm, kRightArm, kLeftArm,  kRightArm, kLeftArm, kRightArm, kLeftArm, kRightArm};
  return parts;
}

std::vector<int> derive_part_labels(const Eigen::MatrixXd& skin_weights, const std::vector<int>& joint_parts) {
  std::vector<int> labels(skin_weights.rows());
  for (Eigen::Index v = 0; v < skin_weights.rows(); ++v) {
    Eigen::Index best = 0;
    skin_weights.row(v).maxCoeff(&best);
    labels[v] = joint_parts.at(best);
  }
  return labels;
}

SkinnedBodyModel make_capsule_fixture(int joints, int verts_per_segment) {
  if (joints < 2) throw std::invalid_argument("capsule fixture needs at least 2 joints");
  if (verts_per_segment < 14) throw std::invalid_argument("capsule fixture needs at least 14 vertices per segment");
  constexpr double kRadius = 0.15;
  constexpr double kLength = 0.5;
  constexpr double kInflate = 0.02;

  int slices = 0;
  for (int s = 16; s >= 6; --s) {
    if ((verts_per_segment - 2) % s == 0 && (verts_per_segment - 2) / s >= 2) {
      slices = s;
      break;
    }
  }
  if (slices == 0) slices = 6;
  const int rings = (verts_per_segment - 2) / slices;
  const int leftover = verts_per_segment - 2 - rings * slices;

  const int n = joints * verts_per_segment;
  SkinnedBodyModel m;
  m.template_vertices.resize(n, 3);
  m.shape_dirs = Eigen::MatrixXd::Zero(3 * n, kShapeDims);
  m.pose_dirs = Eigen::MatrixXd::Zero(3 * n, 9 * (joints - 1));
  m.joint_regressor = Eigen::MatrixXd::Zero(joints, n);
  m.skin_weights = Eigen::MatrixXd::Zero(n, joints);
  m.part_labels.resize(n);
  m.parents.resize(joints);
  std::vector<Eigen::Vector3i> faces;

  for (int j = 0; j < joints; ++j) {
    m.parents[j] = j - 1;
    const int base = j * verts_per_segment;
    const double y0 = j * kLength;
    auto ring_vertex = [&](int r, int k) { return base + r * slices + k; };
    for (int r = 0; r < rings; ++r) {
      const double y = y0 + kLength * r / (rings - 1);
      for (int k = 0; k < slices; ++k) {
        const double a = 2.0 * std::numbers::pi * k / slices;
        const int v = ring_vertex(r, k);
        m.template_vertices.row(v) << kRadius * std::cos(a), y, kRadius * std::sin(a);
        m.shape_dirs(3 * v, 0) = kInflate * std::cos(a);
        m.shape_dirs(3 * v + 2, 0) = kInflate * std::sin(a);
        if (r == 0) m.joint_regressor(j, v) = 1.0 / slices;
      }
    }
    const int bottom = base + rings * slices;
    const int top = bottom + 1;
    m.template_vertices.row(bottom) << 0.0, y0, 0.0;
    m.template_vertices.row(top) << 0.0, y0 + kLength, 0.0;
    for (int e = 0; e < leftover; ++e) {
      m.template_vertices.row(top + 1 + e) << 0.0, y0 + kLength * (e + 1) / (leftover + 1), 0.0;
    }
    for (int v = base; v < base + verts_per_segment; ++v) {
      m.skin_weights(v, j) = 1.0;
      m.part_labels[v] = (j == joints - 1) ? kHead : kTorso;
    }
    for (int r = 0; r + 1 < rings; ++r) {
      for (int k = 0; k < slices; ++k) {
        const int k1 = (k + 1) % slices;
        faces.emplace_back(ring_vertex(r, k), ring_vertex(r + 1, k), ring_vertex(r + 1, k1));
        faces.emplace_back(ring_vertex(r, k), ring_vertex(r + 1, k1), ring_vertex(r, k1));
      }
    }
    for (int k = 0; k < slices; ++k) {
      const int k1 = (k + 1) % slices;
      faces.emplace_back(bottom, ring_vertex(0, k1), ring_vertex(0, k));
      faces.emplace_back(top, ring_vertex(rings - 1, k), ring_vertex(rings - 1, k1));
    }
  }
  m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f) m.faces.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();
  validate(m);
  return m;
}

SkinnedBodyModel make_smpl_layout_fixture() {
  // Rough T-pose joint layout in meters.
  static const double kJoints[kSmplJoints][3] = {
      {0, 0.9, 0},     {0.1, 0.8, 0},   {-0.1, 0.8, 0},  {0, 1.0, 0},    {0.1, 0.45, 0},  {-0.1, 0.45, 0},
      {0, 1.15, 0},    {0.1, 0.08, 0},  {-0.1, 0.08, 0}, {0, 1.25, 0},   {0.1, 0.02, 0.1}, {-0.1, 0.02, 0.1},
      {0, 1.45, 0},    {0.08, 1.38, 0}, {-0.08, 1.38, 0}, {0, 1.6, 0},   {0.2, 1.4, 0},   {-0.2, 1.4, 0},
      {0.45, 1.4, 0},  {-0.45, 1.4, 0}, {0.7, 1.4, 0},   {-0.7, 1.4, 0}, {0.8, 1.4, 0},   {-0.8, 1.4, 0}};
  const int n = kSmplVertices;
  const int nj = kSmplJoints;
  const int per = n / nj;
  SkinnedBodyModel m;
  m.template_vertices.resize(n, 3);
  m.shape_dirs = Eigen::MatrixXd::Zero(3 * n, kShapeDims);
  m.pose_dirs = Eigen::MatrixXd::Zero(3 * n, 9 * (nj - 1));
  m.joint_regressor = Eigen::MatrixXd::Zero(nj, n);
  m.skin_weights = Eigen::MatrixXd::Zero(n, nj);
  m.parents.assign(smpl_parents().begin(), smpl_parents().end());

  std::mt19937_64 rng(6890);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> owner(n);
  for (int v = 0; v < n; ++v) owner[v] = std::min(v / per, nj - 1);
  std::vector<int> counts(nj, 0);
  for (int v = 0; v < n; ++v) {
    const int j = owner[v];
    Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
    d = 0.05 * d.normalized();
    m.template_vertices.row(v) = Eigen::Vector3d(kJoints[j][0], kJoints[j][1], kJoints[j][2]).transpose() + d.transpose();
    m.skin_weights(v, j) = 1.0;
    ++counts[j];
    for (int k = 0; k < 3; ++k) m.shape_dirs(3 * v + k, 0) = d(k);
  }
  for (int v = 0; v < n; ++v) m.joint_regressor(owner[v], v) = 1.0 / counts[owner[v]];
  for (int r = 0; r < m.pose_dirs.rows(); ++r) {
    for (int c = 0; c < m.pose_dirs.cols(); ++c) m.pose_dirs(r, c) = 1e-3 * normal(rng);
  }
  m.faces.resize(n - 2, 3);
  for (int f = 0; f < n - 2; ++f) m.faces.row(f) << f, f + 1, f + 2;
  m.part_labels = derive_part_labels(m.skin_weights, {smpl_joint_parts().begin(), smpl_joint_parts().end()});
  validate(m);
  return m;
}

}  // namespace avatar
