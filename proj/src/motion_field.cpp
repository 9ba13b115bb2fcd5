#include "avatar/motion_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avatar {
namespace {

constexpr int kMaxNeighbors = 64;

// Inverse-distance weights taken relative to the (K+1)-th neighbor, so a
// vertex entering or leaving the neighbor set does so with zero weight and
// the blend stays continuous in x.
void blend(const SkinnedBodyModel& model, const double* dist, const int* index, int found, int knn,
           double fallback, double* w) {
  const int nj = model.num_joints();
  std::fill(w, w + nj, 0.0);
  if (found == 0 || dist[0] > fallback) {
    w[0] = 1.0;
    return;
  }
  if (dist[0] < 1e-12) {
    for (int j = 0; j < nj; ++j) w[j] = model.skin_weights(index[0], j);
    return;
  }
  double a[kMaxNeighbors];
  const int used = std::min(found, knn);
  double total = 0.0;
  if (found > knn) {
    const double cutoff = 1.0 / dist[knn];
    for (int i = 0; i < used; ++i) {
      a[i] = std::max(0.0, 1.0 / dist[i] - cutoff);
      total += a[i];
    }
  }
  if (!(total > 0.0)) {
    total = 0.0;
    for (int i = 0; i < used; ++i) {
      a[i] = 1.0 / dist[i];
      total += a[i];
    }
  }
  for (int i = 0; i < used; ++i) {
    const double k = a[i] / total;
    if (k == 0.0) continue;
    for (int j = 0; j < nj; ++j) w[j] += k * model.skin_weights(index[i], j);
  }
}

}  // namespace

WarpField make_warp_field(std::shared_ptr<const SkinnedBodyModel> model, const BodyShapeParams& shape, int knn,
                          bool use_residual, std::uint64_t seed) {
  if (!model) throw std::invalid_argument("warp field needs a body model");
  if (knn < 1 || knn + 1 > kMaxNeighbors) throw std::invalid_argument("knn must be in [1, 63]");
  WarpField f;
  f.model = model;
  f.shape = shape;
  f.canonical = pose_condition(*model, shape, PoseParams{});
  f.canonical_vertices = shaped_rest_vertices(*model, shape);
  f.knn = knn;
  f.use_residual = use_residual;
  if (use_residual) {
    const MlpArch arch = f.residual_arch.mlp(model->num_joints());
    f.residual_params = init_mlp(arch, seed ^ 0x5eedULL, 0.0);
  }
  return f;
}

std::vector<double> pose_feature(const PoseCondition& p) {
  std::vector<double> f;
  f.reserve(9 * p.rotations.size());
  for (const Eigen::Matrix3d& r : p.rotations) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) f.push_back(r(a, b) - (a == b ? 1.0 : 0.0));
    }
  }
  return f;
}

PosedWarp::PosedWarp(const WarpField& field, const PoseCondition& pose)
    : field_(&field), pose_(pose), feature_(pose_feature(pose)) {
  const SkinnedBodyModel& model = *field.model;
  const int nj = model.num_joints();
  if (static_cast<int>(pose.rotations.size()) != nj || pose.joints.rows() != nj) {
    throw std::invalid_argument("pose condition does not match the body model");
  }
  inv_rot_.resize(nj);
  std::vector<Eigen::Vector3d> shift(nj);
  for (int j = 0; j < nj; ++j) {
    inv_rot_[j] = pose.rotations[j].transpose();
    shift[j] = pose.joints.row(j).transpose() - pose.rotations[j] * field.canonical.joints.row(j).transpose();
  }
  const int n = model.num_vertices();
  posed_.resize(n, 3);
  for (int v = 0; v < n; ++v) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    const Eigen::Vector3d xc = field.canonical_vertices.row(v).transpose();
    for (int j = 0; j < nj; ++j) {
      const double w = model.skin_weights(v, j);
      if (w != 0.0) acc += w * (pose.rotations[j] * xc + shift[j]);
    }
    posed_.row(v) = acc.transpose();
  }
  lo_ = posed_.colwise().minCoeff().transpose();
  hi_ = posed_.colwise().maxCoeff().transpose();
  const Eigen::Vector3d extent = hi_ - lo_;
  const double per_axis = std::max(1.0, std::round(std::cbrt(static_cast<double>(n))));
  cell_ = std::max(1e-3, extent.maxCoeff() / per_axis);
  for (int a = 0; a < 3; ++a) dims_[a] = static_cast<int>(std::floor(extent[a] / cell_)) + 1;
  const int cells = dims_.prod();
  std::vector<int> cell_of(n);
  cell_start_.assign(cells + 1, 0);
  for (int v = 0; v < n; ++v) {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) c[a] = std::min(dims_[a] - 1, static_cast<int>((posed_(v, a) - lo_[a]) / cell_));
    cell_of[v] = (c.z() * dims_.y() + c.y()) * dims_.x() + c.x();
    ++cell_start_[cell_of[v] + 1];
  }
  for (int c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_items_.assign(n, 0);
  std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (int v = 0; v < n; ++v) cell_items_[fill[cell_of[v]]++] = v;
}

int PosedWarp::nearest(const Eigen::Vector3d& x, int k, Neighbor* out) const {
  int found = 0;
  Eigen::Vector3i q;
  for (int a = 0; a < 3; ++a) q[a] = static_cast<int>(std::floor((x[a] - lo_[a]) / cell_));
  int r_max = 0;
  for (int a = 0; a < 3; ++a) r_max = std::max({r_max, std::abs(q[a]), std::abs(dims_[a] - 1 - q[a])});
  auto consider = [&](int v) {
    const double d2 = (posed_.row(v).transpose() - x).squaredNorm();
    if (found == k && (d2 > out[k - 1].dist2 || (d2 == out[k - 1].dist2 && v > out[k - 1].index))) return;
    int pos = found < k ? found++ : k - 1;
    while (pos > 0 && (out[pos - 1].dist2 > d2 || (out[pos - 1].dist2 == d2 && out[pos - 1].index > v))) {
      out[pos] = out[pos - 1];
      --pos;
    }
    out[pos] = {d2, v};
  };
  for (int r = 0; r <= r_max; ++r) {
    const int z0 = std::max(0, q.z() - r), z1 = std::min(dims_.z() - 1, q.z() + r);
    const int y0 = std::max(0, q.y() - r), y1 = std::min(dims_.y() - 1, q.y() + r);
    const int x0 = std::max(0, q.x() - r), x1 = std::min(dims_.x() - 1, q.x() + r);
    for (int cz = z0; cz <= z1; ++cz) {
      const bool z_edge = std::abs(cz - q.z()) == r;
      for (int cy = y0; cy <= y1; ++cy) {
        const bool yz_edge = z_edge || std::abs(cy - q.y()) == r;
        for (int cx = x0; cx <= x1; ++cx) {
          if (!yz_edge && std::abs(cx - q.x()) != r) {
            // interior of the ring cube; jump to the far face
            if (cx < q.x() + r && q.x() + r <= x1) cx = q.x() + r - 1;
            continue;
          }
          const int c = (cz * dims_.y() + cy) * dims_.x() + cx;
          for (int i = cell_start_[c]; i < cell_start_[c + 1]; ++i) consider(cell_items_[i]);
        }
      }
    }
    if (found == k) {
      const double covered = r * cell_;
      if (out[k - 1].dist2 <= covered * covered) break;
    }
  }
  return found;
}

Eigen::VectorXd PosedWarp::blend_weights(const Eigen::Vector3d& x) const {
  const SkinnedBodyModel& model = *field_->model;
  const int k = std::min(field_->knn + 1, model.num_vertices());
  Neighbor nb[kMaxNeighbors];
  const int found = nearest(x, k, nb);
  double dist[kMaxNeighbors];
  int index[kMaxNeighbors];
  for (int i = 0; i < found; ++i) {
    dist[i] = std::sqrt(nb[i].dist2);
    index[i] = nb[i].index;
  }
  Eigen::VectorXd w(model.num_joints());
  blend(model, dist, index, found, field_->knn, field_->fallback_distance, w.data());
  return w;
}

Eigen::Vector3d PosedWarp::skeletal_warp(const Eigen::Vector3d& x) const {
  const SkinnedBodyModel& model = *field_->model;
  const int k = std::min(field_->knn + 1, model.num_vertices());
  Neighbor nb[kMaxNeighbors];
  const int found = nearest(x, k, nb);
  double dist[kMaxNeighbors];
  int index[kMaxNeighbors];
  for (int i = 0; i < found; ++i) {
    dist[i] = std::sqrt(nb[i].dist2);
    index[i] = nb[i].index;
  }
  double w[kSmplJoints];
  blend(model, dist, index, found, field_->knn, field_->fallback_distance, w);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int j = 0; j < model.num_joints(); ++j) {
    if (w[j] == 0.0) continue;
    out += w[j] * (inv_rot_[j] * (x - pose_.joints.row(j).transpose()) + field_->canonical.joints.row(j).transpose());
  }
  return out;
}

Eigen::Vector3d PosedWarp::warp(const Eigen::Vector3d& x) const {
  const Eigen::Vector3d xs = skeletal_warp(x);
  if (!field_->use_residual) return xs;
  ResidualEvaluator ev(*field_);
  return xs + ev.forward(xs, feature_);
}

ResidualEvaluator::ResidualEvaluator(const WarpField& field)
    : field_(&field),
      mlp_(field.residual_arch.mlp(field.model->num_joints())),
      ws_(mlp_),
      input_(mlp_.input_dim) {}

Eigen::Vector3d ResidualEvaluator::forward(const Eigen::Vector3d& xs, std::span<const double> feature) {
  const int enc = 3 + 6 * field_->residual_arch.num_freqs;
  encode_into(xs, field_->residual_arch.num_freqs, std::span<double>(input_.data(), enc));
  std::copy(feature.begin(), feature.end(), input_.begin() + enc);
  double out[3];
  mlp_forward(mlp_, field_->residual_params, input_, out, ws_);
  return {out[0], out[1], out[2]};
}

void ResidualEvaluator::backward(const Eigen::Vector3d& grad_out, std::span<double> grad_params) {
  const double g[3] = {grad_out.x(), grad_out.y(), grad_out.z()};
  mlp_backward(mlp_, field_->residual_params, ws_, g, grad_params, {});
}

Eigen::Vector3d warp(const WarpField& field, const Eigen::Vector3d& x_observed, const PoseCondition& p) {
  return PosedWarp(field, p).warp(x_observed);
}

RadianceFn composed_field(const FieldParams& field_params, const WarpField& warp_field, const PoseCondition& p) {
  auto posed = std::make_shared<PosedWarp>(warp_field, p);
  auto ev = std::make_shared<FieldEvaluator>(field_params);
  return [posed, ev](const Eigen::Vector3d& x) { return ev->forward(posed->warp(x)); };
}

}  // namespace avatar
