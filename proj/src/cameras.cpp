#include "avatar/cameras.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace avatar {

void validate(const Camera& c) {
  if (!(c.fx > 0.0) || !(c.fy > 0.0)) throw std::invalid_argument("camera focal lengths must be positive");
  if (c.width < 1 || c.height < 1) throw std::invalid_argument("camera image size must be positive");
  const double ortho = (c.R * c.R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-6) || !(std::abs(c.R.determinant() - 1.0) <= 1e-6)) {
    throw std::invalid_argument("camera rotation is not orthonormal with det 1");
  }
  if (!c.t.allFinite()) throw std::invalid_argument("camera translation is not finite");
}

Ray cast_ray(const Camera& c, const Eigen::Vector2d& px) {
  if (!(px.x() >= 0.0 && px.x() <= c.width && px.y() >= 0.0 && px.y() <= c.height)) {
    throw std::out_of_range("pixel outside the camera image");
  }
  const Eigen::Vector3d d_cam((px.x() - c.cx) / c.fx, (px.y() - c.cy) / c.fy, 1.0);
  Ray r;
  r.origin = c.center();
  r.direction = (c.R.transpose() * d_cam).normalized();
  r.t_near = 0.0;
  r.t_far = 1.0;
  return r;
}

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::kFront: return "front";
    case Orientation::kSideLeft: return "side_left";
    case Orientation::kSideRight: return "side_right";
    case Orientation::kRear: return "rear";
  }
  return "?";
}

bool is_side(Orientation o) { return o == Orientation::kSideLeft || o == Orientation::kSideRight; }

Orientation classify_yaw(double yaw_deg, const OrientationBins& bins) {
  const double a = std::abs(yaw_deg);
  if (a < bins.front_max_deg) return Orientation::kFront;
  if (a <= bins.side_max_deg) return yaw_deg > 0.0 ? Orientation::kSideLeft : Orientation::kSideRight;
  return Orientation::kRear;
}

Camera look_at_camera(const Eigen::Vector3d& center, double radius, double height, double yaw_deg, double focal,
                      int width, int height_px) {
  const double a = yaw_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d eye = center + Eigen::Vector3d(radius * std::sin(a), height, radius * std::cos(a));
  const Eigen::Vector3d z = (center - eye).normalized();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x = z.cross(up).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Camera c;
  c.R.row(0) = x.transpose();
  c.R.row(1) = y.transpose();
  c.R.row(2) = z.transpose();
  c.t = -c.R * eye;
  c.fx = focal;
  c.fy = focal;
  c.cx = 0.5 * width;
  c.cy = 0.5 * height_px;
  c.width = width;
  c.height = height_px;
  return c;
}

CameraRig build_rig(const RigSpec& spec) {
  if (spec.count < 4) throw std::invalid_argument("camera rig needs at least 4 cameras");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("camera rig radius must be positive");
  CameraRig rig;
  for (int k = 0; k < spec.count; ++k) {
    double psi = 360.0 * k / spec.count;
    if (psi > 180.0) psi -= 360.0;
    rig.yaw_deg.push_back(psi);
    rig.orientation.push_back(classify_yaw(psi, spec.bins));
    rig.cameras.push_back(look_at_camera(spec.center, spec.radius, spec.height, spec.input_yaw_deg + psi, spec.focal,
                                         spec.width, spec.height_px));
  }
  return rig;
}

Camera part_patch_camera(const Camera& camera, const PixelRect& bbox, int patch) {
  if (bbox.width() < 1 || bbox.height() < 1) throw std::invalid_argument("empty bounding box");
  if (patch < 1) throw std::invalid_argument("patch size must be positive");
  const ResampleWindow w = square_crop_window(bbox, patch);
  const double k = 1.0 / w.scale_x;
  Camera out = camera;
  out.fx = camera.fx * k;
  out.fy = camera.fy * k;
  out.cx = (camera.cx - w.left) * k;
  out.cy = (camera.cy - w.top) * k;
  out.width = patch;
  out.height = patch;
  return out;
}

}  // namespace avatar
