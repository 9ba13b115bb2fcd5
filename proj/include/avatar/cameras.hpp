#pragma once

#include "avatar/image.hpp"

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace avatar {

/// Pinhole camera, OpenCV convention: x_cam = R·x_world + t, +z forward,
/// image y down. Pixel (i, j) covers [i, i+1)×[j, j+1).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 1;
  int height = 1;

  Eigen::Vector3d center() const { return -R.transpose() * t; }
  Eigen::Vector3d forward_axis() const { return R.row(2).transpose(); }
};

/// Throws std::invalid_argument if R is not a rotation or focal lengths are not positive.
void validate(const Camera& camera);

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

/// Ray through continuous pixel coordinate (u, v); pixel centers sit at
/// half-integers. Out-of-image coordinates throw std::out_of_range.
Ray cast_ray(const Camera& camera, const Eigen::Vector2d& px);

enum class Orientation { kFront, kSideLeft, kSideRight, kRear };

std::string_view to_string(Orientation o);
bool is_side(Orientation o);

/// Yaw-bin boundaries in degrees: front |ψ| < front_max, side
/// front_max <= |ψ| <= side_max, rear beyond.
struct OrientationBins {
  double front_max_deg = 60.0;
  double side_max_deg = 120.0;
};

/// ψ > 0 is classified side_left.
Orientation classify_yaw(double yaw_deg, const OrientationBins& bins);

struct CameraRig {
  std::vector<Camera> cameras;
  std::vector<Orientation> orientation;
  std::vector<double> yaw_deg;  // ψ relative to the input view, wrapped to (-180, 180]
};

struct RigSpec {
  Eigen::Vector3d center = Eigen::Vector3d(0.0, 0.5, 0.0);
  double radius = 3.0;
  double height = 0.0;
  int count = 12;
  double input_yaw_deg = 0.0;
  OrientationBins bins;
  double focal = 150.0;
  int width = 64;
  int height_px = 64;
};

/// Camera on the horizontal circle at world yaw `yaw_deg` (0 sits on +z
/// looking toward -z), raised by `height`, looking at `center`.
Camera look_at_camera(const Eigen::Vector3d& center, double radius, double height, double yaw_deg, double focal,
                      int width, int height_px);

CameraRig build_rig(const RigSpec& spec);

/// Camera whose full patch×patch image covers the square-padded `bbox` of `camera`.
Camera part_patch_camera(const Camera& camera, const PixelRect& bbox, int patch);

}  // namespace avatar
