#pragma once

#include "avatar/body_model.hpp"
#include "avatar/cameras.hpp"
#include "avatar/config.hpp"
#include "avatar/io_formats.hpp"
#include "avatar/trainer.hpp"

#include <cstdint>
#include <filesystem>

namespace avatar {

// Synthetic scene for smoke and end-to-end runs: a two-segment capsule
// "person" seen by a four-camera ring, with a striped subject texture that
// the template colors only approximate.

struct CapsuleSceneSpec {
  int joints = 2;
  int verts_per_segment = 100;
  double bend_deg = 30.0;  // the motion bends the upper joint by ±bend_deg about z
  std::uint64_t seed = 0;
};

struct CapsuleScene {
  SkinnedBodyModel model;
  BodyShapeParams shape;
  MotionSequence motion;
  PoseParams input_pose;
  Camera input_camera;
  std::vector<Camera> rig;
  ImageBuffer image;
  SilhouetteMask mask;
  TrainConfig config;
};

/// Subject albedo: template colors, with light bands every 0.1 m on torso parts.
Eigen::Vector3d subject_albedo(int part, const Eigen::Vector3d& position);

CapsuleScene make_capsule_scene(const CapsuleSceneSpec& spec = {});

/// File names used inside a scene directory.
struct ScenePaths {
  std::filesystem::path body_model, motion, rig, input_camera, input_pose, shape, image, mask, config;
  explicit ScenePaths(const std::filesystem::path& dir);
};

void write_capsule_scene(const CapsuleScene& scene, const std::filesystem::path& dir);

struct AssetPaths {
  std::filesystem::path body_model, shape, motion, input_camera, input_pose, image, mask;
};

/// Loads and cross-checks everything the trainer needs.
TrainingAssets load_training_assets(const AssetPaths& paths);

/// Training assets straight from an in-memory scene.
TrainingAssets scene_assets(const CapsuleScene& scene);

}  // namespace avatar
