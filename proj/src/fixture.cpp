#include "avatar/fixture.hpp"

#include "avatar/error.hpp"
#include "avatar/rasterizer.hpp"

#include <cmath>
#include <numbers>

namespace avatar {

Eigen::Vector3d subject_albedo(int part, const Eigen::Vector3d& position) {
  const Eigen::Vector3d base = template_part_color(part);
  if (part == kHead) return base;
  const bool band = static_cast<long>(std::floor(position.y() / 0.1)) % 2 != 0;
  return band ? Eigen::Vector3d(0.6, 0.75, 0.95) : base;
}

CapsuleScene make_capsule_scene(const CapsuleSceneSpec& spec) {
  CapsuleScene s;
  s.model = make_capsule_fixture(spec.joints, spec.verts_per_segment);
  validate(s.model);

  const double bend = spec.bend_deg * std::numbers::pi / 180.0;
  for (const double sign : {1.0, -1.0}) {
    PoseParams p;
    p.theta[3 * (spec.joints - 1) + 2] = sign * bend;
    s.motion.frames.push_back(p);
  }
  s.motion.fps = 30.0;

  s.config = TrainConfig::desk();
  s.config.rig.count = 4;
  s.config.seed = spec.seed;
  const CameraRig rig = build_rig(s.config.rig);
  s.rig = rig.cameras;
  s.input_camera = rig.cameras.front();

  const PosedMesh mesh = forward(s.model, s.shape, s.input_pose);
  const RasterFrame frame = rasterize_frame(mesh.vertices, s.model.faces, s.input_camera);
  const auto albedo = [&](int f, const Eigen::Vector3d& pos) {
    return subject_albedo(mesh.part_labels[s.model.faces(f, 0)], pos);
  };
  s.image = shade(frame, mesh.vertices, s.model.faces, s.input_camera, albedo, s.config.background);
  s.mask = to_silhouette(frame);
  return s;
}

ScenePaths::ScenePaths(const std::filesystem::path& dir)
    : body_model(dir / "body"),
      motion(dir / "motion.txt"),
      rig(dir / "rig.txt"),
      input_camera(dir / "input_camera.txt"),
      input_pose(dir / "input_pose.txt"),
      shape(dir / "shape.txt"),
      image(dir / "input.png"),
      mask(dir / "mask.png"),
      config(dir / "config.txt") {}

void write_capsule_scene(const CapsuleScene& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ScenePaths p(dir);
  save_body_model_archive(s.model, p.body_model);
  save_motion_sequence(s.motion, p.motion);
  save_cameras(s.rig, p.rig);
  save_cameras({s.input_camera}, p.input_camera);
  MotionSequence input;
  input.frames.push_back(s.input_pose);
  save_motion_sequence(input, p.input_pose);
  save_shape(s.shape, p.shape);
  save_image(s.image, p.image, 16);
  save_mask(s.mask, p.mask);
  save_config(s.config, p.config);
}

TrainingAssets load_training_assets(const AssetPaths& paths) {
  TrainingAssets a;
  a.model = std::make_shared<const SkinnedBodyModel>(load_body_model_archive(paths.body_model));
  a.model_path = std::filesystem::absolute(paths.body_model).lexically_normal().string();
  if (!paths.shape.empty()) a.shape = load_shape(paths.shape);
  a.motion = load_motion_sequence(paths.motion);
  if (a.motion.frames.empty()) throw AssetError("motion file '" + paths.motion.string() + "' has no frames");
  const std::vector<Camera> cams = load_cameras(paths.input_camera);
  if (cams.size() != 1) {
    throw AssetError("input camera file '" + paths.input_camera.string() + "' must hold exactly one camera");
  }
  a.input.camera = cams.front();
  const MotionSequence pose = load_motion_sequence(paths.input_pose);
  if (pose.frames.size() != 1) {
    throw AssetError("input pose file '" + paths.input_pose.string() + "' must hold exactly one frame");
  }
  a.input.pose = pose.frames.front();
  auto [image, mask] = load_image_with_mask(paths.image, paths.mask);
  a.image = std::move(image);
  a.mask = std::move(mask);
  return a;
}

TrainingAssets scene_assets(const CapsuleScene& s) {
  TrainingAssets a;
  a.model = std::make_shared<const SkinnedBodyModel>(s.model);
  a.shape = s.shape;
  a.motion = s.motion;
  a.input.pose = s.input_pose;
  a.input.camera = s.input_camera;
  a.image = s.image;
  a.mask = s.mask;
  return a;
}

}  // namespace avatar
