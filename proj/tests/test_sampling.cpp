#include "avatar/error.hpp"
#include "avatar/fixture.hpp"
#include "avatar/sampling.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace avatar {
namespace {

bool front(Orientation o) { return o == Orientation::kFront; }

class SamplerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    scene = make_capsule_scene();
    config = scene.config;
    config.rig.count = 8;
    rig = build_rig(config.rig);
    model = std::make_shared<const SkinnedBodyModel>(scene.model);
    cache = std::make_unique<SegmentationCache>(model, scene.shape, InputView{scene.input_pose, scene.input_camera},
                                                scene.motion, rig);
  }

  std::vector<TrainingView> draws(const TrainConfig& c, int n) {
    Sampler s(c, *cache);
    std::vector<TrainingView> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(s.draw());
    return out;
  }

  CapsuleScene scene;
  TrainConfig config;
  CameraRig rig;
  std::shared_ptr<const SkinnedBodyModel> model;
  std::unique_ptr<SegmentationCache> cache;
};

TEST_F(SamplerTest, RigHasExpectedOrientations) {
  ASSERT_EQ(rig.cameras.size(), 8u);
  int rear = 0, side = 0, fr = 0;
  for (Orientation o : rig.orientation) {
    rear += o == Orientation::kRear;
    side += is_side(o);
    fr += o == Orientation::kFront;
  }
  EXPECT_EQ(fr, 3);
  EXPECT_EQ(side, 2);
  EXPECT_EQ(rear, 3);
}

TEST_F(SamplerTest, NovelFractionNearHalf) {
  int novel = 0;
  for (const TrainingView& v : draws(config, 10000)) novel += v.branch == Branch::kNovelView;
  EXPECT_GE(novel, 4800);
  EXPECT_LE(novel, 5200);
}

TEST_F(SamplerTest, ReferenceCameraRules) {
  int rear = 0, side_head = 0;
  for (const TrainingView& v : draws(config, 4000)) {
    if (v.branch != Branch::kNovelView) continue;
    const Orientation o = rig.orientation[v.rig_camera];
    if (o == Orientation::kRear) {
      ++rear;
      ASSERT_EQ(v.reference.kind, ReferenceKind::kRenderedView);
      EXPECT_EQ(v.reference.camera, nearest_camera(rig, v.rig_camera, is_side));
      EXPECT_TRUE(is_side(rig.orientation[v.reference.camera]));
    } else if (is_side(o) && v.part == kHead) {
      ++side_head;
      ASSERT_EQ(v.reference.kind, ReferenceKind::kRenderedView);
      EXPECT_EQ(rig.orientation[v.reference.camera], Orientation::kFront);
    } else {
      EXPECT_EQ(v.reference.kind, ReferenceKind::kInputCrop);
      EXPECT_EQ(v.reference.camera, kInputCamera);
    }
  }
  EXPECT_GT(rear, 0);
  EXPECT_GT(side_head, 0);
}

TEST_F(SamplerTest, NearestCameraPrefersLeftOnTies) {
  int back = -1, left = -1, right = -1;
  for (int i = 0; i < 8; ++i) {
    if (std::abs(rig.yaw_deg[i]) > 179.0) back = i;
    if (rig.orientation[i] == Orientation::kSideLeft) left = i;
    if (rig.orientation[i] == Orientation::kSideRight) right = i;
  }
  ASSERT_GE(back, 0);
  EXPECT_EQ(nearest_camera(rig, back, is_side), left);
  EXPECT_EQ(rig.orientation[nearest_camera(rig, right, front)], Orientation::kFront);
  EXPECT_NEAR(std::abs(rig.yaw_deg[nearest_camera(rig, right, front)]), 45.0, 1e-9);
}

TEST_F(SamplerTest, SideTorsoCanUseFrontReference) {
  config.front_ref_for_all_side_parts = true;
  int checked = 0;
  for (const TrainingView& v : draws(config, 3000)) {
    if (v.branch != Branch::kNovelView || !is_side(rig.orientation[v.rig_camera])) continue;
    EXPECT_EQ(v.reference.kind, ReferenceKind::kRenderedView);
    EXPECT_EQ(rig.orientation[v.reference.camera], Orientation::kFront);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST_F(SamplerTest, PartFrequenciesMatchProbabilities) {
  std::map<int, int> counts;
  int novel = 0;
  for (const TrainingView& v : draws(config, 10000)) {
    if (v.branch != Branch::kNovelView) continue;
    ++counts[v.part];
    ++novel;
  }
  Sampler s(config, *cache);
  for (const auto& [part, p] : s.part_probs()) {
    const double sigma = std::sqrt(novel * p * (1.0 - p));
    EXPECT_NEAR(counts[part], novel * p, 3.0 * sigma) << "part " << part;
  }
}

TEST_F(SamplerTest, InputBranchIsAnIdentityCrop) {
  Sampler s(config, *cache);
  TrainingView v;
  do {
    v = s.draw();
  } while (v.branch != Branch::kInputView);
  EXPECT_EQ(v.pose, kInputPose);
  EXPECT_EQ(v.part, kWholeBody);
  EXPECT_EQ(v.reference.kind, ReferenceKind::kInputCrop);
  EXPECT_EQ(v.bbox, (PixelRect{0, 0, 63, 63}));
  const FieldParams field = init_field(config.field, 1);
  const WarpField warp = make_warp_field(model, scene.shape);
  const PoseCondition pose = pose_condition(*model, scene.shape, scene.input_pose);
  const ImageBuffer crop = reference_patch(v.reference, scene.image, field, warp, pose, rig,
                                           config.render_settings(true), scene.image.width());
  EXPECT_LT(test::max_abs_diff(crop.data(), scene.image.data()), 1e-12);
}

TEST_F(SamplerTest, SameSeedSameSequence) {
  const std::vector<TrainingView> a = draws(config, 300);
  const std::vector<TrainingView> b = draws(config, 300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rig_camera, b[i].rig_camera);
    EXPECT_EQ(a[i].pose, b[i].pose);
    EXPECT_EQ(a[i].part, b[i].part);
    EXPECT_EQ(a[i].bbox, b[i].bbox);
  }
  config.seed = 1;
  const std::vector<TrainingView> c = draws(config, 300);
  int differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].rig_camera != c[i].rig_camera || a[i].branch != c[i].branch;
  EXPECT_GT(differ, 0);
}

TEST_F(SamplerTest, RngStateRestoresTheStream) {
  Sampler s(config, *cache);
  for (int i = 0; i < 50; ++i) s.draw();
  const std::string state = s.rng_state();
  std::vector<int> cams;
  for (int i = 0; i < 50; ++i) cams.push_back(s.draw().rig_camera);
  Sampler t(config, *cache);
  t.set_rng_state(state);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(t.draw().rig_camera, cams[i]);
  EXPECT_THROW(t.set_rng_state("not a state"), std::invalid_argument);
}

TEST_F(SamplerTest, BoxesAreNonEmptyAndInsideTheImage) {
  for (const TrainingView& v : draws(config, 2000)) {
    EXPECT_GE(v.bbox.width(), 1);
    EXPECT_GE(v.bbox.height(), 1);
    EXPECT_GE(v.bbox.x0, 0);
    EXPECT_GE(v.bbox.y0, 0);
    EXPECT_LT(v.bbox.x1, 64);
    EXPECT_LT(v.bbox.y1, 64);
    EXPECT_EQ(v.camera.width, v.branch == Branch::kNovelView ? config.patch_size : 64);
  }
}

TEST_F(SamplerTest, NoHybridSamplingUsesWholeBodyAndInputReference) {
  config.ablations.insert(Ablation::kNoHybridSampling);
  for (const TrainingView& v : draws(config, 2000)) {
    EXPECT_EQ(v.part, kWholeBody);
    EXPECT_EQ(v.reference.kind, ReferenceKind::kInputCrop);
  }
}

TEST_F(SamplerTest, InputPoseOnlyNeverUsesTheMotion) {
  config.ablations.insert(Ablation::kInputPoseOnly);
  for (const TrainingView& v : draws(config, 10000)) ASSERT_EQ(v.pose, kInputPose);
}

TEST_F(SamplerTest, InvisibleBodyExhaustsRetries) {
  CameraRig away = rig;
  for (Camera& c : away.cameras) c.t += Eigen::Vector3d(50.0, 0.0, 0.0);
  cache = std::make_unique<SegmentationCache>(model, scene.shape, InputView{scene.input_pose, scene.input_camera},
                                              scene.motion, away);
  config.p_novel = 1.0;
  Sampler s(config, *cache);
  EXPECT_THROW(s.draw(), ConfigError);
}

TEST_F(SamplerTest, RenderedReferenceIsFrozen) {
  const FieldParams field = init_field(config.field, 2);
  const WarpField warp = make_warp_field(model, scene.shape);
  const PoseCondition pose = pose_condition(*model, scene.shape, scene.motion.frames[0]);
  Reference ref;
  ref.kind = ReferenceKind::kRenderedView;
  ref.camera = 2;
  ref.bbox = {8, 4, 40, 60};
  RenderSettings a = config.render_settings(true);
  RenderSettings b = a;
  b.stream = 99;
  const ImageBuffer ra = reference_patch(ref, scene.image, field, warp, pose, rig, a, 32);
  EXPECT_EQ(ra, reference_patch(ref, scene.image, field, warp, pose, rig, b, 32));
  a.stratified = false;
  EXPECT_EQ(ra, render_patch(field, warp, pose, rig.cameras[2], ref.bbox, 32, a));
  ref.camera = 42;
  EXPECT_THROW(reference_patch(ref, scene.image, field, warp, pose, rig, a, 32), std::invalid_argument);
}

}  // namespace
}  // namespace avatar
