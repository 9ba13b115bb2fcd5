#include "gradcheck.hpp"

#include <gtest/gtest.h>

namespace avatar {
namespace {

using test::check_view_loss;
using test::GradScene;
using test::make_grad_scene;

constexpr double kTolerance = 1e-5;

TEST(Gradient, PixelMse) {
  const GradScene s = make_grad_scene();
  const auto r = check_view_loss(s, test::pixel_mse_view_loss(s.target));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

TEST(Gradient, ReconstructionWithPyramid) {
  const GradScene s = make_grad_scene();
  const auto r = check_view_loss(s, test::reconstruction_view_loss(s.target, std::make_shared<PyramidPerceptual>()));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

TEST(Gradient, SemanticWithMockEmbedder) {
  const GradScene s = make_grad_scene();
  auto embedder = std::make_shared<MockEmbedder>(EmbedderSpec{});
  const Embedding ref = embedder->embed_image(s.target);
  const auto r = check_view_loss(s, test::semantic_view_loss(embedder, ref));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

TEST(Gradient, SilhouetteLiteral) {
  const GradScene s = make_grad_scene();
  SilhouetteOptions o;
  o.mode = ChamferMode::kLiteral;
  const auto r = check_view_loss(s, test::silhouette_view_loss(s.mask, o));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

TEST(Gradient, SilhouetteBoundaryBand) {
  const GradScene s = make_grad_scene();
  SilhouetteOptions o;
  o.mode = ChamferMode::kBoundaryBand;
  o.band = 1.0;
  const auto r = check_view_loss(s, test::silhouette_view_loss(s.mask, o));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

TEST(Gradient, SilhouetteHardMode) {
  const GradScene s = make_grad_scene();
  SilhouetteOptions o;
  o.hard = true;
  const auto r = check_view_loss(s, test::silhouette_view_loss(s.mask, o));
  EXPECT_GT(r.max_abs_grad, 0.0);
  EXPECT_LT(r.max_rel, kTolerance);
}

}  // namespace
}  // namespace avatar
