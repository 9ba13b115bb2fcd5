#include "avatar/rasterizer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

namespace avatar {
namespace {

PosedMesh unit_square(double z) {
  PosedMesh m;
  m.vertices.resize(4, 3);
  m.vertices << -0.5, -0.5, z, 0.5, -0.5, z, 0.5, 0.5, z, -0.5, 0.5, z;
  m.part_labels = {1, 1, 1, 1};
  return m;
}

Faces square_faces() {
  Faces f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  return f;
}

Camera axis_camera(double focal) {
  Camera c;
  c.fx = c.fy = focal;
  c.cx = c.cy = 32.0;
  c.width = c.height = 64;
  return c;
}

int count(const SilhouetteMask& m) {
  int n = 0;
  for (auto v : m.data()) n += v;
  return n;
}

TEST(Rasterize, BehindCameraIsBackground) {
  const PosedMesh m = unit_square(-10.0);
  const Camera c = axis_camera(203.0);
  EXPECT_EQ(count(rasterize_silhouette(m, square_faces(), c)), 0);
  const SegmentationMap seg = rasterize_parts(m, square_faces(), c);
  const ImageBuffer color = rasterize_template_color(m, square_faces(), c);
  for (int v : seg.data()) EXPECT_EQ(v, 0);
  for (double v : color.data()) EXPECT_EQ(v, 0.0);
}

TEST(Rasterize, SquareAreaMatchesProjection) {
  const double focal = 203.0;
  const double z = 10.0;
  const PosedMesh m = unit_square(z);
  const SilhouetteMask s = rasterize_silhouette(m, square_faces(), axis_camera(focal));
  const double side = focal / z;
  const double area = side * side;
  const double band = 4.0 * side + 4.0;
  EXPECT_NEAR(count(s), area, band);
  // pixel centers 22.5 .. 41.5 fall inside [21.85, 42.15] on both axes
  EXPECT_EQ(count(s), 20 * 20);
}

TEST(Rasterize, CapsuleHasTwoPartLabels) {
  const SkinnedBodyModel model = make_capsule_fixture(2, 100);
  const PosedMesh mesh = forward(model, {}, {});
  const CameraRig rig = build_rig(RigSpec{});
  const SegmentationMap seg = rasterize_parts(mesh, model.faces, rig.cameras[3]);
  std::set<int> labels;
  for (int v : seg.data()) {
    if (v) labels.insert(v);
  }
  EXPECT_EQ(labels, (std::set<int>{kHead, kTorso}));
}

TEST(Rasterize, PartsSupportEqualsSilhouette) {
  const SkinnedBodyModel model = make_capsule_fixture(3, 60);
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    PoseParams p;
    for (int k = 0; k < 9; ++k) p.theta[k] = uniform(rng, -1.0, 1.0);
    const PosedMesh mesh = forward(model, {}, p);
    const Camera cam = look_at_camera({0.0, 0.75, 0.0}, uniform(rng, 2.5, 4.0), uniform(rng, -1.0, 1.0),
                                      uniform(rng, -180.0, 180.0), 120.0, 48, 40);
    const SilhouetteMask s = rasterize_silhouette(mesh, model.faces, cam);
    const SegmentationMap seg = rasterize_parts(mesh, model.faces, cam);
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(s.data()[i] != 0, seg.data()[i] != 0) << trial;
  }
}

TEST(Rasterize, ModesAgreeWithVariant) {
  const SkinnedBodyModel model = make_capsule_fixture(2, 100);
  const PosedMesh mesh = forward(model, {}, {});
  const Camera cam = build_rig(RigSpec{}).cameras[0];
  EXPECT_EQ(std::get<SilhouetteMask>(rasterize(mesh, model.faces, cam, RasterMode::kSilhouette)),
            rasterize_silhouette(mesh, model.faces, cam));
  EXPECT_EQ(std::get<SegmentationMap>(rasterize(mesh, model.faces, cam, RasterMode::kParts)),
            rasterize_parts(mesh, model.faces, cam));
  EXPECT_EQ(std::get<ImageBuffer>(rasterize(mesh, model.faces, cam, RasterMode::kTemplateColor)),
            rasterize_template_color(mesh, model.faces, cam));
}

TEST(Rasterize, TemplateColorsAreDistinctPerPart) {
  std::set<std::tuple<double, double, double>> colors;
  for (int k = 1; k <= kSmplPartCount; ++k) {
    const Eigen::Vector3d c = template_part_color(k);
    colors.emplace(c.x(), c.y(), c.z());
  }
  EXPECT_EQ(colors.size(), static_cast<std::size_t>(kSmplPartCount));
}

TEST(PartBbox, SinglePixel) {
  SegmentationMap seg(10, 10, 0);
  seg(5, 7) = 3;
  const auto b = part_bbox(seg, 3);
  ASSERT_TRUE(b);
  EXPECT_EQ(*b, (PixelRect{5, 7, 5, 7}));
}

TEST(PartBbox, MissingLabelIsEmpty) {
  SegmentationMap seg(10, 10, 0);
  seg(5, 7) = 3;
  EXPECT_FALSE(part_bbox(seg, 2));
  EXPECT_FALSE(part_bbox(SegmentationMap(4, 4, 0), kWholeBody));
}

TEST(PartBbox, DisjointBlobsAndWholeBody) {
  SegmentationMap seg(20, 20, 0);
  seg(1, 2) = seg(2, 2) = 4;
  seg(15, 17) = 4;
  seg(9, 0) = 1;
  EXPECT_EQ(*part_bbox(seg, 4), (PixelRect{1, 2, 15, 17}));
  EXPECT_EQ(*part_bbox(seg, kWholeBody), (PixelRect{1, 0, 15, 17}));
}

TEST(MaskEdge, ThreeByThreeBlock) {
  SilhouetteMask m(5, 5, 0);
  for (int y = 1; y <= 3; ++y) {
    for (int x = 1; x <= 3; ++x) m(x, y) = 1;
  }
  const auto edge = mask_edge(m);
  EXPECT_EQ(edge.size(), 8u);
  for (const auto& p : edge) EXPECT_FALSE(p.x() == 2 && p.y() == 2);
}

TEST(MaskEdge, SinglePixelAndEmpty) {
  SilhouetteMask m(5, 5, 0);
  EXPECT_TRUE(mask_edge(m).empty());
  m(4, 0) = 1;
  const auto edge = mask_edge(m);
  ASSERT_EQ(edge.size(), 1u);
  EXPECT_EQ(edge[0], Eigen::Vector2i(4, 0));
}

TEST(MaskEdge, ImageBorderCountsAsOutside) {
  const SilhouetteMask m(4, 3, 1);
  EXPECT_EQ(mask_edge(m).size(), 10u);
}

TEST(MaskEdge, EightConnectivityAddsDiagonals) {
  SilhouetteMask m(7, 7, 0);
  for (int y = 1; y <= 5; ++y) {
    for (int x = 1; x <= 5; ++x) m(x, y) = 1;
  }
  m(3, 3) = 0;
  // the hole's diagonal neighbours only count under 8-connectivity
  EXPECT_EQ(mask_edge(m, EdgeConnectivity::kFour).size(), 16u + 4u);
  EXPECT_EQ(mask_edge(m, EdgeConnectivity::kEight).size(), 16u + 8u);
}

TEST(MaskEdge, SubsetOfMaskAndShrinks) {
  const SkinnedBodyModel model = make_capsule_fixture(2, 100);
  const SilhouetteMask s = rasterize_silhouette(forward(model, {}, {}), model.faces, build_rig(RigSpec{}).cameras[0]);
  SilhouetteMask inner = s;
  for (const auto& p : mask_edge(s)) {
    ASSERT_EQ(s(p.x(), p.y()), 1);
    inner(p.x(), p.y()) = 0;
  }
  EXPECT_LT(count(inner), count(s));
  EXPECT_GT(count(inner), 0);
}

}  // namespace
}  // namespace avatar
