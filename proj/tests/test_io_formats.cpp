#include "avatar/config.hpp"
#include "avatar/error.hpp"
#include "avatar/io_formats.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace avatar {
namespace {

using test::TempDir;

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TEST(BodyArchive, CapsuleRoundTrip) {
  TempDir dir("archive");
  const SkinnedBodyModel m = make_capsule_fixture(2, 100);
  save_body_model_archive(m, dir / "body");
  const SkinnedBodyModel back = load_body_model_archive(dir / "body");
  EXPECT_EQ(back.num_vertices(), 200);
  EXPECT_EQ(back.num_joints(), 2);
  EXPECT_EQ(back.template_vertices, m.template_vertices);
  EXPECT_EQ(back.faces, m.faces);
  EXPECT_EQ(back.skin_weights, m.skin_weights);
  EXPECT_EQ(back.part_labels, m.part_labels);
  EXPECT_EQ(back.parents, m.parents);
}

TEST(BodyArchive, SmplLayoutHasStandardCounts) {
  TempDir dir("archive");
  save_body_model_archive(make_smpl_layout_fixture(), dir / "body");
  const SkinnedBodyModel m = load_body_model_archive(dir / "body");
  EXPECT_EQ(m.num_vertices(), kSmplVertices);
  EXPECT_EQ(m.num_joints(), kSmplJoints);
  EXPECT_EQ(m.pose_dirs.cols(), 207);
}

TEST(BodyArchive, SmplTablesFillOptionalArrays) {
  TempDir dir("archive");
  save_body_model_archive(make_smpl_layout_fixture(), dir / "body");
  // drop the optional arrays from the manifest
  std::ifstream in(dir / "body" / "manifest.txt");
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("parents", 0) != 0 && line.rfind("part_labels", 0) != 0) kept += line + "\n";
  }
  in.close();
  write_text(dir / "body" / "manifest.txt", kept);
  const SkinnedBodyModel m = load_body_model_archive(dir / "body");
  EXPECT_EQ(m.parents, std::vector<int>(smpl_parents().begin(), smpl_parents().end()));
  EXPECT_EQ(m.num_parts(), kSmplPartCount);
}

TEST(BodyArchive, BadWeightRowIsRejected) {
  TempDir dir("archive");
  SkinnedBodyModel m = make_capsule_fixture(2, 100);
  m.skin_weights(17, 0) = 0.8;
  save_body_model_archive(m, dir / "body");
  const std::string what = message_of([&] { load_body_model_archive(dir / "body"); });
  EXPECT_NE(what.find("invalid model data"), std::string::npos) << what;
  EXPECT_NE(what.find("skinning weight row sum"), std::string::npos) << what;
  EXPECT_THROW(load_body_model_archive(dir / "body"), AssetError);
}

TEST(BodyArchive, MissingFieldIsNamed) {
  TempDir dir("archive");
  save_body_model_archive(make_capsule_fixture(2, 100), dir / "body");
  std::ifstream in(dir / "body" / "manifest.txt");
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("J_regressor", 0) != 0) kept += line + "\n";
  }
  in.close();
  write_text(dir / "body" / "manifest.txt", kept);
  const std::string what = message_of([&] { load_body_model_archive(dir / "body"); });
  EXPECT_NE(what.find("malformed archive"), std::string::npos) << what;
  EXPECT_NE(what.find("J_regressor"), std::string::npos) << what;
}

TEST(Motion, SingleZeroFrame) {
  TempDir dir("motion");
  std::string row;
  for (int k = 0; k < kPoseDims; ++k) row += k ? " 0" : "0";
  write_text(dir / "m.txt", row + "\n");
  const MotionSequence m = load_motion_sequence(dir / "m.txt");
  ASSERT_EQ(m.frames.size(), 1u);
  EXPECT_TRUE(m.frames[0].theta.isZero());
}

TEST(Motion, ThirtyFramesRoundTripExactly) {
  TempDir dir("motion");
  Rng rng(3);
  MotionSequence m;
  m.fps = 24.5;
  for (int f = 0; f < 30; ++f) {
    PoseParams p;
    for (int k = 0; k < kPoseDims; ++k) p.theta[k] = uniform(rng, -3.0, 3.0);
    m.frames.push_back(p);
    m.camera_ref.push_back(f % 4);
  }
  save_motion_sequence(m, dir / "m.txt");
  const MotionSequence back = load_motion_sequence(dir / "m.txt");
  ASSERT_EQ(back.frames.size(), 30u);
  for (int f = 0; f < 30; ++f) EXPECT_EQ(back.frames[f].theta, m.frames[f].theta);
  EXPECT_EQ(back.fps, m.fps);
  EXPECT_EQ(back.camera_ref, m.camera_ref);
}

TEST(Motion, TruncatedLastRowNamesFrame) {
  std::string text;
  for (int f = 0; f < 5; ++f) {
    const int n = f == 4 ? 40 : kPoseDims;
    for (int k = 0; k < n; ++k) text += k ? ", 0.1" : "0.1";
    text += "\n";
  }
  const std::string what = message_of([&] { parse_motion_sequence(text); });
  EXPECT_NE(what.find("frame 4"), std::string::npos) << what;
  EXPECT_THROW(parse_motion_sequence(text), AssetError);
}

TEST(Motion, EmptyFileHasNoFrames) {
  const std::string what = message_of([] { parse_motion_sequence("# fps: 30\n"); });
  EXPECT_NE(what.find("no frames"), std::string::npos) << what;
}

TEST(Images, WhiteImageWithFullMask) {
  TempDir dir("img");
  save_image(ImageBuffer(4, 4, 1.0), dir / "i.png");
  SilhouetteMask ones(4, 4, 1);
  save_mask(ones, dir / "m.png");
  const auto [img, mask] = load_image_with_mask(dir / "i.png", dir / "m.png");
  for (double v : img.data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(mask, ones);
}

TEST(Images, EightBitNormalization) {
  TempDir dir("img");
  save_image(ImageBuffer(2, 2, 128.0 / 255.0), dir / "i.png", 8);
  const ImageBuffer img = load_image(dir / "i.png");
  EXPECT_DOUBLE_EQ(img.at(1, 1, 2), 128.0 / 255.0);
  EXPECT_NEAR(img.at(0, 0, 0), 0.50196, 1e-5);
}

TEST(Images, SixteenBitRoundTrip) {
  TempDir dir("img");
  Rng rng(5);
  ImageBuffer src = test::random_image(7, 5, rng);
  for (double& v : src.data()) v = std::round(v * 65535.0) / 65535.0;
  save_image(src, dir / "i.png", 16);
  EXPECT_EQ(load_image(dir / "i.png"), src);
}

TEST(Images, ResolutionMismatchNamesBothSizes) {
  TempDir dir("img");
  save_image(ImageBuffer(64, 64), dir / "i.png");
  save_mask(SilhouetteMask(32, 32, 1), dir / "m.png");
  const std::string what = message_of([&] { load_image_with_mask(dir / "i.png", dir / "m.png"); });
  EXPECT_NE(what.find("64x64"), std::string::npos) << what;
  EXPECT_NE(what.find("32x32"), std::string::npos) << what;
}

TEST(Images, MaskBinarizedAtHalf) {
  TempDir dir("img");
  ImageBuffer m(3, 1);
  m.set_pixel(0, 0, {0.49, 0.49, 0.49});
  m.set_pixel(1, 0, {0.5, 0.5, 0.5});
  m.set_pixel(2, 0, {1.0, 0.5, 0.0});
  save_image(m, dir / "m.png", 16);
  const SilhouetteMask mask = load_mask(dir / "m.png");
  EXPECT_EQ(mask(0, 0), 0);
  EXPECT_EQ(mask(1, 0), 1);
  EXPECT_EQ(mask(2, 0), 1);
}

TEST(Frames, ThreeFramesRoundTrip) {
  TempDir dir("frames");
  std::vector<ImageBuffer> frames;
  for (int i = 0; i < 3; ++i) frames.emplace_back(5, 4, i / 255.0 * 40.0);
  EXPECT_EQ(write_frame_sequence(frames, dir / "out"), 3);
  for (int i = 0; i < 3; ++i) {
    const fs::path p = dir / "out" / ("00000" + std::to_string(i) + ".png");
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(load_image(p), frames[i]);
  }
}

TEST(Frames, SingleBlackFrame) {
  TempDir dir("frames");
  EXPECT_EQ(write_frame_sequence({ImageBuffer(3, 3)}, dir / "out"), 1);
  const ImageBuffer img = load_image(dir / "out" / "000000.png");
  for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(Frames, EmptyListIsAnError) {
  TempDir dir("frames");
  const std::string what = message_of([&] { write_frame_sequence({}, dir / "out"); });
  EXPECT_EQ(what, "no frames");
}

TEST(Cameras, FileRoundTrip) {
  TempDir dir("cams");
  const CameraRig rig = build_rig(RigSpec{});
  save_cameras(rig.cameras, dir / "rig.txt");
  const std::vector<Camera> back = load_cameras(dir / "rig.txt");
  ASSERT_EQ(back.size(), rig.cameras.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].R, rig.cameras[i].R);
    EXPECT_EQ(back[i].t, rig.cameras[i].t);
    EXPECT_EQ(back[i].fx, rig.cameras[i].fx);
    EXPECT_EQ(back[i].width, rig.cameras[i].width);
  }
}

TEST(Cameras, ShortRecordIsRejected) {
  TempDir dir("cams");
  write_text(dir / "rig.txt", "1 1 0 0 1 0 0 0 1 0 0 0 1 0 0 0 64\n");
  EXPECT_THROW(load_cameras(dir / "rig.txt"), AssetError);
}

TEST(Shape, RoundTripAndPadding) {
  TempDir dir("shape");
  write_text(dir / "s.txt", "0.5 -1.25\n");
  const BodyShapeParams s = load_shape(dir / "s.txt");
  EXPECT_EQ(s.beta[0], 0.5);
  EXPECT_EQ(s.beta[1], -1.25);
  EXPECT_TRUE(s.beta.tail<8>().isZero());
  save_shape(s, dir / "t.txt");
  EXPECT_EQ(load_shape(dir / "t.txt").beta, s.beta);
}

TEST(Doubles, ShortestFormRoundTrips) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(uniform(rng, -1.0, 1.0), static_cast<int>(uniform_index(rng, 80)) - 40);
    EXPECT_EQ(parse_double(format_double(v), "test"), v);
  }
}

TEST(Digest, KnownSha256) {
  const std::string abc = "abc";
  const std::vector<std::uint8_t> bytes(abc.begin(), abc.end());
  EXPECT_EQ(sha256_hex(bytes), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace avatar
