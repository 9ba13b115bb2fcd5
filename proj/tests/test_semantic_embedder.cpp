#include "adapter_server.hpp"
#include "avatar/error.hpp"
#include "avatar/losses.hpp"
#include "avatar/semantic_embedder.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace avatar {
namespace {

using adapter::Frame;
using adapter::Kind;
using test::AdapterServer;
using test::TempDir;

Frame ok(std::uint64_t id, adapter::Writer& w) { return {id, 0, w.bytes()}; }

// Answers every request kind with the mock encoder and the pyramid metric.
AdapterServer::Handler mock_handler() {
  auto mock = std::make_shared<MockEmbedder>(EmbedderSpec{});
  return [mock](const Frame& req) {
    adapter::Reader r(req.body);
    adapter::Writer w;
    auto write_embedding = [&](const Embedding& e) {
      w.u32(static_cast<std::uint32_t>(e.size()));
      w.f32_array(std::span<const double>(e.data(), e.size()));
    };
    switch (static_cast<Kind>(req.code)) {
      case Kind::kImage:
        write_embedding(mock->embed_image(r.image()));
        break;
      case Kind::kText: {
        const std::uint32_t n = r.u32();
        const std::string text = r.rest();
        if (text.size() != n) return Frame{req.id, 1, {}};
        write_embedding(mock->embed_text(text));
        break;
      }
      case Kind::kImageVjp: {
        const ImageBuffer img = r.image();
        const std::vector<double> cot = r.f32_array(r.u32());
        w.image(mock->embed_image_vjp(img, Eigen::Map<const Eigen::VectorXd>(cot.data(), cot.size())));
        break;
      }
      case Kind::kPerceptual: {
        const ImageBuffer a = r.image();
        const ImageBuffer b = r.image();
        ImageBuffer g(a.width(), a.height());
        PyramidPerceptual metric;
        w.f32(static_cast<float>(metric.evaluate(a, b, &g)));
        w.image(g);
        break;
      }
      default: {
        const std::string msg = "unsupported kind";
        return Frame{req.id, 2, std::vector<std::uint8_t>(msg.begin(), msg.end())};
      }
    }
    return ok(req.id, w);
  };
}

TEST(MockEmbedder, EmbeddingsAreUnitLength) {
  MockEmbedder e(EmbedderSpec{});
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(e.embed_image(test::random_image(20 + i, 30 - i, rng)).norm(), 1.0, 1e-12);
  }
  EXPECT_NEAR(e.embed_text("a person in a red shirt").norm(), 1.0, 1e-12);
  EXPECT_EQ(e.embed_image(ImageBuffer(8, 8)).size(), 64);
}

TEST(MockEmbedder, SensitiveToBrightness) {
  MockEmbedder e(EmbedderSpec{});
  Rng rng(2);
  const ImageBuffer img = test::random_image(32, 32, rng, 0.2, 0.9);
  ImageBuffer dim = img;
  for (double& v : dim.data()) v *= 0.5;
  EXPECT_GT(embedding_distance(e.embed_image(img), e.embed_image(dim)), 1e-3);
  EXPECT_NEAR(embedding_distance(e.embed_image(img), e.embed_image(img)), 0.0, 1e-15);
}

TEST(MockEmbedder, TextIsDeterministicAndDistinct) {
  MockEmbedder a(EmbedderSpec{});
  MockEmbedder b(EmbedderSpec{});
  EXPECT_EQ(a.embed_text("front view of a person"), b.embed_text("front view of a person"));
  EXPECT_GT(embedding_distance(a.embed_text("front view of a person"), a.embed_text("back view of a person")), 0.1);
}

TEST(MockEmbedder, EmptyPromptIsRejected) {
  MockEmbedder e(EmbedderSpec{});
  try {
    e.embed_text("");
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& err) {
    EXPECT_STREQ(err.what(), "empty prompt");
  }
}

TEST(MockEmbedder, BadSpecIsRejected) {
  EmbedderSpec s;
  s.resolution = 10;
  EXPECT_THROW(MockEmbedder{s}, std::invalid_argument);
  s.resolution = 16;
  s.dim = 0;
  EXPECT_THROW(MockEmbedder{s}, std::invalid_argument);
}

TEST(MockEmbedder, VjpMatchesFiniteDifference) {
  MockEmbedder e(EmbedderSpec{});
  Rng rng(3);
  const ImageBuffer img = test::random_image(12, 10, rng);
  Eigen::VectorXd cot(64);
  for (Eigen::Index i = 0; i < cot.size(); ++i) cot[i] = uniform(rng, -1.0, 1.0);
  const ImageBuffer g = e.embed_image_vjp(img, cot);
  ImageBuffer probe = img;
  const std::vector<double> n = test::central_difference(
      img.data(),
      [&](std::span<const double> v) {
        probe.data().assign(v.begin(), v.end());
        return cot.dot(e.embed_image(probe));
      },
      1e-6);
  EXPECT_LT(test::max_rel_error(g.data(), n, 1e-8), 1e-5);
}

TEST(EmbeddingDistance, IdenticalOrthogonalOpposite) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4);
  a[0] = 1.0;
  b[1] = 1.0;
  EXPECT_EQ(embedding_distance(a, a), 0.0);
  EXPECT_EQ(embedding_distance(a, b), 1.0);
  EXPECT_EQ(embedding_distance(a, -a), 2.0);
  EXPECT_THROW(embedding_distance(a, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Embedder, ExternalWithoutSocketIsAConfigError) {
  EmbedderSpec s;
  s.kind = EmbedderKind::kExternal;
  EXPECT_THROW(make_embedder(s), ConfigError);
}

TEST(Embedder, UnreachableAdapterRaises) {
  TempDir dir("adapter");
  EmbedderSpec s;
  s.kind = EmbedderKind::kExternal;
  s.adapter = (dir / "missing.sock").string();
  auto e = make_embedder(s);
  try {
    e->embed_image(ImageBuffer(4, 4));
    FAIL() << "expected AdapterError";
  } catch (const AdapterError& err) {
    EXPECT_NE(std::string(err.what()).find("missing.sock"), std::string::npos) << err.what();
  }
}

TEST(Adapter, FrameRoundTrip) {
  const Frame f{0x0102030405060708ULL, 3, {9, 8, 7}};
  const std::vector<std::uint8_t> bytes = adapter::encode_frame(f);
  ASSERT_EQ(bytes.size(), 16u);
  EXPECT_EQ(bytes[0], 12);
  EXPECT_EQ(bytes[4], 0x08);
  const Frame back = adapter::decode_frame(bytes);
  EXPECT_EQ(back.id, f.id);
  EXPECT_EQ(back.code, 3);
  EXPECT_EQ(back.body, f.body);
}

TEST(Adapter, TruncatedBodyRaises) {
  const std::vector<std::uint8_t> body{1, 0, 0};
  adapter::Reader r(body);
  EXPECT_THROW(r.u32(), AdapterError);
}

TEST(Adapter, EmbedderAgreesWithInProcessMock) {
  TempDir dir("adapter");
  AdapterServer server(dir / "enc.sock", mock_handler());
  EmbedderSpec s;
  s.kind = EmbedderKind::kExternal;
  s.adapter = server.path();
  auto remote = make_embedder(s);
  MockEmbedder local(EmbedderSpec{});
  Rng rng(4);
  const ImageBuffer img = test::random_image(16, 16, rng);
  EXPECT_LT((remote->embed_image(img) - local.embed_image(img)).norm(), 1e-6);
  EXPECT_LT((remote->embed_text("a dancer") - local.embed_text("a dancer")).norm(), 1e-6);
  Eigen::VectorXd cot = Eigen::VectorXd::Ones(64);
  const ImageBuffer gr = remote->embed_image_vjp(img, cot);
  const ImageBuffer gl = local.embed_image_vjp(img, cot);
  EXPECT_LT(test::max_abs_diff(gr.data(), gl.data()), 1e-5);
  EXPECT_EQ(server.requests(), 3);
  EXPECT_EQ(remote->name(), "adapter:ViT-L/14@224");
}

TEST(Adapter, PerceptualMetricOverSocket) {
  TempDir dir("adapter");
  AdapterServer server(dir / "enc.sock", mock_handler());
  AdapterPerceptual remote(server.path());
  PyramidPerceptual local;
  Rng rng(5);
  const ImageBuffer a = test::random_image(8, 8, rng);
  const ImageBuffer b = test::random_image(8, 8, rng);
  ImageBuffer gr(8, 8), gl(8, 8);
  EXPECT_NEAR(remote.evaluate(a, b, &gr), local.evaluate(a, b, &gl), 1e-6);
  EXPECT_LT(test::max_abs_diff(gr.data(), gl.data()), 1e-6);
}

TEST(Adapter, ErrorStatusCarriesMessage) {
  TempDir dir("adapter");
  AdapterServer server(dir / "enc.sock", [](const Frame& req) {
    const std::string msg = "model not loaded";
    return Frame{req.id, 1, std::vector<std::uint8_t>(msg.begin(), msg.end())};
  });
  adapter::Client client(server.path());
  try {
    client.call(Kind::kImage, {});
    FAIL() << "expected AdapterError";
  } catch (const AdapterError& e) {
    EXPECT_NE(std::string(e.what()).find("model not loaded"), std::string::npos) << e.what();
  }
}

TEST(Adapter, MismatchedReplyIdRaises) {
  TempDir dir("adapter");
  AdapterServer server(dir / "enc.sock", [](const Frame& req) { return Frame{req.id + 1, 0, {}}; });
  adapter::Client client(server.path());
  EXPECT_THROW(client.call(Kind::kText, {}), AdapterError);
}

}  // namespace
}  // namespace avatar
