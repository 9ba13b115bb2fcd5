#pragma once

#include "avatar/adapter.hpp"
#include "avatar/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>

namespace avatar {

/// Unit-length embedding vector.
using Embedding = Eigen::VectorXd;

enum class EmbedderKind { kMock, kExternal };

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::kMock;
  int resolution = 16;  // mock: working resolution; external: informational
  int dim = 64;         // mock only; external dimension comes from the adapter
  std::string adapter;  // Unix socket path for kExternal
  std::string model = "ViT-L/14@224";
  std::uint64_t seed = 0x51a7e5eedULL;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual Embedding embed_image(const ImageBuffer& image) = 0;
  virtual Embedding embed_text(const std::string& prompt) = 0;
  /// d(cotangent · embed_image(image)) / d(image).
  virtual ImageBuffer embed_image_vjp(const ImageBuffer& image, const Eigen::VectorXd& cotangent) = 0;
};

/// Deterministic stand-in encoder. The image is resized bilinearly to
/// resolution², split into a 4×4 grid of cells, and described by the
/// per-channel mean and variance of every cell plus a constant 1. A seeded
/// Gaussian matrix projects these features to `dim` values, which are then
/// normalized. Text maps to a Gaussian vector seeded by the FNV-1a hash of
/// the prompt.
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(const EmbedderSpec& spec);

  std::string name() const override { return "mock"; }
  Embedding embed_image(const ImageBuffer& image) override;
  Embedding embed_text(const std::string& prompt) override;
  ImageBuffer embed_image_vjp(const ImageBuffer& image, const Eigen::VectorXd& cotangent) override;

  static constexpr int kCells = 4;
  static constexpr int kFeatures = kCells * kCells * 3 * 2 + 1;

  Eigen::VectorXd features(const ImageBuffer& image) const;

 private:
  int resolution_;
  std::uint64_t seed_;
  Eigen::MatrixXd projection_;
};

/// Forwards to an out-of-process encoder over the adapter protocol.
class AdapterEmbedder final : public Embedder {
 public:
  explicit AdapterEmbedder(const EmbedderSpec& spec);

  std::string name() const override { return "adapter:" + model_; }
  Embedding embed_image(const ImageBuffer& image) override;
  Embedding embed_text(const std::string& prompt) override;
  ImageBuffer embed_image_vjp(const ImageBuffer& image, const Eigen::VectorXd& cotangent) override;

 private:
  std::string model_;
  adapter::Client client_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

Embedding embed_image(const EmbedderSpec& spec, const ImageBuffer& image);
Embedding embed_text(const EmbedderSpec& spec, const std::string& prompt);

/// 1 − a·b for unit vectors, in [0, 2].
double embedding_distance(const Embedding& a, const Embedding& b);

std::uint64_t fnv1a(std::string_view s);

}  // namespace avatar
