#include "avatar/semantic_embedder.hpp"

#include "avatar/error.hpp"
#include "avatar/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avatar {
namespace {

Embedding normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("embedding has zero or non-finite norm");
  return v / n;
}

Embedding read_embedding(std::span<const std::uint8_t> body) {
  adapter::Reader r(body);
  const std::uint32_t d = r.u32();
  if (d == 0 || d > 65536) throw AdapterError("adapter: bad embedding dimension");
  const std::vector<double> v = r.f32_array(d);
  if (!r.done()) throw AdapterError("adapter: trailing bytes after embedding");
  return normalized(Eigen::Map<const Eigen::VectorXd>(v.data(), d));
}

}  // namespace

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MockEmbedder::MockEmbedder(const EmbedderSpec& spec) : resolution_(spec.resolution), seed_(spec.seed) {
  if (spec.resolution <= 0 || spec.resolution % kCells != 0) {
    throw std::invalid_argument("mock embedder resolution must be a positive multiple of 4");
  }
  if (spec.dim <= 0) throw std::invalid_argument("embedding dimension must be positive");
  Rng rng(seed_);
  projection_.resize(spec.dim, kFeatures);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kFeatures));
  for (int r = 0; r < spec.dim; ++r) {
    for (int c = 0; c < kFeatures; ++c) projection_(r, c) = scale * standard_normal(rng);
  }
}

Eigen::VectorXd MockEmbedder::features(const ImageBuffer& image) const {
  if (image.empty()) throw std::invalid_argument("cannot embed an empty image");
  const ImageBuffer small = resize_bilinear(image, resolution_, resolution_);
  const int cell = resolution_ / kCells;
  const double count = cell * cell;
  Eigen::VectorXd f(kFeatures);
  for (int cy = 0; cy < kCells; ++cy) {
    for (int cx = 0; cx < kCells; ++cx) {
      for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int y = 0; y < cell; ++y) {
          for (int x = 0; x < cell; ++x) mean += small.at(cx * cell + x, cy * cell + y, c);
        }
        mean /= count;
        double var = 0.0;
        for (int y = 0; y < cell; ++y) {
          for (int x = 0; x < cell; ++x) {
            const double d = small.at(cx * cell + x, cy * cell + y, c) - mean;
            var += d * d;
          }
        }
        const int k = ((cy * kCells + cx) * 3 + c) * 2;
        f[k] = mean;
        f[k + 1] = var / count;
      }
    }
  }
  f[kFeatures - 1] = 1.0;
  return f;
}

Embedding MockEmbedder::embed_image(const ImageBuffer& image) { return normalized(projection_ * features(image)); }

Embedding MockEmbedder::embed_text(const std::string& prompt) {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  Rng rng(seed_ ^ fnv1a(prompt));
  Eigen::VectorXd v(projection_.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = standard_normal(rng);
  return normalized(v);
}

ImageBuffer MockEmbedder::embed_image_vjp(const ImageBuffer& image, const Eigen::VectorXd& cotangent) {
  if (cotangent.size() != projection_.rows()) throw std::invalid_argument("cotangent dimension mismatch");
  const Eigen::VectorXd f = features(image);
  const Eigen::VectorXd z = projection_ * f;
  const double n = z.norm();
  const Eigen::VectorXd e = z / n;
  const Eigen::VectorXd gz = (cotangent - e * e.dot(cotangent)) / n;
  const Eigen::VectorXd gf = projection_.transpose() * gz;

  const ImageBuffer small = resize_bilinear(image, resolution_, resolution_);
  ImageBuffer g_small(resolution_, resolution_);
  const int cell = resolution_ / kCells;
  const double count = cell * cell;
  for (int cy = 0; cy < kCells; ++cy) {
    for (int cx = 0; cx < kCells; ++cx) {
      for (int c = 0; c < 3; ++c) {
        const int k = ((cy * kCells + cx) * 3 + c) * 2;
        const double mean = f[k];
        for (int y = 0; y < cell; ++y) {
          for (int x = 0; x < cell; ++x) {
            const int px = cx * cell + x;
            const int py = cy * cell + y;
            // d var / d v = 2 (v − mean) / count; the mean's own dependence cancels
            g_small.at(px, py, c) = gf[k] / count + gf[k + 1] * 2.0 * (small.at(px, py, c) - mean) / count;
          }
        }
      }
    }
  }
  return resample_bilinear_backward(g_small, image.width(), image.height(),
                                    resize_window(image.width(), image.height(), resolution_, resolution_),
                                    BorderMode::kClamp);
}

AdapterEmbedder::AdapterEmbedder(const EmbedderSpec& spec) : model_(spec.model), client_(spec.adapter) {}

Embedding AdapterEmbedder::embed_image(const ImageBuffer& image) {
  adapter::Writer w;
  w.image(image);
  return read_embedding(client_.call(adapter::Kind::kImage, w.bytes()));
}

Embedding AdapterEmbedder::embed_text(const std::string& prompt) {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  adapter::Writer w;
  w.u32(static_cast<std::uint32_t>(prompt.size()));
  w.raw(prompt);
  return read_embedding(client_.call(adapter::Kind::kText, w.bytes()));
}

ImageBuffer AdapterEmbedder::embed_image_vjp(const ImageBuffer& image, const Eigen::VectorXd& cotangent) {
  adapter::Writer w;
  w.image(image);
  w.u32(static_cast<std::uint32_t>(cotangent.size()));
  w.f32_array(std::span<const double>(cotangent.data(), cotangent.size()));
  const std::vector<std::uint8_t> body = client_.call(adapter::Kind::kImageVjp, w.bytes());
  adapter::Reader r(body);
  ImageBuffer g = r.image();
  if (!g.same_size(image)) throw AdapterError("adapter: gradient size does not match the image");
  return g;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
  if (spec.kind == EmbedderKind::kMock) return std::make_unique<MockEmbedder>(spec);
  if (spec.adapter.empty()) throw ConfigError("external embedder requires an adapter socket path");
  return std::make_unique<AdapterEmbedder>(spec);
}

Embedding embed_image(const EmbedderSpec& spec, const ImageBuffer& image) {
  return make_embedder(spec)->embed_image(image);
}

Embedding embed_text(const EmbedderSpec& spec, const std::string& prompt) {
  return make_embedder(spec)->embed_text(prompt);
}

double embedding_distance(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding dimension mismatch");
  return std::clamp(1.0 - a.dot(b), 0.0, 2.0);
}

}  // namespace avatar
