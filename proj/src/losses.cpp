#include "avatar/losses.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace avatar {
namespace {

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

void require_same_size(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_size(b)) {
    throw std::invalid_argument("image size mismatch: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

void require_same_size(const AlphaMap& a, const SilhouetteMask& s) {
  if (!a.same_size(s.width(), s.height())) throw std::invalid_argument("alpha and mask sizes differ");
}

}  // namespace

ImageBuffer pyramid_down(const ImageBuffer& img) {
  const int w = img.width();
  const int h = img.height();
  ImageBuffer out((w + 1) / 2, (h + 1) / 2);
  for (int j = 0; j < out.height(); ++j) {
    for (int i = 0; i < out.width(); ++i) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int b = 0; b < 5; ++b) {
          const int y = std::clamp(2 * j + b - 2, 0, h - 1);
          for (int a = 0; a < 5; ++a) {
            const int x = std::clamp(2 * i + a - 2, 0, w - 1);
            acc += kBinomial[a] * kBinomial[b] * img.at(x, y, c);
          }
        }
        out.at(i, j, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer pyramid_down_adjoint(const ImageBuffer& grad, int w, int h) {
  ImageBuffer out(w, h);
  for (int j = 0; j < grad.height(); ++j) {
    for (int i = 0; i < grad.width(); ++i) {
      for (int b = 0; b < 5; ++b) {
        const int y = std::clamp(2 * j + b - 2, 0, h - 1);
        for (int a = 0; a < 5; ++a) {
          const int x = std::clamp(2 * i + a - 2, 0, w - 1);
          const double k = kBinomial[a] * kBinomial[b];
          for (int c = 0; c < 3; ++c) out.at(x, y, c) += k * grad.at(i, j, c);
        }
      }
    }
  }
  return out;
}

double PyramidPerceptual::evaluate(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) {
  require_same_size(a, b);
  if (levels_ < 1) throw std::invalid_argument("pyramid needs at least one level");
  std::vector<ImageBuffer> pa{a}, pb{b};
  for (int l = 1; l < levels_; ++l) {
    pa.push_back(pyramid_down(pa.back()));
    pb.push_back(pyramid_down(pb.back()));
  }
  double value = 0.0;
  std::vector<ImageBuffer> g;
  for (int l = 0; l < levels_; ++l) {
    const std::vector<double>& da = pa[l].data();
    const std::vector<double>& db = pb[l].data();
    const double n = static_cast<double>(da.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < da.size(); ++k) sum += std::abs(da[k] - db[k]);
    value += sum / n;
    if (grad_a) {
      ImageBuffer gl(pa[l].width(), pa[l].height());
      for (std::size_t k = 0; k < da.size(); ++k) {
        const double d = da[k] - db[k];
        gl.data()[k] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / (n * levels_);
      }
      g.push_back(std::move(gl));
    }
  }
  if (grad_a) {
    if (!grad_a->same_size(a)) *grad_a = ImageBuffer(a.width(), a.height());
    ImageBuffer acc = g.back();
    for (int l = levels_ - 1; l >= 1; --l) {
      acc = pyramid_down_adjoint(acc, pa[l - 1].width(), pa[l - 1].height());
      for (std::size_t k = 0; k < acc.data().size(); ++k) acc.data()[k] += g[l - 1].data()[k];
    }
    for (std::size_t k = 0; k < acc.data().size(); ++k) grad_a->data()[k] += acc.data()[k];
  }
  return value / levels_;
}

double AdapterPerceptual::evaluate(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) {
  require_same_size(a, b);
  adapter::Writer w;
  w.image(a);
  w.image(b);
  const std::vector<std::uint8_t> body = client_.call(adapter::Kind::kPerceptual, w.bytes());
  adapter::Reader r(body);
  const double value = r.f32();
  const ImageBuffer g = r.image();
  if (!g.same_size(a)) throw AdapterError("adapter: perceptual gradient size does not match the image");
  if (!std::isfinite(value)) throw AdapterError("adapter: non-finite perceptual distance");
  if (grad_a) {
    if (!grad_a->same_size(a)) *grad_a = ImageBuffer(a.width(), a.height());
    for (std::size_t k = 0; k < g.data().size(); ++k) grad_a->data()[k] += g.data()[k];
  }
  return value;
}

ReconstructionTerms reconstruction_loss(const ImageBuffer& rendered, const ImageBuffer& target,
                                        PerceptualMetric& perceptual, double lambda_mse, ImageBuffer* grad) {
  require_same_size(rendered, target);
  if (grad && !grad->same_size(rendered)) *grad = ImageBuffer(rendered.width(), rendered.height());
  ReconstructionTerms t;
  t.perceptual = perceptual.evaluate(rendered, target, grad);
  const std::vector<double>& r = rendered.data();
  const std::vector<double>& g = target.data();
  const double n = static_cast<double>(r.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double d = r[k] - g[k];
    sum += d * d;
    if (grad) grad->data()[k] += lambda_mse * 2.0 * d / n;
  }
  t.mse = sum / n;
  t.total = t.perceptual + lambda_mse * t.mse;
  return t;
}

double semantic_loss(Embedder& embedder, const ImageBuffer& rendered, const Embedding& reference, ImageBuffer* grad) {
  return semantic_loss(embedder, rendered, std::vector<WeightedReference>{{reference, 1.0}}, grad);
}

double semantic_loss(Embedder& embedder, const ImageBuffer& rendered, const std::vector<WeightedReference>& refs,
                     ImageBuffer* grad) {
  if (refs.empty()) throw std::invalid_argument("semantic loss needs at least one reference");
  double wsum = 0.0;
  for (const WeightedReference& r : refs) {
    if (!(r.weight >= 0.0)) throw std::invalid_argument("reference weights must be nonnegative");
    wsum += r.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("reference weights must sum to 1");
  const Embedding e = embedder.embed_image(rendered);
  double value = 0.0;
  Eigen::VectorXd cot = Eigen::VectorXd::Zero(e.size());
  for (const WeightedReference& r : refs) {
    value += r.weight * embedding_distance(e, r.embedding);
    cot -= r.weight * r.embedding;
  }
  if (grad) {
    const ImageBuffer g = embedder.embed_image_vjp(rendered, cot);
    if (!grad->same_size(rendered)) *grad = ImageBuffer(rendered.width(), rendered.height());
    for (std::size_t k = 0; k < g.data().size(); ++k) grad->data()[k] += g.data()[k];
  }
  return value;
}

Grid<double> edge_distance(const SilhouetteMask& mask, EdgeConnectivity connectivity) {
  const int w = mask.width();
  const int h = mask.height();
  constexpr std::int64_t kFar = std::int64_t{1} << 40;
  Grid<std::uint8_t> is_edge(w, h, 0);
  for (const Eigen::Vector2i& p : mask_edge(mask, connectivity)) is_edge(p.x(), p.y()) = 1;
  // vertical distance to the nearest edge pixel in the same column
  Grid<std::int64_t> col(w, h, kFar);
  for (int x = 0; x < w; ++x) {
    std::int64_t last = -kFar;
    for (int y = 0; y < h; ++y) {
      if (is_edge(x, y)) last = y;
      col(x, y) = y - last;
    }
    last = kFar;
    for (int y = h - 1; y >= 0; --y) {
      if (is_edge(x, y)) last = y;
      col(x, y) = std::min(col(x, y), last - y);
    }
  }
  Grid<double> out(w, h, std::numeric_limits<double>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (int xe = 0; xe < w; ++xe) {
        const std::int64_t dy = col(xe, y);
        if (dy >= kFar / 2) continue;
        const std::int64_t dx = x - xe;
        best = std::min(best, dx * dx + dy * dy);
      }
      if (best != std::numeric_limits<std::int64_t>::max()) out(x, y) = std::sqrt(static_cast<double>(best));
    }
  }
  return out;
}

SilhouetteTerms silhouette_loss(const AlphaMap& alpha, const SilhouetteMask& mask, const SilhouetteOptions& options) {
  require_same_size(alpha, mask);
  const std::size_t count = std::count_if(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v; });
  if (count == 0) throw std::invalid_argument("no silhouette");
  const Grid<double> dist = edge_distance(mask, options.connectivity);
  const bool literal = options.mode == ChamferMode::kLiteral;
  SilhouetteTerms t;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const double a = alpha(x, y);
      if (mask(x, y)) {
        t.mse += (a - 1.0) * (a - 1.0);
        if (literal || dist(x, y) <= options.band) t.chamfer += a * dist(x, y);
      } else if (options.hard) {
        t.outside += a * dist(x, y);
      }
    }
  }
  const double n = static_cast<double>(count);
  t.mse /= n;
  t.chamfer /= n;
  t.outside /= n;
  return t;
}

AlphaMap silhouette_gradient(const AlphaMap& alpha, const SilhouetteMask& mask, const SilhouetteOptions& options,
                             double w_mse, double w_chamfer) {
  require_same_size(alpha, mask);
  const std::size_t count = std::count_if(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v; });
  if (count == 0) throw std::invalid_argument("no silhouette");
  const Grid<double> dist = edge_distance(mask, options.connectivity);
  const bool literal = options.mode == ChamferMode::kLiteral;
  const double n = static_cast<double>(count);
  AlphaMap g(alpha.width(), alpha.height(), 0.0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        double v = w_mse * 2.0 * (alpha(x, y) - 1.0);
        if (literal || dist(x, y) <= options.band) v += w_chamfer * dist(x, y);
        g(x, y) = v / n;
      } else if (options.hard) {
        g(x, y) = w_chamfer * dist(x, y) / n;
      }
    }
  }
  return g;
}

std::string_view to_string(Branch b) { return b == Branch::kInputView ? "input_view" : "novel_view"; }

LossReport combined_loss(Branch branch, const LossTerms& terms, const LossWeights& w) {
  LossReport r;
  r.branch = branch;
  if (branch == Branch::kInputView) {
    if (!terms.recon_mse || !terms.recon_perceptual) {
      throw std::invalid_argument("input_view loss needs recon_mse and recon_perceptual");
    }
    r.terms["recon_mse"] = *terms.recon_mse;
    r.terms["recon_perceptual"] = *terms.recon_perceptual;
    r.total = *terms.recon_perceptual + w.lambda_mse * *terms.recon_mse;
    return r;
  }
  if (terms.sil_mse.has_value() != terms.sil_chamfer.has_value()) {
    throw std::invalid_argument("novel_view loss needs both sil_mse and sil_chamfer");
  }
  if (!terms.semantic && !terms.sil_mse) throw std::invalid_argument("novel_view loss has no active term");
  if (terms.semantic) {
    r.terms["semantic"] = *terms.semantic;
    r.total += w.lambda_clip * *terms.semantic;
  }
  if (terms.sil_mse) {
    double sil = *terms.sil_mse + *terms.sil_chamfer;
    r.terms["sil_mse"] = *terms.sil_mse;
    r.terms["sil_chamfer"] = *terms.sil_chamfer;
    if (terms.sil_outside) {
      r.terms["sil_outside"] = *terms.sil_outside;
      sil += *terms.sil_outside;
    }
    r.total += w.lambda_sil * sil;
  }
  return r;
}

}  // namespace avatar
