#pragma once

#include "avatar/adapter.hpp"
#include "avatar/image.hpp"
#include "avatar/rasterizer.hpp"
#include "avatar/semantic_embedder.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace avatar {

/// Image distance used inside the reconstruction loss and the evaluator.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  /// Distance between a and b; when grad_a is non-null, adds d/d(a) to it.
  virtual double evaluate(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) = 0;
};

/// Mean absolute difference over a Gaussian pyramid: level 0 is the image,
/// each further level blurs with the [1 4 6 4 1]/16 kernel (clamped borders)
/// and keeps every second pixel. The value is the mean over levels.
class PyramidPerceptual final : public PerceptualMetric {
 public:
  explicit PyramidPerceptual(int levels = 3) : levels_(levels) {}
  std::string name() const override { return "builtin-pyramid"; }
  double evaluate(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) override;

 private:
  int levels_;
};

/// Always 0; isolates the MSE term.
class NullPerceptual final : public PerceptualMetric {
 public:
  std::string name() const override { return "none"; }
  double evaluate(const ImageBuffer&, const ImageBuffer&, ImageBuffer*) override { return 0.0; }
};

/// External LPIPS-style metric over the adapter protocol.
class AdapterPerceptual final : public PerceptualMetric {
 public:
  explicit AdapterPerceptual(std::string socket_path) : client_(std::move(socket_path)) {}
  std::string name() const override { return "adapter"; }
  double evaluate(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) override;

 private:
  adapter::Client client_;
};

/// Blur with [1 4 6 4 1]/16 (clamped borders) then keep even pixels.
ImageBuffer pyramid_down(const ImageBuffer& img);
/// Adjoint of pyramid_down.
ImageBuffer pyramid_down_adjoint(const ImageBuffer& grad, int src_width, int src_height);

struct ReconstructionTerms {
  double perceptual = 0.0;
  double mse = 0.0;
  double total = 0.0;
};

/// perceptual(rendered, target) + λ_mse · mean squared error. When grad is
/// non-null it receives d(total)/d(rendered).
ReconstructionTerms reconstruction_loss(const ImageBuffer& rendered, const ImageBuffer& target,
                                        PerceptualMetric& perceptual, double lambda_mse,
                                        ImageBuffer* grad = nullptr);

/// 1 − cos(embed(rendered), reference).
double semantic_loss(Embedder& embedder, const ImageBuffer& rendered, const Embedding& reference,
                     ImageBuffer* grad = nullptr);

struct WeightedReference {
  Embedding embedding;
  double weight = 1.0;
};

/// Σ w_k (1 − cos(embed(rendered), ref_k)); weights must sum to 1.
double semantic_loss(Embedder& embedder, const ImageBuffer& rendered, const std::vector<WeightedReference>& refs,
                     ImageBuffer* grad = nullptr);

enum class ChamferMode { kLiteral, kBoundaryBand };

struct SilhouetteOptions {
  ChamferMode mode = ChamferMode::kBoundaryBand;
  double band = 3.0;  // pixels, boundary_band only
  EdgeConnectivity connectivity = EdgeConnectivity::kFour;
  bool hard = false;  // also penalize alpha outside the mask
};

struct SilhouetteTerms {
  double mse = 0.0;
  double chamfer = 0.0;
  double outside = 0.0;  // only nonzero in hard mode
};

/// Euclidean distance from every pixel to the nearest edge pixel of `mask`.
Grid<double> edge_distance(const SilhouetteMask& mask, EdgeConnectivity connectivity = EdgeConnectivity::kFour);

/// All terms are normalized by |S|. Throws std::invalid_argument("no
/// silhouette") for an empty mask.
SilhouetteTerms silhouette_loss(const AlphaMap& alpha, const SilhouetteMask& mask, const SilhouetteOptions& options);

/// Gradient of w_mse·mse + w_chamfer·(chamfer + outside) with respect to alpha.
AlphaMap silhouette_gradient(const AlphaMap& alpha, const SilhouetteMask& mask, const SilhouetteOptions& options,
                             double w_mse, double w_chamfer);

enum class Branch { kInputView, kNovelView };

std::string_view to_string(Branch b);

struct LossWeights {
  double lambda_mse = 1.0;
  double lambda_clip = 0.1;
  double lambda_sil = 0.01;
};

/// Raw (unweighted) loss terms computed for one iteration; absent terms are
/// inactive.
struct LossTerms {
  std::optional<double> recon_mse;
  std::optional<double> recon_perceptual;
  std::optional<double> semantic;
  std::optional<double> sil_mse;
  std::optional<double> sil_chamfer;
  std::optional<double> sil_outside;
};

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> terms;
  Branch branch = Branch::kInputView;
};

/// input_view: perceptual + λ_mse·mse. novel_view: λ_clip·semantic +
/// λ_sil·(sil_mse + sil_chamfer [+ sil_outside]). Throws
/// std::invalid_argument when the branch's terms are missing.
LossReport combined_loss(Branch branch, const LossTerms& terms, const LossWeights& weights);

}  // namespace avatar
