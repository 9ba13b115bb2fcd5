#pragma once

#include "avatar/config.hpp"
#include "avatar/io_formats.hpp"
#include "avatar/losses.hpp"
#include "avatar/motion_field.hpp"
#include "avatar/neural_field.hpp"
#include "avatar/renderer.hpp"
#include "avatar/sampling.hpp"
#include "avatar/semantic_embedder.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace avatar {

enum class Stage { kInit, kOneShot, kDone };

std::string_view to_string(Stage s);

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;  // accepted updates, drives bias correction and warmup
};

struct LossEntry {
  std::int64_t iteration = 0;
  double total = 0.0;
};

struct TrainState {
  FieldParams field;
  std::vector<double> residual;
  AdamMoments moments;
  std::int64_t iteration = 0;
  Stage stage = Stage::kInit;
  std::string init_rng;
  std::string sampler_rng;
  std::deque<LossEntry> history;  // most recent kHistory losses
  std::int64_t incidents = 0;

  static constexpr std::size_t kHistory = 1024;

  std::size_t parameter_count() const { return field.values.size() + residual.size(); }
};

struct OptimizerSettings {
  double lr = 5e-4;
  int warmup = 0;
  double field_mult = 1.0;
  double residual_mult = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerSettings optimizer_settings(const TrainConfig& config);

struct StepResult {
  bool accepted = true;
  std::string incident;
};

/// Adam update of [field | residual]. Always advances the iteration counter;
/// a non-finite gradient or update leaves params and moments untouched.
StepResult step(TrainState& state, std::span<const double> gradient, const OptimizerSettings& opt);

struct IterationLog {
  std::int64_t iteration = 0;
  Stage stage = Stage::kInit;
  Branch branch = Branch::kInputView;
  int part = kWholeBody;
  int pose = kInputPose;
  int camera = kInputCamera;
  std::optional<ReferenceKind> reference;
  LossReport report;
  bool accepted = true;
  std::string incident;
};

/// One JSON object per line; doubles in shortest round-trip form.
std::string format_log_line(const IterationLog& log);

struct Checkpoint {
  TrainState state;
  int knn = 8;
  bool use_residual = false;
  ResidualArch residual_arch;
  std::string body_model;  // archive path, or empty for an in-memory model
  BodyShapeParams shape;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws AssetError for a bad magic, an unsupported version, or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainingAssets {
  std::shared_ptr<const SkinnedBodyModel> model;
  std::string model_path;
  BodyShapeParams shape;
  MotionSequence motion;
  InputView input;
  ImageBuffer image;
  SilhouetteMask mask;
};

/// Perceptual metric selected by the config ("builtin" or "adapter").
std::unique_ptr<PerceptualMetric> make_perceptual(const TrainConfig& config);

using LogFn = std::function<void(const IterationLog&)>;
/// Called with the full gradient before each update.
using GradientHook = std::function<void(std::span<double>)>;

/// Owns the training state and drives both stages.
class Trainer {
 public:
  Trainer(TrainConfig config, TrainingAssets assets, std::unique_ptr<Embedder> embedder,
          std::unique_ptr<PerceptualMetric> perceptual);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  const WarpField& warp() const { return warp_; }
  SegmentationCache& segmentation() { return cache_; }
  Sampler& sampler() { return sampler_; }

  std::int64_t init_iterations() const;
  std::int64_t total_iterations() const;

  /// One iteration of whichever stage the counter falls in.
  IterationLog iterate();
  /// Iterates until the init stage is over; only flips the stage flag when
  /// it has no iterations.
  void run_init_stage(const LogFn& log = {});
  void run_oneshot_stage(const LogFn& log = {});
  /// Iterates to the end, or until the counter reaches stop_at.
  void run(const LogFn& log = {}, std::int64_t stop_at = -1);

  Checkpoint checkpoint() const;
  /// Replaces the state; the checkpoint must match this trainer's setup.
  void restore(const Checkpoint& ckpt);

  void set_gradient_hook(GradientHook hook) { hook_ = std::move(hook); }

  /// Input image with everything outside the mask set to the background.
  const ImageBuffer& input_target() const { return target_; }
  RenderOutput render_view(int pose, const Camera& camera) const;
  RenderOutput render_input_view() const;
  /// Input-view PSNR over the subject bbox.
  double input_psnr() const;
  /// Mean IoU of alpha > 0.5 against the body silhouette over the rig views.
  double silhouette_iou(int pose) const;

 private:
  IterationLog init_iteration();
  IterationLog oneshot_iteration();
  IterationLog finish(IterationLog log, const LossTerms& terms, std::vector<double>& grad);
  const PoseCondition& condition(int pose) const;
  const Embedding& input_crop_embedding(const Reference& ref);
  void sync_stage();

  TrainConfig config_;
  TrainingAssets assets_;
  std::unique_ptr<Embedder> embedder_;
  std::unique_ptr<PerceptualMetric> perceptual_;
  OptimizerSettings optimizer_;
  WarpField warp_;
  SegmentationCache cache_;
  Sampler sampler_;
  Rng init_rng_;
  TrainState state_;
  ImageBuffer target_;
  PoseCondition input_condition_;
  std::vector<PoseCondition> conditions_;
  std::map<std::pair<int, int>, ImageBuffer> init_targets_;
  std::map<std::tuple<int, int, int>, SilhouetteMask> silhouettes_;
  std::map<std::tuple<int, int, int, int, int>, Embedding> crop_embeddings_;
  std::optional<Embedding> text_embedding_;
  GradientHook hook_;
};

}  // namespace avatar
