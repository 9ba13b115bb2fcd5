#pragma once

#include "avatar/body_model.hpp"
#include "avatar/cameras.hpp"
#include "avatar/config.hpp"
#include "avatar/io_formats.hpp"
#include "avatar/losses.hpp"
#include "avatar/random.hpp"
#include "avatar/renderer.hpp"

#include <map>
#include <memory>
#include <string>
#include <utility>

namespace avatar {

/// The single observed view: pose θ_s and camera e_s.
struct InputView {
  PoseParams pose;
  Camera camera;
};

inline constexpr int kInputPose = -1;
inline constexpr int kInputCamera = -1;

enum class ReferenceKind { kInputCrop, kRenderedView };

struct Reference {
  ReferenceKind kind = ReferenceKind::kInputCrop;
  int camera = kInputCamera;  // rig index for kRenderedView
  PixelRect bbox;             // in the input image, or in the reference camera's image
  bool with_text = false;     // mix in the configured text prompt
};

struct TrainingView {
  Branch branch = Branch::kInputView;
  int pose = kInputPose;        // motion frame, or kInputPose
  int rig_camera = kInputCamera;
  Camera camera;                // patch-adjusted training camera
  int part = kWholeBody;
  PixelRect bbox;               // part bbox in the unadjusted camera
  Reference reference;
};

/// Rasterized part maps per (pose, camera), built on first use.
class SegmentationCache {
 public:
  SegmentationCache(std::shared_ptr<const SkinnedBodyModel> model, BodyShapeParams shape, InputView input,
                    MotionSequence motion, CameraRig rig);

  const SegmentationMap& get(int pose, int camera);
  PosedMesh mesh(int pose) const;
  const PoseParams& pose_params(int pose) const;
  const Camera& camera(int camera) const;
  const CameraRig& rig() const { return rig_; }
  const MotionSequence& motion() const { return motion_; }
  const InputView& input() const { return input_; }
  const SkinnedBodyModel& model() const { return *model_; }
  const BodyShapeParams& shape() const { return shape_; }

 private:
  std::shared_ptr<const SkinnedBodyModel> model_;
  BodyShapeParams shape_;
  InputView input_;
  MotionSequence motion_;
  CameraRig rig_;
  std::map<std::pair<int, int>, SegmentationMap> cache_;
};

/// Index of the rig camera in `wanted` orientations with the smallest
/// absolute yaw difference to camera `from`; ties go to side_left, then to
/// the lower index.
int nearest_camera(const CameraRig& rig, int from, bool (*wanted)(Orientation));

/// Hybrid view sampler. Owns its RNG stream; draws are sequential.
class Sampler {
 public:
  Sampler(const TrainConfig& config, SegmentationCache& cache);

  TrainingView draw();

  std::string rng_state() const;
  void set_rng_state(const std::string& state);
  Rng& rng() { return rng_; }
  const std::map<int, double>& part_probs() const { return part_probs_; }

 private:
  TrainingView input_view();
  int draw_part();

  const TrainConfig& config_;
  SegmentationCache& cache_;
  std::map<int, double> part_probs_;
  Rng rng_;
};

/// Builds the supervision image for a training view. Input crops are taken
/// from `input` with bilinear resampling; rendered views use the given
/// parameter snapshot and never record gradients.
ImageBuffer reference_patch(const Reference& ref, const ImageBuffer& input, const FieldParams& snapshot,
                            const WarpField& warp, const PoseCondition& pose, const CameraRig& rig,
                            const RenderSettings& settings, int patch);

}  // namespace avatar
