#include "avatar/sampling.hpp"

#include "avatar/error.hpp"
#include "avatar/rasterizer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace avatar {
namespace {

double yaw_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

bool is_front(Orientation o) { return o == Orientation::kFront; }

PixelRect full_image(const Camera& c) { return {0, 0, c.width - 1, c.height - 1}; }

}  // namespace

SegmentationCache::SegmentationCache(std::shared_ptr<const SkinnedBodyModel> model, BodyShapeParams shape,
                                     InputView input, MotionSequence motion, CameraRig rig)
    : model_(std::move(model)),
      shape_(shape),
      input_(std::move(input)),
      motion_(std::move(motion)),
      rig_(std::move(rig)) {
  if (!model_) throw std::invalid_argument("segmentation cache needs a body model");
  if (motion_.frames.empty()) throw std::invalid_argument("motion sequence is empty");
  if (rig_.cameras.empty()) throw std::invalid_argument("camera rig is empty");
}

const PoseParams& SegmentationCache::pose_params(int pose) const {
  if (pose == kInputPose) return input_.pose;
  return motion_.frames.at(static_cast<std::size_t>(pose));
}

const Camera& SegmentationCache::camera(int camera) const {
  if (camera == kInputCamera) return input_.camera;
  return rig_.cameras.at(static_cast<std::size_t>(camera));
}

PosedMesh SegmentationCache::mesh(int pose) const { return forward(*model_, shape_, pose_params(pose)); }

const SegmentationMap& SegmentationCache::get(int pose, int camera) {
  const auto key = std::make_pair(pose, camera);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, rasterize_parts(mesh(pose), model_->faces, this->camera(camera))).first;
  }
  return it->second;
}

int nearest_camera(const CameraRig& rig, int from, bool (*wanted)(Orientation)) {
  int best = -1;
  double best_gap = 0.0;
  for (int i = 0; i < static_cast<int>(rig.cameras.size()); ++i) {
    if (i == from || !wanted(rig.orientation[i])) continue;
    const double gap = yaw_gap(rig.yaw_deg[i], rig.yaw_deg[from]);
    bool better = best < 0 || gap < best_gap;
    if (!better && gap == best_gap) {
      better = rig.orientation[i] == Orientation::kSideLeft && rig.orientation[best] != Orientation::kSideLeft;
    }
    if (better) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

Sampler::Sampler(const TrainConfig& config, SegmentationCache& cache)
    : config_(config),
      cache_(cache),
      part_probs_(config.part_probs.empty() ? default_part_probs(cache.model().num_parts()) : config.part_probs),
      rng_(mix64(config.seed ^ 0x5a3b1e55ULL)) {}

std::string Sampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void Sampler::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw std::invalid_argument("bad sampler RNG state");
}

int Sampler::draw_part() {
  const double u = uniform01(rng_);
  double acc = 0.0;
  int last = kWholeBody;
  for (const auto& [part, p] : part_probs_) {
    if (p <= 0.0) continue;
    acc += p;
    last = part;
    if (u < acc) return part;
  }
  return last;
}

TrainingView Sampler::input_view() {
  TrainingView v;
  v.branch = Branch::kInputView;
  v.pose = kInputPose;
  v.rig_camera = kInputCamera;
  v.camera = cache_.input().camera;
  v.part = kWholeBody;
  v.bbox = full_image(v.camera);
  v.reference.kind = ReferenceKind::kInputCrop;
  v.reference.bbox = v.bbox;
  return v;
}

TrainingView Sampler::draw() {
  if (uniform01(rng_) >= config_.p_novel) return input_view();

  const CameraRig& rig = cache_.rig();
  const bool hybrid = !config_.has(Ablation::kNoHybridSampling);
  TrainingView v;
  v.branch = Branch::kNovelView;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= config_.camera_retries) {
      throw ConfigError("no body part visible after " + std::to_string(config_.camera_retries) + " camera draws");
    }
    v.pose = config_.has(Ablation::kInputPoseOnly)
                 ? kInputPose
                 : static_cast<int>(uniform_index(rng_, cache_.motion().frames.size()));
    v.rig_camera = static_cast<int>(uniform_index(rng_, rig.cameras.size()));
    const SegmentationMap& seg = cache_.get(v.pose, v.rig_camera);
    if (!part_bbox(seg, kWholeBody)) continue;
    if (!hybrid) {
      v.part = kWholeBody;
      v.bbox = *part_bbox(seg, kWholeBody);
      break;
    }
    // the whole body is visible, so some part is; resample until one shows
    for (;;) {
      v.part = draw_part();
      if (const auto box = part_bbox(seg, v.part)) {
        v.bbox = *box;
        break;
      }
    }
    break;
  }
  v.camera = part_patch_camera(rig.cameras[v.rig_camera], v.bbox, config_.patch_size);

  const Orientation o = rig.orientation[v.rig_camera];
  int ref_camera = -1;
  if (hybrid && o == Orientation::kRear) {
    ref_camera = nearest_camera(rig, v.rig_camera, is_side);
  } else if (hybrid && is_side(o) && (v.part == kHead || config_.front_ref_for_all_side_parts)) {
    ref_camera = nearest_camera(rig, v.rig_camera, is_front);
  }
  if (ref_camera >= 0) {
    const SegmentationMap& seg = cache_.get(v.pose, ref_camera);
    auto box = part_bbox(seg, v.part);
    if (!box) box = part_bbox(seg, kWholeBody);
    if (box) {
      v.reference.kind = ReferenceKind::kRenderedView;
      v.reference.camera = ref_camera;
      v.reference.bbox = *box;
    } else {
      ref_camera = -1;
    }
  }
  if (ref_camera < 0) {
    const SegmentationMap& seg = cache_.get(kInputPose, kInputCamera);
    auto box = part_bbox(seg, v.part);
    if (!box) box = part_bbox(seg, kWholeBody);
    v.reference.kind = ReferenceKind::kInputCrop;
    v.reference.camera = kInputCamera;
    v.reference.bbox = box ? *box : full_image(cache_.input().camera);
  }
  v.reference.with_text = !config_.text_prompt.empty();
  return v;
}

ImageBuffer reference_patch(const Reference& ref, const ImageBuffer& input, const FieldParams& snapshot,
                            const WarpField& warp, const PoseCondition& pose, const CameraRig& rig,
                            const RenderSettings& settings, int patch) {
  if (ref.kind == ReferenceKind::kInputCrop) {
    if (ref.bbox.width() < 1 || ref.bbox.height() < 1) throw std::invalid_argument("empty bounding box");
    return resample_bilinear(input, square_crop_window(ref.bbox, patch), BorderMode::kConstant, settings.background);
  }
  if (ref.camera < 0 || ref.camera >= static_cast<int>(rig.cameras.size())) {
    throw std::invalid_argument("rendered reference needs a rig camera");
  }
  RenderSettings frozen = settings;
  frozen.stratified = false;
  return render_patch(snapshot, warp, pose, rig.cameras[ref.camera], ref.bbox, patch, frozen);
}

}  // namespace avatar
