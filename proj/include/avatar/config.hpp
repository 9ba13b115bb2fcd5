#pragma once

#include "avatar/cameras.hpp"
#include "avatar/losses.hpp"
#include "avatar/motion_field.hpp"
#include "avatar/neural_field.hpp"
#include "avatar/renderer.hpp"
#include "avatar/semantic_embedder.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace avatar {

enum class Ablation {
  kNoInit,            // skip the template-mesh initialization stage
  kNoSemantic,        // drop the embedding loss from novel views
  kNoGeometry,        // drop the silhouette loss
  kHardGeometry,      // additionally penalize alpha outside the body silhouette
  kNoHybridSampling,  // novel views use whole-body renders with input-crop references only
  kInputPoseOnly,     // novel views keep the input pose
};

std::string_view to_string(Ablation a);
/// Throws ConfigError for an unknown name.
Ablation parse_ablation(std::string_view name);

struct TrainConfig {
  LossWeights weights;
  double p_novel = 0.5;
  int patch_size = 224;
  int t_init = 15000;
  int t_train = 20000;
  // part id -> probability; empty selects whole body 0.5 and the rest uniform over the model's parts
  std::map<int, double> part_probs;
  RigSpec rig;
  std::uint64_t seed = 0;

  double lr = 5e-4;
  int lr_warmup = 0;
  double lr_field_mult = 1.0;
  double lr_residual_mult = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  FieldArch field;
  ResidualArch residual;
  bool use_residual = false;
  int knn = 8;

  int samples_per_ray = 64;
  double box_margin = 0.15;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  bool stratified = true;

  SilhouetteOptions silhouette;
  bool front_ref_for_all_side_parts = false;
  std::string text_prompt;
  double text_weight = 0.5;
  int camera_retries = 32;

  EmbedderSpec embedder;
  std::string perceptual = "builtin";  // builtin | adapter
  std::string perceptual_adapter;

  std::set<Ablation> ablations;
  int checkpoint_interval = 0;  // iterations; 0 writes only the final checkpoint
  int snapshot_interval = 0;    // iterations; 0 disables image snapshots

  /// Desk-scale preset: 64×64 views, patch 64, small field.
  static TrainConfig desk();

  bool has(Ablation a) const { return ablations.count(a) > 0; }
  RenderSettings render_settings(bool training) const;
};

/// Throws ConfigError naming the offending key.
void validate(const TrainConfig& config);

/// Default part probabilities for a model with parts 1..num_parts.
std::map<int, double> default_part_probs(int num_parts);

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every recognised key, in file order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` text; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
/// Applies one key; throws ConfigError for unknown keys or bad values.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);
std::string format_config(const TrainConfig& config);
void save_config(const TrainConfig& config, const std::filesystem::path& path);

}  // namespace avatar
