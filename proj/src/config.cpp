#include "avatar/config.hpp"

#include "avatar/error.hpp"
#include "avatar/io_formats.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace avatar {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(trim(tok));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

Eigen::Vector3d to_vec3(const std::string& key, const std::string& v) {
  const std::vector<std::string> parts = split(v, ',');
  if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected x,y,z");
  return {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
}

std::string vec3(const Eigen::Vector3d& v) {
  return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
}

std::string boolean(bool b) { return b ? "true" : "false"; }

struct Entry {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    auto real = [&t](std::string name, std::string help, double TrainConfig::*member) {
      t.push_back({name, help, [member](const TrainConfig& c) { return format_double(c.*member); },
                   [member, name](TrainConfig& c, const std::string& v) { c.*member = to_double(name, v); }});
    };
    auto integer = [&t](std::string name, std::string help, int TrainConfig::*member) {
      t.push_back({name, help, [member](const TrainConfig& c) { return std::to_string(c.*member); },
                   [member, name](TrainConfig& c, const std::string& v) {
                     const long long x = to_int(name, v);
                     if (x < -(1LL << 31) || x >= (1LL << 31)) throw ConfigError("config key '" + name + "': out of range");
                     c.*member = static_cast<int>(x);
                   }});
    };
    auto flag = [&t](std::string name, std::string help, bool TrainConfig::*member) {
      t.push_back({name, help, [member](const TrainConfig& c) { return boolean(c.*member); },
                   [member, name](TrainConfig& c, const std::string& v) { c.*member = to_bool(name, v); }});
    };
    auto custom = [&t](std::string name, std::string help, std::function<std::string(const TrainConfig&)> get,
                       std::function<void(TrainConfig&, const std::string&)> set) {
      t.push_back({name, help, std::move(get), std::move(set)});
    };
    auto sub_real = [&custom](std::string name, std::string help, auto getref) {
      custom(name, help, [getref](const TrainConfig& c) { return format_double(getref(const_cast<TrainConfig&>(c))); },
             [getref, name](TrainConfig& c, const std::string& v) { getref(c) = to_double(name, v); });
    };
    auto sub_int = [&custom](std::string name, std::string help, auto getref) {
      custom(name, help, [getref](const TrainConfig& c) { return std::to_string(getref(const_cast<TrainConfig&>(c))); },
             [getref, name](TrainConfig& c, const std::string& v) { getref(c) = static_cast<int>(to_int(name, v)); });
    };

    sub_real("lambda_mse", "weight of the pixel MSE inside the reconstruction loss",
             [](TrainConfig& c) -> double& { return c.weights.lambda_mse; });
    sub_real("lambda_clip", "weight of the semantic (embedding) loss on novel views",
             [](TrainConfig& c) -> double& { return c.weights.lambda_clip; });
    sub_real("lambda_sil", "weight of the silhouette loss on novel views",
             [](TrainConfig& c) -> double& { return c.weights.lambda_sil; });
    real("p_novel", "probability of sampling a novel view per iteration", &TrainConfig::p_novel);
    integer("patch_size", "training patch side in pixels", &TrainConfig::patch_size);
    integer("t_init", "initialization-stage iterations", &TrainConfig::t_init);
    integer("t_train", "one-shot-stage iterations", &TrainConfig::t_train);
    custom(
        "part_probs", "part sampling weights as id:p pairs, or auto (whole body 0.5, rest uniform)",
        [](const TrainConfig& c) {
          if (c.part_probs.empty()) return std::string("auto");
          std::string s;
          for (const auto& [k, p] : c.part_probs) s += (s.empty() ? "" : ",") + std::to_string(k) + ":" + format_double(p);
          return s;
        },
        [](TrainConfig& c, const std::string& v) {
          c.part_probs.clear();
          if (v == "auto") return;
          for (const std::string& item : split(v, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("config key 'part_probs': expected id:p, got '" + item + "'");
            const int id = static_cast<int>(to_int("part_probs", trim(item.substr(0, colon))));
            c.part_probs[id] = to_double("part_probs", trim(item.substr(colon + 1)));
          }
        });
    sub_int("rig_count", "number of rig cameras", [](TrainConfig& c) -> int& { return c.rig.count; });
    sub_real("rig_radius", "rig circle radius in meters", [](TrainConfig& c) -> double& { return c.rig.radius; });
    sub_real("rig_height", "rig camera height above the center in meters",
             [](TrainConfig& c) -> double& { return c.rig.height; });
    custom(
        "rig_center", "point the rig looks at, x,y,z meters", [](const TrainConfig& c) { return vec3(c.rig.center); },
        [](TrainConfig& c, const std::string& v) { c.rig.center = to_vec3("rig_center", v); });
    sub_real("rig_focal", "rig focal length in pixels", [](TrainConfig& c) -> double& { return c.rig.focal; });
    sub_int("rig_width", "rig image width in pixels", [](TrainConfig& c) -> int& { return c.rig.width; });
    sub_int("rig_image_height", "rig image height in pixels", [](TrainConfig& c) -> int& { return c.rig.height_px; });
    sub_real("input_yaw_deg", "world yaw of the input view in degrees",
             [](TrainConfig& c) -> double& { return c.rig.input_yaw_deg; });
    sub_real("front_max_deg", "front bin: |yaw| below this", [](TrainConfig& c) -> double& {
      return c.rig.bins.front_max_deg;
    });
    sub_real("side_max_deg", "side bin upper bound; rear beyond", [](TrainConfig& c) -> double& {
      return c.rig.bins.side_max_deg;
    });
    custom(
        "seed", "master random seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
        [](TrainConfig& c, const std::string& v) { c.seed = to_u64("seed", v); });
    real("lr", "Adam learning rate", &TrainConfig::lr);
    integer("lr_warmup", "linear warmup iterations", &TrainConfig::lr_warmup);
    real("lr_field_mult", "learning-rate multiplier for field parameters", &TrainConfig::lr_field_mult);
    real("lr_residual_mult", "learning-rate multiplier for warp residual parameters", &TrainConfig::lr_residual_mult);
    real("adam_beta1", "Adam first-moment decay", &TrainConfig::adam_beta1);
    real("adam_beta2", "Adam second-moment decay", &TrainConfig::adam_beta2);
    real("adam_eps", "Adam denominator epsilon", &TrainConfig::adam_eps);
    sub_int("field_num_freqs", "positional-encoding frequencies", [](TrainConfig& c) -> int& {
      return c.field.num_freqs;
    });
    sub_int("field_width", "field hidden width", [](TrainConfig& c) -> int& { return c.field.width; });
    sub_int("field_depth", "field hidden layers", [](TrainConfig& c) -> int& { return c.field.depth; });
    sub_int("field_skip", "hidden layer receiving the input again (-1 for none)",
            [](TrainConfig& c) -> int& { return c.field.skip; });
    flag("use_residual", "enable the learnable warp residual", &TrainConfig::use_residual);
    sub_int("residual_num_freqs", "residual positional-encoding frequencies",
            [](TrainConfig& c) -> int& { return c.residual.num_freqs; });
    sub_int("residual_width", "residual hidden width", [](TrainConfig& c) -> int& { return c.residual.width; });
    sub_int("residual_depth", "residual hidden layers", [](TrainConfig& c) -> int& { return c.residual.depth; });
    integer("knn", "nearest body vertices blended by the warp", &TrainConfig::knn);
    integer("samples_per_ray", "volume-rendering samples per ray", &TrainConfig::samples_per_ray);
    real("box_margin", "ray-bound box dilation in meters", &TrainConfig::box_margin);
    custom(
        "background", "background color r,g,b", [](const TrainConfig& c) { return vec3(c.background); },
        [](TrainConfig& c, const std::string& v) { c.background = to_vec3("background", v); });
    flag("stratified", "jitter samples during training", &TrainConfig::stratified);
    custom(
        "chamfer_mode", "silhouette Chamfer domain: literal or boundary_band",
        [](const TrainConfig& c) {
          return std::string(c.silhouette.mode == ChamferMode::kLiteral ? "literal" : "boundary_band");
        },
        [](TrainConfig& c, const std::string& v) {
          if (v == "literal") c.silhouette.mode = ChamferMode::kLiteral;
          else if (v == "boundary_band") c.silhouette.mode = ChamferMode::kBoundaryBand;
          else throw ConfigError("config key 'chamfer_mode': expected literal or boundary_band, got '" + v + "'");
        });
    sub_real("chamfer_band", "boundary band width in pixels", [](TrainConfig& c) -> double& {
      return c.silhouette.band;
    });
    custom(
        "edge_connectivity", "mask edge neighborhood: 4 or 8",
        [](const TrainConfig& c) { return std::to_string(static_cast<int>(c.silhouette.connectivity)); },
        [](TrainConfig& c, const std::string& v) {
          if (v == "4") c.silhouette.connectivity = EdgeConnectivity::kFour;
          else if (v == "8") c.silhouette.connectivity = EdgeConnectivity::kEight;
          else throw ConfigError("config key 'edge_connectivity': expected 4 or 8, got '" + v + "'");
        });
    flag("front_ref_for_all_side_parts", "use front references for every part in side views, not only the head",
         &TrainConfig::front_ref_for_all_side_parts);
    custom(
        "text_prompt", "optional text guidance for novel views (empty disables)",
        [](const TrainConfig& c) { return c.text_prompt; }, [](TrainConfig& c, const std::string& v) { c.text_prompt = v; });
    real("text_weight", "weight of the text reference when a prompt is set", &TrainConfig::text_weight);
    integer("camera_retries", "camera redraws when no part is visible", &TrainConfig::camera_retries);
    custom(
        "embedder", "semantic encoder: mock or external",
        [](const TrainConfig& c) { return std::string(c.embedder.kind == EmbedderKind::kMock ? "mock" : "external"); },
        [](TrainConfig& c, const std::string& v) {
          if (v == "mock") c.embedder.kind = EmbedderKind::kMock;
          else if (v == "external") c.embedder.kind = EmbedderKind::kExternal;
          else throw ConfigError("config key 'embedder': expected mock or external, got '" + v + "'");
        });
    custom(
        "embedder_adapter", "Unix socket of the external encoder",
        [](const TrainConfig& c) { return c.embedder.adapter; },
        [](TrainConfig& c, const std::string& v) { c.embedder.adapter = v; });
    custom(
        "embedder_model", "name of the external encoder", [](const TrainConfig& c) { return c.embedder.model; },
        [](TrainConfig& c, const std::string& v) { c.embedder.model = v; });
    sub_int("embedder_resolution", "mock encoder working resolution", [](TrainConfig& c) -> int& {
      return c.embedder.resolution;
    });
    sub_int("embedder_dim", "mock encoder embedding dimension", [](TrainConfig& c) -> int& { return c.embedder.dim; });
    custom(
        "embedder_seed", "mock encoder projection seed", [](const TrainConfig& c) { return std::to_string(c.embedder.seed); },
        [](TrainConfig& c, const std::string& v) { c.embedder.seed = to_u64("embedder_seed", v); });
    custom(
        "perceptual", "perceptual metric: builtin or adapter", [](const TrainConfig& c) { return c.perceptual; },
        [](TrainConfig& c, const std::string& v) {
          if (v != "builtin" && v != "adapter") {
            throw ConfigError("config key 'perceptual': expected builtin or adapter, got '" + v + "'");
          }
          c.perceptual = v;
        });
    custom(
        "perceptual_adapter", "Unix socket of the external perceptual metric",
        [](const TrainConfig& c) { return c.perceptual_adapter; },
        [](TrainConfig& c, const std::string& v) { c.perceptual_adapter = v; });
    custom(
        "ablations", "comma list of no_init, no_semantic, no_geometry, hard_geometry, no_hybrid_sampling, "
                     "input_pose_only (or none)",
        [](const TrainConfig& c) {
          if (c.ablations.empty()) return std::string("none");
          std::string s;
          for (Ablation a : c.ablations) s += (s.empty() ? "" : ",") + std::string(to_string(a));
          return s;
        },
        [](TrainConfig& c, const std::string& v) {
          c.ablations.clear();
          if (v == "none" || v.empty()) return;
          for (const std::string& name : split(v, ',')) c.ablations.insert(parse_ablation(name));
        });
    integer("checkpoint_interval", "iterations between checkpoints (0: final only)", &TrainConfig::checkpoint_interval);
    integer("snapshot_interval", "iterations between image snapshots (0: off)", &TrainConfig::snapshot_interval);
    return t;
  }();
  return table;
}

}  // namespace

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kNoInit: return "no_init";
    case Ablation::kNoSemantic: return "no_semantic";
    case Ablation::kNoGeometry: return "no_geometry";
    case Ablation::kHardGeometry: return "hard_geometry";
    case Ablation::kNoHybridSampling: return "no_hybrid_sampling";
    case Ablation::kInputPoseOnly: return "input_pose_only";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::kNoInit, Ablation::kNoSemantic, Ablation::kNoGeometry, Ablation::kHardGeometry,
                     Ablation::kNoHybridSampling, Ablation::kInputPoseOnly}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation '" + std::string(name) + "'");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.patch_size = 64;
  c.t_init = 500;
  c.t_train = 1000;
  c.field = FieldArch::desk();
  c.rig.width = 64;
  c.rig.height_px = 64;
  c.rig.focal = 150.0;
  c.samples_per_ray = 32;
  c.lr = 5e-3;
  return c;
}

RenderSettings TrainConfig::render_settings(bool training) const {
  RenderSettings s;
  s.samples_per_ray = samples_per_ray;
  s.bounds = BoundsPolicy::kBodyBox;
  s.box_margin = box_margin;
  s.background = background;
  s.stratified = training && stratified;
  s.seed = seed;
  return s;
}

std::map<int, double> default_part_probs(int num_parts) {
  std::map<int, double> p;
  p[kWholeBody] = 0.5;
  for (int k = 1; k <= num_parts; ++k) p[k] = 0.5 / num_parts;
  return p;
}

void validate(const TrainConfig& c) {
  auto nonneg = [](const char* key, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("config key '") + key + "' must be finite and >= 0");
  };
  nonneg("lambda_mse", c.weights.lambda_mse);
  nonneg("lambda_clip", c.weights.lambda_clip);
  nonneg("lambda_sil", c.weights.lambda_sil);
  if (!(c.p_novel >= 0.0 && c.p_novel <= 1.0)) throw ConfigError("config key 'p_novel' must be in [0,1]");
  if (c.patch_size < 1) throw ConfigError("config key 'patch_size' must be positive");
  if (c.t_init < 0) throw ConfigError("config key 't_init' must be >= 0");
  if (c.t_train < 0) throw ConfigError("config key 't_train' must be >= 0");
  if (!c.part_probs.empty()) {
    double sum = 0.0;
    for (const auto& [k, p] : c.part_probs) {
      if (k < 0) throw ConfigError("config key 'part_probs': negative part id");
      if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("config key 'part_probs': probabilities must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("config key 'part_probs' must sum to 1, got " + format_double(sum));
  }
  if (c.rig.count < 4) throw ConfigError("config key 'rig_count' must be at least 4");
  if (!(c.rig.radius > 0.0)) throw ConfigError("config key 'rig_radius' must be positive");
  if (!(c.rig.focal > 0.0)) throw ConfigError("config key 'rig_focal' must be positive");
  if (c.rig.width < 1 || c.rig.height_px < 1) throw ConfigError("rig image size must be positive");
  if (!(c.rig.bins.front_max_deg > 0.0 && c.rig.bins.front_max_deg <= c.rig.bins.side_max_deg &&
        c.rig.bins.side_max_deg <= 180.0)) {
    throw ConfigError("config keys 'front_max_deg'/'side_max_deg' must satisfy 0 < front <= side <= 180");
  }
  if (!(c.lr > 0.0)) throw ConfigError("config key 'lr' must be positive");
  if (c.lr_warmup < 0) throw ConfigError("config key 'lr_warmup' must be >= 0");
  nonneg("lr_field_mult", c.lr_field_mult);
  nonneg("lr_residual_mult", c.lr_residual_mult);
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("config key 'adam_beta1' must be in [0,1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("config key 'adam_beta2' must be in [0,1)");
  if (!(c.adam_eps > 0.0)) throw ConfigError("config key 'adam_eps' must be positive");
  if (c.field.num_freqs < 0 || c.field.width < 1 || c.field.depth < 1) throw ConfigError("invalid field architecture");
  if (c.residual.num_freqs < 0 || c.residual.width < 1 || c.residual.depth < 1) {
    throw ConfigError("invalid residual architecture");
  }
  if (c.knn < 1 || c.knn > 63) throw ConfigError("config key 'knn' must be in [1,63]");
  if (c.samples_per_ray < 2) throw ConfigError("config key 'samples_per_ray' must be at least 2");
  nonneg("box_margin", c.box_margin);
  nonneg("chamfer_band", c.silhouette.band);
  if (!(c.text_weight >= 0.0 && c.text_weight <= 1.0)) throw ConfigError("config key 'text_weight' must be in [0,1]");
  if (c.camera_retries < 1) throw ConfigError("config key 'camera_retries' must be positive");
  if (c.embedder.kind == EmbedderKind::kExternal && c.embedder.adapter.empty()) {
    throw ConfigError("config key 'embedder_adapter' is required when embedder = external");
  }
  if (c.embedder.resolution < 4 || c.embedder.resolution % 4 != 0) {
    throw ConfigError("config key 'embedder_resolution' must be a positive multiple of 4");
  }
  if (c.embedder.dim < 1) throw ConfigError("config key 'embedder_dim' must be positive");
  if (c.perceptual == "adapter" && c.perceptual_adapter.empty()) {
    throw ConfigError("config key 'perceptual_adapter' is required when perceptual = adapter");
  }
  if (c.checkpoint_interval < 0) throw ConfigError("config key 'checkpoint_interval' must be >= 0");
  if (c.snapshot_interval < 0) throw ConfigError("config key 'snapshot_interval' must be >= 0");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const Entry& e : entries()) k.push_back({e.name, e.help});
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (e.name == key) {
      e.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  for (const Entry& e : entries()) {
    if (e.name == key) return e.get(config);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  validate(base);
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& config) {
  std::string s;
  for (const Entry& e : entries()) s += e.name + " = " + e.get(config) + "\n";
  return s;
}

void save_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << format_config(config);
}

}  // namespace avatar
