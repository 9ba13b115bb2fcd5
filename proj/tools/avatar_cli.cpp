#include "avatar/config.hpp"
#include "avatar/error.hpp"
#include "avatar/evaluator.hpp"
#include "avatar/fixture.hpp"
#include "avatar/io_formats.hpp"
#include "avatar/renderer.hpp"
#include "avatar/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace avatar;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// One run per output directory. A lock left by a dead process is reclaimed.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        held_ = true;
        return;
      }
      if (errno != EEXIST) throw AssetError("cannot create lock file '" + path_.string() + "'");
      if (!stale()) break;
      fs::remove(path_);
    }
    throw ConfigError("output directory '" + dir.string() + "' is in use by another run (" + path_.string() + ")");
  }
  ~RunLock() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  bool stale() const {
    std::ifstream in(path_);
    long pid = 0;
    if (!(in >> pid) || pid <= 0) return true;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
  }
  fs::path path_;
  bool held_ = false;
};

std::string config_key_help() {
  const TrainConfig defaults;
  std::ostringstream os;
  os << "\nConfig keys (key = default):\n";
  for (const ConfigKey& k : config_keys()) {
    os << "  " << k.name << " = " << get_config_value(defaults, k.name) << "\n      " << k.help << "\n";
  }
  os << "\nExit codes: 0 ok, 2 bad config, 3 asset error, 4 adapter error, 5 numeric failure.\n";
  return os.str();
}

struct AssetOptions {
  std::string scene;
  std::string body_model, shape, motion, input_camera, input_pose, image, mask;

  void add(CLI::App* app) {
    app->add_option("--scene", scene, "Directory written by `fixture`; fills in any asset path not given");
    app->add_option("--body-model", body_model, "Body-model archive directory");
    app->add_option("--shape", shape, "Shape coefficient file");
    app->add_option("--motion", motion, "Motion sequence file");
    app->add_option("--input-camera", input_camera, "Camera file holding the input view");
    app->add_option("--input-pose", input_pose, "One-frame motion file with the input pose");
    app->add_option("--image", image, "Input image (PNG)");
    app->add_option("--mask", mask, "Subject mask (PNG)");
  }

  AssetPaths resolve() const {
    AssetPaths p;
    std::optional<ScenePaths> s;
    if (!scene.empty()) s.emplace(scene);
    auto pick = [&](const std::string& given, fs::path ScenePaths::*member, const char* flag) -> fs::path {
      if (!given.empty()) return given;
      if (s) return (*s).*member;
      throw ConfigError(std::string("missing ") + flag + " (or --scene)");
    };
    p.body_model = pick(body_model, &ScenePaths::body_model, "--body-model");
    p.motion = pick(motion, &ScenePaths::motion, "--motion");
    p.input_camera = pick(input_camera, &ScenePaths::input_camera, "--input-camera");
    p.input_pose = pick(input_pose, &ScenePaths::input_pose, "--input-pose");
    p.image = pick(image, &ScenePaths::image, "--image");
    p.mask = pick(mask, &ScenePaths::mask, "--mask");
    if (!shape.empty()) {
      p.shape = shape;
    } else if (s && fs::exists(s->shape)) {
      p.shape = s->shape;
    }
    return p;
  }
};

struct TrainOptions {
  AssetOptions assets;
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> ablations;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool resume = false;
  std::int64_t stop_at = -1;
};

TrainConfig build_config(const TrainOptions& o) {
  TrainConfig c;
  fs::path path = o.config;
  if (path.empty() && !o.assets.scene.empty()) path = ScenePaths(o.assets.scene).config;
  if (!path.empty()) c = load_config(path);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_config_value(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  for (const std::string& a : o.ablations) c.ablations.insert(parse_ablation(a));
  if (o.seed) c.seed = *o.seed;
  validate(c);
  return c;
}

json digest_entry(const fs::path& p) {
  return {{"path", fs::absolute(p).lexically_normal().string()}, {"sha256", path_digest(p)}};
}

json config_json(const TrainConfig& c) {
  json j = json::object();
  for (const ConfigKey& k : config_keys()) j[k.name] = get_config_value(c, k.name);
  return j;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& body) {
  json m;
  m["tool"] = "avatar";
  m["version"] = kToolVersion;
  m["command"] = command;
  for (const auto& [k, v] : body.items()) m[k] = v;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw AssetError("cannot write manifest in '" + dir.string() + "'");
  out << m.dump(2) << '\n';
}

// Drops log lines at or after `iteration`, so a resumed run appends cleanly.
void truncate_log(const fs::path& log, std::int64_t iteration) {
  if (!fs::exists(log)) return;
  std::ifstream in(log);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    const auto parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("iteration")) continue;
    if (parsed["iteration"].get<std::int64_t>() < iteration) keep.push_back(line);
  }
  in.close();
  std::ofstream out(log, std::ios::trunc);
  for (const std::string& l : keep) out << l << '\n';
}

int cmd_train(const TrainOptions& o, bool init_only) {
  const fs::path out = o.out;
  RunLock lock(out);
  const TrainConfig config = build_config(o);
  const AssetPaths paths = o.assets.resolve();
  TrainingAssets assets = load_training_assets(paths);
  save_config(config, out / "config.txt");

  Trainer trainer(config, std::move(assets), make_embedder(config.embedder), make_perceptual(config));
  const fs::path ckpt_path = out / "checkpoint.bin";
  const fs::path log_path = out / "train_log.jsonl";
  bool resumed = false;
  if (o.resume && fs::exists(ckpt_path)) {
    trainer.restore(load_checkpoint(ckpt_path));
    truncate_log(log_path, trainer.state().iteration);
    resumed = true;
  } else if (fs::exists(log_path)) {
    fs::remove(log_path);
  }
  const std::int64_t start = trainer.state().iteration;

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw AssetError("cannot write '" + log_path.string() + "'");
  const fs::path snapshots = out / "snapshots";
  if (config.snapshot_interval > 0) fs::create_directories(snapshots);

  double seconds[2] = {0.0, 0.0};
  auto last = std::chrono::steady_clock::now();
  auto on_log = [&](const IterationLog& l) {
    const auto now = std::chrono::steady_clock::now();
    seconds[l.stage == Stage::kInit ? 0 : 1] += std::chrono::duration<double>(now - last).count();
    last = now;
    log << format_log_line(l) << '\n';
    if (!l.accepted) std::cerr << "iteration " << l.iteration << ": " << l.incident << '\n';
    const std::int64_t done = l.iteration + 1;
    if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0) {
      log.flush();
      save_checkpoint(trainer.checkpoint(), ckpt_path);
    }
    if (config.snapshot_interval > 0 && done % config.snapshot_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06lld.png", static_cast<long long>(done));
      save_image(trainer.render_input_view().image, snapshots / name);
    }
  };
  std::int64_t stop = o.stop_at;
  if (init_only) stop = stop < 0 ? trainer.init_iterations() : std::min(stop, trainer.init_iterations());
  trainer.run(on_log, stop);
  log.close();
  save_checkpoint(trainer.checkpoint(), ckpt_path);

  json assets_json;
  assets_json["body_model"] = digest_entry(paths.body_model);
  if (!paths.shape.empty()) assets_json["shape"] = digest_entry(paths.shape);
  assets_json["motion"] = digest_entry(paths.motion);
  assets_json["input_camera"] = digest_entry(paths.input_camera);
  assets_json["input_pose"] = digest_entry(paths.input_pose);
  assets_json["image"] = digest_entry(paths.image);
  assets_json["mask"] = digest_entry(paths.mask);
  json body;
  body["seed"] = config.seed;
  body["config"] = config_json(config);
  body["assets"] = assets_json;
  body["resumed_from"] = resumed ? json(start) : json(nullptr);
  body["iterations"] = {{"start", start}, {"end", trainer.state().iteration}, {"total", trainer.total_iterations()}};
  body["stage"] = std::string(to_string(trainer.state().stage));
  body["incidents"] = trainer.state().incidents;
  body["timings_s"] = {{"init", seconds[0]}, {"oneshot", seconds[1]}};
  body["input_psnr"] = trainer.input_psnr();
  body["outputs"] = {{"checkpoint", ckpt_path.string()}, {"log", log_path.string()},
                     {"config", (out / "config.txt").string()}};
  write_manifest(out, init_only ? "init" : "train", body);
  std::cout << "iterations " << start << ".." << trainer.state().iteration << " of " << trainer.total_iterations()
            << ", input-view PSNR " << format_double(trainer.input_psnr()) << " dB\n";
  return 0;
}

struct RenderOptions {
  std::string checkpoint, motion, cameras, out, config, body_model;
};

int cmd_render(const RenderOptions& o) {
  const fs::path out = o.out;
  RunLock lock(out);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  TrainConfig config;
  fs::path config_path = o.config;
  if (config_path.empty() && fs::exists(fs::path(o.checkpoint).parent_path() / "config.txt")) {
    config_path = fs::path(o.checkpoint).parent_path() / "config.txt";
  }
  if (!config_path.empty()) config = load_config(config_path);
  const std::string model_path = o.body_model.empty() ? ckpt.body_model : o.body_model;
  if (model_path.empty()) throw ConfigError("checkpoint has no body-model path; pass --body-model");
  auto model = std::make_shared<const SkinnedBodyModel>(load_body_model_archive(model_path));

  WarpField warp = make_warp_field(model, ckpt.shape, ckpt.knn, ckpt.use_residual, config.seed);
  if (ckpt.use_residual) {
    if (ckpt.state.residual.size() != warp.residual_params.size()) {
      throw AssetError("checkpoint residual size does not match the body model");
    }
    warp.residual_params = ckpt.state.residual;
  }
  const MotionSequence motion = load_motion_sequence(o.motion);
  const std::vector<Camera> cameras = load_cameras(o.cameras);
  if (motion.frames.empty() || cameras.empty()) throw AssetError("nothing to render: no poses or no cameras");
  const RenderSettings settings = config.render_settings(false);

  std::vector<ImageBuffer> frames;
  for (const PoseParams& p : motion.frames) {
    const PoseCondition pose = pose_condition(*model, ckpt.shape, p);
    for (const Camera& cam : cameras) frames.push_back(render_image(ckpt.state.field, warp, pose, cam, settings).image);
  }
  const fs::path frames_dir = out / "frames";
  const int n = write_frame_sequence(frames, frames_dir);

  json body;
  body["checkpoint"] = digest_entry(o.checkpoint);
  body["body_model"] = digest_entry(model_path);
  body["motion"] = digest_entry(o.motion);
  body["cameras"] = digest_entry(o.cameras);
  body["config"] = config_json(config);
  body["frames"] = {{"count", n}, {"poses", motion.frames.size()}, {"cameras", cameras.size()},
                    {"order", "pose-major"}, {"dir", frames_dir.string()}};
  write_manifest(out, "render", body);
  std::cout << "wrote " << n << " frames to " << frames_dir.string() << '\n';
  return 0;
}

struct EvaluateOptions {
  std::string rendered, truth, masks, out, json_out, perceptual = "builtin", adapter;
  int margin = 0;
};

int cmd_evaluate(const EvaluateOptions& o) {
  std::unique_ptr<PerceptualMetric> metric;
  if (o.perceptual == "builtin") {
    metric = std::make_unique<PyramidPerceptual>();
  } else if (o.perceptual == "adapter") {
    if (o.adapter.empty()) throw ConfigError("--perceptual adapter needs --perceptual-adapter");
    metric = std::make_unique<AdapterPerceptual>(o.adapter);
  } else {
    throw ConfigError("--perceptual expects builtin or adapter, got '" + o.perceptual + "'");
  }
  const MetricReport report = evaluate_dirs(o.rendered, o.truth, o.masks, *metric, o.margin);
  const fs::path csv = o.out;
  const fs::path js = o.json_out.empty() ? fs::path(csv).replace_extension(".json") : fs::path(o.json_out);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_report(report, csv, js);
  std::cout << "frames " << report.frames.size() << "  PSNR " << format_double(report.psnr) << "  SSIM "
            << format_double(report.ssim) << "  perceptual(" << report.perceptual_metric << ") "
            << format_double(report.perceptual) << '\n';
  return 0;
}

int cmd_fixture(const std::string& kind, const std::string& out, std::uint64_t seed) {
  if (kind != "capsule") throw ConfigError("unknown fixture kind '" + kind + "' (expected capsule)");
  CapsuleSceneSpec spec;
  spec.seed = seed;
  write_capsule_scene(make_capsule_scene(spec), out);
  std::cout << "wrote capsule scene to " << out << '\n';
  return 0;
}

void add_train_options(CLI::App* app, TrainOptions& o) {
  o.assets.add(app);
  app->add_option("--config", o.config, "Config file (key = value lines)");
  app->add_option("--set", o.sets, "Override one config key, as key=value; repeatable");
  app->add_option("--ablation", o.ablations,
                  "no_init | no_semantic | no_geometry | hard_geometry | no_hybrid_sampling | input_pose_only");
  app->add_option("--seed", o.seed, "Override the config seed");
  app->add_option("--out", o.out, "Output directory")->required();
  app->add_flag("--resume", o.resume, "Continue from <out>/checkpoint.bin when present");
  app->add_option("--stop-at", o.stop_at, "Stop once this many iterations are done (checkpoint is written)");
  app->footer(config_key_help());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image animatable avatar training, rendering and evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.footer(config_key_help());

  TrainOptions init_opts, train_opts;
  add_train_options(app.add_subcommand("init", "Run only the template-mesh initialization stage"), init_opts);
  add_train_options(app.add_subcommand("train", "Run initialization and one-shot training"), train_opts);

  RenderOptions render_opts;
  CLI::App* render = app.add_subcommand("render", "Render a checkpoint for every (pose, camera) pair");
  render->add_option("--checkpoint", render_opts.checkpoint, "Checkpoint file")->required();
  render->add_option("--motion", render_opts.motion, "Motion sequence file")->required();
  render->add_option("--cameras", render_opts.cameras, "Camera file")->required();
  render->add_option("--out", render_opts.out, "Output directory")->required();
  render->add_option("--config", render_opts.config, "Config for render settings (default: next to the checkpoint)");
  render->add_option("--body-model", render_opts.body_model, "Override the body-model path stored in the checkpoint");

  EvaluateOptions eval_opts;
  CLI::App* evaluate = app.add_subcommand("evaluate", "PSNR, SSIM and perceptual distance inside the subject bbox");
  evaluate->add_option("--rendered", eval_opts.rendered, "Directory of rendered PNG frames")->required();
  evaluate->add_option("--truth", eval_opts.truth, "Directory of ground-truth PNG frames")->required();
  evaluate->add_option("--masks", eval_opts.masks, "Directory of subject masks")->required();
  evaluate->add_option("--out", eval_opts.out, "CSV report path")->required();
  evaluate->add_option("--json", eval_opts.json_out, "JSON summary path (default: CSV path with .json)");
  evaluate->add_option("--bbox-margin", eval_opts.margin, "Pixels added around the mask bbox");
  evaluate->add_option("--perceptual", eval_opts.perceptual, "builtin or adapter");
  evaluate->add_option("--perceptual-adapter", eval_opts.adapter, "Unix socket of the perceptual adapter");

  std::string fixture_kind = "capsule";
  std::string fixture_out;
  std::uint64_t fixture_seed = 0;
  CLI::App* fixture = app.add_subcommand("fixture", "Write a synthetic test scene");
  fixture->add_option("--kind", fixture_kind, "Fixture kind (capsule)");
  fixture->add_option("--out", fixture_out, "Output directory")->required();
  fixture->add_option("--seed", fixture_seed, "Seed stored in the scene config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }

  try {
    if (app.got_subcommand("init")) return cmd_train(init_opts, true);
    if (app.got_subcommand("train")) return cmd_train(train_opts, false);
    if (app.got_subcommand("render")) return cmd_render(render_opts);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(eval_opts);
    if (app.got_subcommand("fixture")) return cmd_fixture(fixture_kind, fixture_out, fixture_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
