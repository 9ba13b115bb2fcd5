#include "avatar/trainer.hpp"

#include "avatar/error.hpp"
#include "avatar/evaluator.hpp"
#include "avatar/rasterizer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace avatar {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'A', 'V', 'C', 'K', 'P', 'T', '\0', '\1'};

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double d : v) put(d);
  }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> doubles() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw AssetError("truncated checkpoint '" + path_ + "'");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

ImageBuffer masked(const ImageBuffer& image, const SilhouetteMask& mask, const Eigen::Vector3d& background) {
  ImageBuffer out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!mask(x, y)) out.set_pixel(x, y, background);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kInit:
      return "init";
    case Stage::kOneShot:
      return "oneshot";
    case Stage::kDone:
      return "done";
  }
  return "?";
}

OptimizerSettings optimizer_settings(const TrainConfig& c) {
  return {c.lr, c.lr_warmup, c.lr_field_mult, c.lr_residual_mult, c.adam_beta1, c.adam_beta2, c.adam_eps};
}

std::unique_ptr<PerceptualMetric> make_perceptual(const TrainConfig& c) {
  if (c.perceptual == "adapter") return std::make_unique<AdapterPerceptual>(c.perceptual_adapter);
  return std::make_unique<PyramidPerceptual>();
}

StepResult step(TrainState& state, std::span<const double> gradient, const OptimizerSettings& opt) {
  ++state.iteration;
  const std::size_t nf = state.field.values.size();
  const std::size_t n = state.parameter_count();
  if (gradient.size() != n) throw std::invalid_argument("gradient length does not match the parameters");
  if (state.moments.m.size() != n) {
    state.moments.m.assign(n, 0.0);
    state.moments.v.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(gradient[i])) {
      ++state.incidents;
      return {false, "non-finite gradient at parameter " + std::to_string(i) + "; update rejected"};
    }
  }
  const std::uint64_t t = state.moments.steps + 1;
  double lr = opt.lr;
  if (opt.warmup > 0) lr *= std::min(1.0, static_cast<double>(t) / opt.warmup);
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));

  std::vector<double> m(n), v(n), p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gradient[i];
    m[i] = opt.beta1 * state.moments.m[i] + (1.0 - opt.beta1) * g;
    v[i] = opt.beta2 * state.moments.v[i] + (1.0 - opt.beta2) * g * g;
    const double rate = lr * (i < nf ? opt.field_mult : opt.residual_mult);
    const double current = i < nf ? state.field.values[i] : state.residual[i - nf];
    p[i] = current - rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
    if (!std::isfinite(p[i]) || !std::isfinite(v[i])) {
      ++state.incidents;
      return {false, "non-finite update at parameter " + std::to_string(i) + "; update rejected"};
    }
  }
  state.moments.m = std::move(m);
  state.moments.v = std::move(v);
  state.moments.steps = t;
  std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(nf), state.field.values.begin());
  std::copy(p.begin() + static_cast<std::ptrdiff_t>(nf), p.end(), state.residual.begin());
  return {};
}

std::string format_log_line(const IterationLog& log) {
  std::ostringstream os;
  os << "{\"iteration\":" << log.iteration << ",\"stage\":\"" << to_string(log.stage) << "\",\"branch\":\""
     << to_string(log.branch) << "\",\"part\":" << log.part << ",\"pose\":" << log.pose
     << ",\"camera\":" << log.camera;
  if (log.reference) {
    os << ",\"reference\":\"" << (*log.reference == ReferenceKind::kInputCrop ? "input_crop" : "rendered_view")
       << '"';
  }
  os << ",\"loss\":" << format_double(log.report.total) << ",\"terms\":{";
  bool first = true;
  for (const auto& [name, value] : log.report.terms) {
    if (!first) os << ',';
    first = false;
    os << '"' << name << "\":" << format_double(value);
  }
  os << "},\"accepted\":" << (log.accepted ? "true" : "false");
  if (!log.incident.empty()) os << ",\"incident\":\"" << escape(log.incident) << '"';
  os << '}';
  return os.str();
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + sizeof(kMagic));
  w.put(kCheckpointVersion);
  const TrainState& s = c.state;
  w.put<std::int32_t>(s.field.arch.num_freqs);
  w.put<std::int32_t>(s.field.arch.width);
  w.put<std::int32_t>(s.field.arch.depth);
  w.put<std::int32_t>(s.field.arch.skip);
  w.doubles(s.field.values);
  w.put<std::uint8_t>(c.use_residual ? 1 : 0);
  w.put<std::int32_t>(c.residual_arch.num_freqs);
  w.put<std::int32_t>(c.residual_arch.width);
  w.put<std::int32_t>(c.residual_arch.depth);
  w.put<std::int32_t>(c.knn);
  w.doubles(s.residual);
  w.doubles(s.moments.m);
  w.doubles(s.moments.v);
  w.put<std::uint64_t>(s.moments.steps);
  w.put<std::int64_t>(s.iteration);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.stage));
  w.put<std::int64_t>(s.incidents);
  w.str(s.init_rng);
  w.str(s.sampler_rng);
  w.put<std::uint64_t>(s.history.size());
  for (const LossEntry& e : s.history) {
    w.put(e.iteration);
    w.put(e.total);
  }
  w.str(c.body_model);
  for (int i = 0; i < kShapeDims; ++i) w.put(c.shape.beta[i]);

  const std::filesystem::path tmp = path.string() + ".tmp";
  write_file(tmp, w.bytes);
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw AssetError("checkpoint not found: '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw AssetError("not a checkpoint: '" + path.string() + "'");
  }
  std::vector<std::uint8_t> body(bytes.begin() + sizeof(kMagic), bytes.end());
  ByteReader r(body, path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw AssetError("checkpoint '" + path.string() + "' has version " + std::to_string(version) +
                     "; this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  TrainState& s = c.state;
  s.field.arch.num_freqs = r.get<std::int32_t>();
  s.field.arch.width = r.get<std::int32_t>();
  s.field.arch.depth = r.get<std::int32_t>();
  s.field.arch.skip = r.get<std::int32_t>();
  s.field.values = r.doubles();
  c.use_residual = r.get<std::uint8_t>() != 0;
  c.residual_arch.num_freqs = r.get<std::int32_t>();
  c.residual_arch.width = r.get<std::int32_t>();
  c.residual_arch.depth = r.get<std::int32_t>();
  c.knn = r.get<std::int32_t>();
  s.residual = r.doubles();
  s.moments.m = r.doubles();
  s.moments.v = r.doubles();
  s.moments.steps = r.get<std::uint64_t>();
  s.iteration = r.get<std::int64_t>();
  const auto stage = r.get<std::uint8_t>();
  if (stage > static_cast<std::uint8_t>(Stage::kDone)) throw AssetError("corrupt checkpoint stage");
  s.stage = static_cast<Stage>(stage);
  s.incidents = r.get<std::int64_t>();
  s.init_rng = r.str();
  s.sampler_rng = r.str();
  const auto hist = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < hist; ++i) {
    LossEntry e;
    e.iteration = r.get<std::int64_t>();
    e.total = r.get<double>();
    s.history.push_back(e);
  }
  c.body_model = r.str();
  for (int i = 0; i < kShapeDims; ++i) c.shape.beta[i] = r.get<double>();
  if (!r.done()) throw AssetError("trailing bytes in checkpoint '" + path.string() + "'");
  try {
    validate(s.field);
  } catch (const std::invalid_argument& e) {
    throw AssetError("checkpoint '" + path.string() + "': " + e.what());
  }
  return c;
}

Trainer::Trainer(TrainConfig config, TrainingAssets assets, std::unique_ptr<Embedder> embedder,
                 std::unique_ptr<PerceptualMetric> perceptual)
    : config_(std::move(config)),
      assets_(std::move(assets)),
      embedder_(std::move(embedder)),
      perceptual_(std::move(perceptual)),
      optimizer_(optimizer_settings(config_)),
      warp_(make_warp_field(assets_.model, assets_.shape, config_.knn, config_.use_residual, config_.seed)),
      cache_(assets_.model, assets_.shape, assets_.input, assets_.motion, build_rig(config_.rig)),
      sampler_(config_, cache_),
      init_rng_(mix64(config_.seed ^ 0x1a17ULL)) {
  validate(config_);
  if (!embedder_ || !perceptual_) throw std::invalid_argument("trainer needs an embedder and a perceptual metric");
  if (config_.p_novel > 0.0 && config_.has(Ablation::kNoSemantic) && config_.has(Ablation::kNoGeometry)) {
    throw ConfigError("ablations no_semantic and no_geometry together leave novel views without a loss");
  }
  const Camera& in = assets_.input.camera;
  if (!assets_.image.same_size(ImageBuffer(in.width, in.height)) || !assets_.mask.same_size(in.width, in.height)) {
    throw AssetError("input image " + std::to_string(assets_.image.width()) + "x" +
                     std::to_string(assets_.image.height()) + " does not match the input camera " +
                     std::to_string(in.width) + "x" + std::to_string(in.height));
  }
  target_ = masked(assets_.image, assets_.mask, config_.background);
  input_condition_ = pose_condition(*assets_.model, assets_.shape, assets_.input.pose);
  for (const PoseParams& p : assets_.motion.frames) {
    conditions_.push_back(pose_condition(*assets_.model, assets_.shape, p));
  }
  state_.field = init_field(config_.field, config_.seed);
  state_.residual = warp_.use_residual ? warp_.residual_params : std::vector<double>{};
  state_.stage = init_iterations() > 0 ? Stage::kInit : Stage::kOneShot;
  if (!config_.text_prompt.empty()) text_embedding_ = embedder_->embed_text(config_.text_prompt);
}

std::int64_t Trainer::init_iterations() const { return config_.has(Ablation::kNoInit) ? 0 : config_.t_init; }

std::int64_t Trainer::total_iterations() const { return init_iterations() + config_.t_train; }

void Trainer::sync_stage() {
  if (state_.iteration < init_iterations()) {
    state_.stage = Stage::kInit;
  } else if (state_.iteration < total_iterations()) {
    state_.stage = Stage::kOneShot;
  } else {
    state_.stage = Stage::kDone;
  }
}

const PoseCondition& Trainer::condition(int pose) const {
  return pose == kInputPose ? input_condition_ : conditions_.at(static_cast<std::size_t>(pose));
}

IterationLog Trainer::iterate() {
  sync_stage();
  if (state_.stage == Stage::kDone) throw std::logic_error("training already finished");
  IterationLog log = state_.stage == Stage::kInit ? init_iteration() : oneshot_iteration();
  sync_stage();
  return log;
}

IterationLog Trainer::finish(IterationLog log, const LossTerms& terms, std::vector<double>& grad) {
  log.report = combined_loss(log.branch, terms, config_.weights);
  if (!std::isfinite(log.report.total)) {
    std::ostringstream os;
    os << "non-finite loss at iteration " << log.iteration << " (stage " << to_string(log.stage) << ", branch "
       << to_string(log.branch) << ", part " << log.part << ", pose " << log.pose << ", camera " << log.camera
       << ")";
    throw NumericError(os.str());
  }
  if (hook_) hook_(grad);
  const StepResult r = step(state_, grad, optimizer_);
  log.accepted = r.accepted;
  log.incident = r.incident;
  if (r.accepted && warp_.use_residual) warp_.residual_params = state_.residual;
  state_.history.push_back({log.iteration, log.report.total});
  while (state_.history.size() > TrainState::kHistory) state_.history.pop_front();
  return log;
}

IterationLog Trainer::init_iteration() {
  IterationLog log;
  log.iteration = state_.iteration;
  log.stage = Stage::kInit;
  log.branch = Branch::kInputView;
  log.pose = static_cast<int>(uniform_index(init_rng_, assets_.motion.frames.size()));
  log.camera = static_cast<int>(uniform_index(init_rng_, cache_.rig().cameras.size()));
  const Camera& cam = cache_.rig().cameras[log.camera];

  auto it = init_targets_.find({log.pose, log.camera});
  if (it == init_targets_.end()) {
    ImageBuffer target = rasterize_template_color(cache_.mesh(log.pose), assets_.model->faces, cam);
    it = init_targets_.emplace(std::make_pair(log.pose, log.camera), std::move(target)).first;
  }

  RenderSettings settings = config_.render_settings(true);
  settings.stream = static_cast<std::uint64_t>(state_.iteration);
  const RenderTape tape(state_.field, warp_, condition(log.pose), cam, settings);
  ImageBuffer g_image;
  const ReconstructionTerms rec =
      reconstruction_loss(tape.image(), it->second, *perceptual_, config_.weights.lambda_mse, &g_image);

  std::vector<double> grad(state_.parameter_count(), 0.0);
  const std::span<double> all(grad);
  tape.backward(g_image, {}, all.first(state_.field.values.size()), all.subspan(state_.field.values.size()));
  LossTerms terms;
  terms.recon_mse = rec.mse;
  terms.recon_perceptual = rec.perceptual;
  return finish(log, terms, grad);
}

const Embedding& Trainer::input_crop_embedding(const Reference& ref) {
  const auto key = std::make_tuple(ref.camera, ref.bbox.x0, ref.bbox.y0, ref.bbox.x1, ref.bbox.y1);
  auto it = crop_embeddings_.find(key);
  if (it == crop_embeddings_.end()) {
    const ImageBuffer patch = reference_patch(ref, target_, state_.field, warp_, input_condition_, cache_.rig(),
                                              config_.render_settings(false), config_.patch_size);
    it = crop_embeddings_.emplace(key, embedder_->embed_image(patch)).first;
  }
  return it->second;
}

IterationLog Trainer::oneshot_iteration() {
  const TrainingView view = sampler_.draw();
  IterationLog log;
  log.iteration = state_.iteration;
  log.stage = Stage::kOneShot;
  log.branch = view.branch;
  log.part = view.part;
  log.pose = view.pose;
  log.camera = view.rig_camera;

  RenderSettings settings = config_.render_settings(true);
  settings.stream = static_cast<std::uint64_t>(state_.iteration);
  const RenderTape tape(state_.field, warp_, condition(view.pose), view.camera, settings);
  std::vector<double> grad(state_.parameter_count(), 0.0);
  const std::span<double> all(grad);
  const std::span<double> g_field = all.first(state_.field.values.size());
  const std::span<double> g_residual = all.subspan(state_.field.values.size());
  LossTerms terms;

  if (view.branch == Branch::kInputView) {
    ImageBuffer g_image;
    const ReconstructionTerms rec =
        reconstruction_loss(tape.image(), target_, *perceptual_, config_.weights.lambda_mse, &g_image);
    terms.recon_mse = rec.mse;
    terms.recon_perceptual = rec.perceptual;
    tape.backward(g_image, {}, g_field, g_residual);
    return finish(log, terms, grad);
  }

  log.reference = view.reference.kind;
  ImageBuffer g_image(view.camera.width, view.camera.height);
  if (!config_.has(Ablation::kNoSemantic)) {
    std::vector<WeightedReference> refs;
    const double text_w = view.reference.with_text && text_embedding_ ? config_.text_weight : 0.0;
    if (view.reference.kind == ReferenceKind::kInputCrop) {
      refs.push_back({input_crop_embedding(view.reference), 1.0 - text_w});
    } else {
      // Rendered from the pre-step parameters; no gradient flows through it.
      const ImageBuffer patch =
          reference_patch(view.reference, target_, state_.field, warp_, condition(view.pose), cache_.rig(),
                          config_.render_settings(false), config_.patch_size);
      refs.push_back({embedder_->embed_image(patch), 1.0 - text_w});
    }
    if (text_w > 0.0) refs.push_back({*text_embedding_, text_w});
    if (refs.front().weight <= 0.0) refs.erase(refs.begin());
    ImageBuffer g_sem;
    terms.semantic = semantic_loss(*embedder_, tape.image(), refs, &g_sem);
    for (std::size_t i = 0; i < g_image.data().size(); ++i) {
      g_image.data()[i] += config_.weights.lambda_clip * g_sem.data()[i];
    }
  }
  AlphaMap g_alpha;
  if (!config_.has(Ablation::kNoGeometry)) {
    const auto key = std::make_tuple(view.pose, view.rig_camera, view.part);
    auto it = silhouettes_.find(key);
    if (it == silhouettes_.end()) {
      SilhouetteMask m = rasterize_silhouette(cache_.mesh(view.pose), assets_.model->faces, view.camera);
      it = silhouettes_.emplace(key, std::move(m)).first;
    }
    SilhouetteOptions opts = config_.silhouette;
    opts.hard = config_.has(Ablation::kHardGeometry);
    const SilhouetteTerms sil = silhouette_loss(tape.alpha(), it->second, opts);
    terms.sil_mse = sil.mse;
    terms.sil_chamfer = sil.chamfer;
    if (opts.hard) terms.sil_outside = sil.outside;
    g_alpha = silhouette_gradient(tape.alpha(), it->second, opts, config_.weights.lambda_sil,
                                  config_.weights.lambda_sil);
  }
  tape.backward(g_image, g_alpha, g_field, g_residual);
  return finish(log, terms, grad);
}

void Trainer::run_init_stage(const LogFn& log) {
  sync_stage();
  while (state_.stage == Stage::kInit) {
    const IterationLog l = iterate();
    if (log) log(l);
  }
}

void Trainer::run_oneshot_stage(const LogFn& log) {
  sync_stage();
  if (state_.stage == Stage::kInit) throw std::logic_error("init stage has not finished");
  while (state_.stage == Stage::kOneShot) {
    const IterationLog l = iterate();
    if (log) log(l);
  }
}

void Trainer::run(const LogFn& log, std::int64_t stop_at) {
  sync_stage();
  while (state_.stage != Stage::kDone && (stop_at < 0 || state_.iteration < stop_at)) {
    const IterationLog l = iterate();
    if (log) log(l);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.state = state_;
  std::ostringstream a;
  a << init_rng_;
  c.state.init_rng = a.str();
  c.state.sampler_rng = sampler_.rng_state();
  c.knn = warp_.knn;
  c.use_residual = warp_.use_residual;
  c.residual_arch = warp_.residual_arch;
  c.body_model = assets_.model_path;
  c.shape = assets_.shape;
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (!(c.state.field.arch == config_.field)) throw ConfigError("checkpoint field architecture differs from config");
  if (c.use_residual != warp_.use_residual || c.state.residual.size() != warp_.residual_size() ||
      !(c.residual_arch == warp_.residual_arch)) {
    throw ConfigError("checkpoint residual setup differs from config");
  }
  if (c.knn != warp_.knn) throw ConfigError("checkpoint knn differs from config");
  if (c.shape.beta != assets_.shape.beta) throw ConfigError("checkpoint body shape differs from the shape file");
  state_ = c.state;
  std::istringstream a(c.state.init_rng);
  a >> init_rng_;
  if (!a) throw AssetError("corrupt init RNG state in checkpoint");
  sampler_.set_rng_state(c.state.sampler_rng);
  if (warp_.use_residual) warp_.residual_params = state_.residual;
  sync_stage();
}

RenderOutput Trainer::render_view(int pose, const Camera& camera) const {
  return render_image(state_.field, warp_, condition(pose), camera, config_.render_settings(false));
}

RenderOutput Trainer::render_input_view() const { return render_view(kInputPose, assets_.input.camera); }

double Trainer::input_psnr() const {
  return psnr(render_input_view().image, target_, subject_bbox(assets_.mask, 2));
}

double Trainer::silhouette_iou(int pose) const {
  const CameraRig& rig = cache_.rig();
  const PosedMesh mesh = cache_.mesh(pose);
  double total = 0.0;
  for (const Camera& cam : rig.cameras) {
    const AlphaMap alpha = render_view(pose, cam).alpha;
    const SilhouetteMask sil = rasterize_silhouette(mesh, assets_.model->faces, cam);
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < sil.size(); ++i) {
      const bool a = alpha.data()[i] > 0.5;
      const bool s = sil.data()[i] != 0;
      inter += a && s;
      uni += a || s;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(rig.cameras.size());
}

}  // namespace avatar
