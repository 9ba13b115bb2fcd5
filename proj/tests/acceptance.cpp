// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include "avatar/evaluator.hpp"
#include "avatar/fixture.hpp"
#include "avatar/renderer.hpp"
#include "avatar/sampling.hpp"
#include "avatar/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace avatar {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

Outcome homogeneous_medium() {
  Outcome o;
  const auto t0 = Clock::now();
  RenderSettings s;
  s.bounds = BoundsPolicy::kFixed;
  s.t_near = 0.0;
  s.t_far = 1.0;
  s.samples_per_ray = 256;
  Ray ray;
  ray.t_near = 0.0;
  ray.t_far = 1.0;
  const RayResult r =
      render_ray([](const Eigen::Vector3d&) { return RadianceSample{Eigen::Vector3d::Constant(0.5), 2.0}; }, ray, s);
  const double alpha = 1.0 - std::exp(-2.0);
  double color_err = 0.0;
  for (int c = 0; c < 3; ++c) color_err = std::max(color_err, std::abs(r.color[c] - 0.5 * alpha));
  const double alpha_err = std::abs(r.alpha - alpha);
  const double secs = seconds_since(t0);
  o.detail << "color err " << color_err << ", alpha err " << alpha_err << ", " << secs << " s";
  o.require(color_err < 1e-3, "color within 1e-3");
  o.require(alpha_err < 1e-3, "alpha within 1e-3");
  o.require(secs < 1.0, "under 1 s");
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  const test::GradScene s = test::make_grad_scene();
  auto embedder = std::make_shared<MockEmbedder>(EmbedderSpec{});
  const Embedding ref = embedder->embed_image(s.target);
  SilhouetteOptions literal;
  literal.mode = ChamferMode::kLiteral;
  SilhouetteOptions band;
  band.mode = ChamferMode::kBoundaryBand;
  band.band = 1.0;
  SilhouetteOptions hard = band;
  hard.hard = true;
  const std::vector<std::pair<std::string, test::ViewLoss>> losses{
      {"reconstruction", test::reconstruction_view_loss(s.target, std::make_shared<PyramidPerceptual>())},
      {"semantic", test::semantic_view_loss(embedder, ref)},
      {"silhouette_literal", test::silhouette_view_loss(s.mask, literal)},
      {"silhouette_band", test::silhouette_view_loss(s.mask, band)},
      {"silhouette_hard", test::silhouette_view_loss(s.mask, hard)},
  };
  for (const auto& [name, loss] : losses) {
    const test::GradCheck r = test::check_view_loss(s, loss, 1e-4);
    o.detail << name << " " << r.max_rel << ", ";
    o.require(r.max_abs_grad > 0.0, name + " has a gradient");
    o.require(r.max_rel < 1e-5, name + " rel err < 1e-5");
  }
  const double secs = seconds_since(t0);
  o.detail << secs << " s";
  o.require(secs < 60.0, "under 60 s");
  return o;
}

Outcome skinning() {
  Outcome o;
  const auto t0 = Clock::now();
  const SkinnedBodyModel m = make_capsule_fixture(3, 60);
  const double rest = test::max_vertex_error(forward(m, {}, {}).vertices, m.template_vertices);
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int joint = static_cast<int>(uniform_index(rng, 3));
    Eigen::Vector3d aa(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    aa *= uniform(rng, 0.0, std::numbers::pi) / aa.norm();
    PoseParams p;
    p.theta.segment<3>(3 * joint) = aa;
    const Eigen::Matrix3d R = Eigen::AngleAxisd(aa.norm(), aa.normalized()).toRotationMatrix();
    worst = std::max(worst, test::max_vertex_error(forward(m, {}, p).vertices, test::rigid_oracle(m, joint, R, 60)));
  }
  const double secs = seconds_since(t0);
  o.detail << "rest err " << rest << ", rigid err " << worst << ", " << secs << " s";
  o.require(rest < 1e-6, "rest pose within 1e-6");
  o.require(worst < 1e-6, "rigid equivalence within 1e-6");
  o.require(secs < 10.0, "under 10 s");
  return o;
}

Outcome silhouette_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(17);
  int mismatches = 0;
  int outside_changes = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const SilhouetteMask mask = test::random_blob(rng, 16, 16);
    AlphaMap alpha = test::random_alpha(rng, 16, 16);
    for (ChamferMode mode : {ChamferMode::kLiteral, ChamferMode::kBoundaryBand}) {
      SilhouetteOptions opt;
      opt.mode = mode;
      const SilhouetteTerms got = silhouette_loss(alpha, mask, opt);
      const SilhouetteTerms want = test::brute_force(alpha, mask, opt);
      const double err = std::max(std::abs(got.mse - want.mse), std::abs(got.chamfer - want.chamfer));
      worst = std::max(worst, err);
      mismatches += err != 0.0;

      AlphaMap perturbed = alpha;
      for (std::size_t i = 0; i < perturbed.size(); ++i) {
        if (!mask.data()[i]) perturbed.data()[i] = uniform(rng, 0.0, 1.0);
      }
      const SilhouetteTerms moved = silhouette_loss(perturbed, mask, opt);
      outside_changes += moved.mse != got.mse || moved.chamfer != got.chamfer;
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "max diff " << worst << ", mismatches " << mismatches << ", outside changes " << outside_changes << ", "
           << secs << " s";
  o.require(mismatches == 0, "matches brute force");
  o.require(outside_changes == 0, "ignores pixels outside the mask");
  o.require(secs < 30.0, "under 30 s");
  return o;
}

Outcome sampling_statistics() {
  Outcome o;
  const auto t0 = Clock::now();
  const CapsuleScene scene = make_capsule_scene();
  TrainConfig config = scene.config;
  config.p_novel = 0.5;
  const CameraRig rig = build_rig(config.rig);
  auto model = std::make_shared<const SkinnedBodyModel>(scene.model);
  SegmentationCache cache(model, scene.shape, InputView{scene.input_pose, scene.input_camera}, scene.motion, rig);
  Sampler sampler(config, cache);
  const int n = 10000;
  int novel = 0, violations = 0, rear = 0, side_head = 0;
  std::map<int, int> parts;
  for (int i = 0; i < n; ++i) {
    const TrainingView v = sampler.draw();
    if (v.branch != Branch::kNovelView) continue;
    ++novel;
    ++parts[v.part];
    const Orientation cam = rig.orientation[v.rig_camera];
    if (cam == Orientation::kRear) {
      ++rear;
      violations += v.reference.kind != ReferenceKind::kRenderedView || !is_side(rig.orientation[v.reference.camera]);
    } else if (is_side(cam) && v.part == kHead) {
      ++side_head;
      violations += v.reference.kind != ReferenceKind::kRenderedView ||
                    rig.orientation[v.reference.camera] != Orientation::kFront;
    }
  }
  double worst_sigma = 0.0;
  for (const auto& [part, p] : sampler.part_probs()) {
    const double sd = std::sqrt(novel * p * (1.0 - p));
    worst_sigma = std::max(worst_sigma, std::abs(parts[part] - novel * p) / sd);
  }
  const double fraction = static_cast<double>(novel) / n;
  const double secs = seconds_since(t0);
  o.detail << "novel fraction " << fraction << ", rule checks " << rear << " rear + " << side_head << " side-head, "
           << violations << " violations, worst part deviation " << worst_sigma << " sigma, " << secs << " s";
  o.require(fraction >= 0.48 && fraction <= 0.52, "novel fraction in [0.48, 0.52]");
  o.require(rear > 0 && side_head > 0, "both reference rules exercised");
  o.require(violations == 0, "reference rules hold");
  o.require(worst_sigma <= 3.0, "part draws within 3 sigma");
  o.require(secs < 30.0, "under 30 s");
  return o;
}

struct EndToEnd {
  std::vector<double> losses;
  FieldParams field;
  double psnr0 = 0.0, psnr_init = 0.0, psnr_final = 0.0, iou_init = 0.0;
  double seconds = 0.0;
};

std::unique_ptr<Trainer> desk_trainer(const CapsuleScene& scene) {
  const TrainConfig& c = scene.config;
  return std::make_unique<Trainer>(c, scene_assets(scene), make_embedder(c.embedder), make_perceptual(c));
}

EndToEnd end_to_end_run(const CapsuleScene& scene) {
  EndToEnd e;
  const auto t0 = Clock::now();
  auto trainer = desk_trainer(scene);
  const LogFn log = [&](const IterationLog& l) { e.losses.push_back(l.report.total); };
  e.psnr0 = trainer->input_psnr();
  trainer->run_init_stage(log);
  e.psnr_init = trainer->input_psnr();
  e.iou_init = trainer->silhouette_iou(0);
  trainer->run_oneshot_stage(log);
  e.psnr_final = trainer->input_psnr();
  e.field = trainer->state().field;
  e.seconds = seconds_since(t0);
  return e;
}

std::filesystem::path calibration_path() { return std::filesystem::path(AVATAR_TEST_DATA) / "calibration.json"; }

Outcome end_to_end(const EndToEnd& e) {
  Outcome o;
  std::ifstream in(calibration_path());
  const nlohmann::json cal = nlohmann::json::parse(in);
  const auto& th = cal["thresholds"];
  const double init_gain = e.psnr_init - e.psnr0;
  const double oneshot_gain = e.psnr_final - e.psnr_init;
  o.detail << "PSNR " << e.psnr0 << " -> " << e.psnr_init << " -> " << e.psnr_final << " dB (init +" << init_gain
           << ", one-shot +" << oneshot_gain << "), IoU after init " << e.iou_init << ", " << e.seconds << " s";
  o.require(init_gain >= th["init_gain_db"].get<double>(), "init gain");
  o.require(oneshot_gain >= th["oneshot_gain_db"].get<double>(), "one-shot gain");
  o.require(e.iou_init >= th["iou_after_init"].get<double>(), "IoU after init");
  o.require(e.seconds <= 15.0 * 60.0, "under 15 min");
  return o;
}

Outcome determinism(const CapsuleScene& scene, const EndToEnd& first) {
  Outcome o;
  const auto t0 = Clock::now();
  std::vector<double> losses;
  const LogFn log = [&](const IterationLog& l) { losses.push_back(l.report.total); };
  auto head = desk_trainer(scene);
  const std::int64_t midpoint = head->total_iterations() / 2;
  head->run(log, midpoint);
  const std::filesystem::path ckpt =
      std::filesystem::temp_directory_path() / ("avatar_acceptance_" + std::to_string(::getpid()) + ".bin");
  save_checkpoint(head->checkpoint(), ckpt);
  head.reset();

  auto tail = desk_trainer(scene);
  tail->restore(load_checkpoint(ckpt));
  std::filesystem::remove(ckpt);
  tail->run(log);

  std::size_t first_diff = losses.size();
  for (std::size_t i = 0; i < std::min(losses.size(), first.losses.size()); ++i) {
    if (losses[i] != first.losses[i]) {
      first_diff = i;
      break;
    }
  }
  const bool same_losses = losses.size() == first.losses.size() && first_diff == losses.size();
  const bool same_params = tail->state().field.values == first.field.values;
  o.detail << losses.size() << " losses, resumed at " << midpoint << ", "
           << (same_losses ? "trajectory identical" : "trajectory differs at " + std::to_string(first_diff)) << ", "
           << (same_params ? "parameters identical" : "parameters differ") << ", " << seconds_since(t0) << " s";
  o.require(same_losses, "bit-identical loss trajectory");
  o.require(same_params, "bit-identical parameters");
  return o;
}

Outcome metrics() {
  Outcome o;
  const auto t0 = Clock::now();
  const ImageBuffer a(32, 32, 0.3);
  const ImageBuffer b(32, 32, 0.4);
  const PixelRect full{0, 0, 31, 31};
  const double p20 = psnr(a, b, full);

  Rng rng(23);
  ImageBuffer x = test::random_image(32, 32, rng);
  ImageBuffer y = x;
  for (double& v : y.data()) v = std::clamp(v + uniform(rng, -0.1, 0.1), 0.0, 1.0);
  PyramidPerceptual metric;
  SilhouetteMask mask(32, 32);
  for (int r = 8; r < 26; ++r) {
    for (int c = 6; c < 24; ++c) mask(c, r) = 1;
  }
  const PixelRect box = subject_bbox(mask, 2);
  const double ssim_same = ssim(x, x, box);
  const double perc_same = perceptual(x, x, box, metric);

  const double p0 = psnr(x, y, box), s0 = ssim(x, y, box), q0 = perceptual(x, y, box, metric);
  int changed = 0;
  for (int trial = 0; trial < 5; ++trial) {
    ImageBuffer x2 = x, y2 = y;
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        if (box.contains(c, r)) continue;
        for (int k = 0; k < 3; ++k) {
          x2.at(c, r, k) = uniform(rng, 0.0, 1.0);
          y2.at(c, r, k) = uniform(rng, 0.0, 1.0);
        }
      }
    }
    changed += psnr(x2, y2, box) != p0 || ssim(x2, y2, box) != s0 || perceptual(x2, y2, box, metric) != q0;
  }
  const double secs = seconds_since(t0);
  o.detail << "PSNR " << p20 << " dB, SSIM(a,a) " << ssim_same << ", perceptual(a,a) " << perc_same
           << ", outside-bbox changes " << changed << ", " << secs << " s";
  o.require(std::abs(p20 - 20.0) < 1e-9, "20 dB at MSE 0.01");
  o.require(std::abs(ssim_same - 1.0) < 1e-12, "SSIM 1 on identical images");
  o.require(perc_same == 0.0, "perceptual 0 on identical images");
  o.require(changed == 0, "invariant outside the bbox");
  o.require(secs < 5.0, "under 5 s");
  return o;
}

void report(int id, const Outcome& o, bool& all) {
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail.str() << std::endl;
  all = all && o.pass;
}

}  // namespace
}  // namespace avatar

int main(int argc, char** argv) {
  using namespace avatar;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  bool all = true;
  try {
    if (want(1)) report(1, homogeneous_medium(), all);
    if (want(2)) report(2, gradient_checks(), all);
    if (want(3)) report(3, skinning(), all);
    if (want(4)) report(4, silhouette_oracle(), all);
    if (want(5)) report(5, sampling_statistics(), all);
    const CapsuleScene scene = make_capsule_scene();
    std::optional<EndToEnd> run;
    if (want(6) || want(8)) run = end_to_end_run(scene);
    if (want(6)) report(6, end_to_end(*run), all);
    if (want(7)) report(7, metrics(), all);
    if (want(8)) report(8, determinism(scene, *run), all);
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 1;
  }
  return all ? 0 : 1;
}
