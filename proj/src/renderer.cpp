#include "avatar/renderer.hpp"

#include "avatar/error.hpp"
#include "avatar/random.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace avatar {
namespace {

std::string describe(const Ray& ray) {
  std::ostringstream os;
  os << "ray origin (" << ray.origin.transpose() << ") direction (" << ray.direction.transpose() << ")";
  return os.str();
}

void check_sample(const RadianceSample& s, const Ray& ray, double t) {
  if (!std::isfinite(s.sigma) || !s.c.allFinite()) {
    std::ostringstream os;
    os << "non-finite radiance sample at t=" << t << " on " << describe(ray);
    throw NumericError(os.str());
  }
}

std::optional<std::pair<double, double>> ray_bounds(const Ray& ray, const RenderSettings& s, const PosedWarp& posed) {
  if (s.bounds == BoundsPolicy::kFixed) return std::make_pair(s.t_near, s.t_far);
  const Eigen::Vector3d pad = Eigen::Vector3d::Constant(s.box_margin);
  return clip_to_box(ray, posed.bbox_min() - pad, posed.bbox_max() + pad);
}

}  // namespace

void validate(const RenderSettings& s) {
  if (s.samples_per_ray < 2) throw std::invalid_argument("samples_per_ray must be at least 2");
  if (s.bounds == BoundsPolicy::kFixed && !(s.t_near >= 0.0 && s.t_near < s.t_far)) {
    throw std::invalid_argument("fixed ray bounds need 0 <= t_near < t_far");
  }
  if (!(s.box_margin >= 0.0)) throw std::invalid_argument("box_margin must be nonnegative");
}

RayResult composite(std::span<const double> sigma, std::span<const Eigen::Vector3d> color,
                    std::span<const double> delta, const Eigen::Vector3d& background) {
  if (sigma.size() != color.size() || sigma.size() != delta.size()) {
    throw std::invalid_argument("composite: sample arrays differ in length");
  }
  RayResult r;
  double trans = 1.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double a = 1.0 - std::exp(-sigma[i] * delta[i]);
    r.color += trans * a * color[i];
    trans *= 1.0 - a;
  }
  r.color += trans * background;
  r.alpha = 1.0 - trans;
  return r;
}

std::vector<double> sample_depths(const Ray& ray, const RenderSettings& s, std::uint64_t ray_id) {
  const int n = s.samples_per_ray;
  const double width = (ray.t_far - ray.t_near) / n;
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) {
    const double u = s.stratified ? counter_uniform(s.seed, s.stream, ray_id, i) : 0.5;
    t[i] = ray.t_near + (i + u) * width;
  }
  return t;
}

RayResult render_ray(const RadianceFn& radiance, const Ray& ray, const RenderSettings& settings,
                     std::uint64_t ray_id) {
  validate(settings);
  const std::vector<double> t = sample_depths(ray, settings, ray_id);
  const int n = settings.samples_per_ray;
  std::vector<double> sigma(n);
  std::vector<Eigen::Vector3d> color(n);
  const std::vector<double> delta(n, (ray.t_far - ray.t_near) / n);
  for (int i = 0; i < n; ++i) {
    const RadianceSample s = radiance(ray.at(t[i]));
    check_sample(s, ray, t[i]);
    sigma[i] = s.sigma;
    color[i] = s.c;
  }
  return composite(sigma, color, delta, settings.background);
}

std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, const Eigen::Vector3d& lo,
                                                     const Eigen::Vector3d& hi) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    const double o = ray.origin[a];
    if (std::abs(d) < 1e-300) {
      if (o < lo[a] || o > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o) / d;
    double tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t1 <= t0) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

RenderOutput render_image(const FieldParams& field, const WarpField& warp, const PoseCondition& pose,
                          const Camera& camera, const RenderSettings& settings) {
  RenderTape tape(field, warp, pose, camera, settings);
  return std::move(tape.output());
}

ImageBuffer render_patch(const FieldParams& field, const WarpField& warp, const PoseCondition& pose,
                         const Camera& camera, const PixelRect& bbox, int patch, const RenderSettings& settings) {
  const Camera crop = part_patch_camera(camera, bbox, patch);
  return render_image(field, warp, pose, crop, settings).image;
}

RenderTape::RenderTape(const FieldParams& field, const WarpField& warp, const PoseCondition& pose,
                       const Camera& camera, const RenderSettings& settings)
    : field_(&field), warp_(&warp), posed_(warp, pose), background_(settings.background) {
  validate(settings);
  const int w = camera.width;
  const int h = camera.height;
  out_.image = ImageBuffer(w, h);
  out_.alpha = AlphaMap(w, h, 0.0);
  rays_.assign(static_cast<std::size_t>(w) * h, RaySpan{});
  const int n = settings.samples_per_ray;

  FieldEvaluator ev(field);
  std::optional<ResidualEvaluator> residual;
  if (warp.use_residual) residual.emplace(warp);

  std::vector<double> sigma(n), delta(n);
  std::vector<Eigen::Vector3d> color(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t id = static_cast<std::size_t>(y) * w + x;
      Ray ray = cast_ray(camera, {x + 0.5, y + 0.5});
      const auto bounds = ray_bounds(ray, settings, posed_);
      if (!bounds) {
        out_.image.set_pixel(x, y, background_);
        continue;
      }
      ray.t_near = bounds->first;
      ray.t_far = bounds->second;
      const std::vector<double> t = sample_depths(ray, settings, id);
      RaySpan& span = rays_[id];
      span.first = sigma_.size();
      span.count = n;
      span.delta = (ray.t_far - ray.t_near) / n;
      std::fill(delta.begin(), delta.end(), span.delta);
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d xs = posed_.skeletal_warp(ray.at(t[i]));
        Eigen::Vector3d xc = xs;
        if (residual) xc += residual->forward(xs, posed_.feature());
        RadianceSample s;
        try {
          s = ev.forward(xc);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at t=" + std::to_string(t[i]) + " on " + describe(ray));
        }
        check_sample(s, ray, t[i]);
        sigma[i] = s.sigma;
        color[i] = s.c;
        skeletal_.push_back(xs);
        sigma_.push_back(s.sigma);
        color_.push_back(s.c);
      }
      const RayResult r = composite(sigma, color, delta, background_);
      out_.image.set_pixel(x, y, r.color);
      out_.alpha(x, y) = r.alpha;
    }
  }
}

void RenderTape::backward(const ImageBuffer& grad_image, const AlphaMap& grad_alpha, std::span<double> grad_field,
                          std::span<double> grad_residual) const {
  const int w = out_.image.width();
  const bool has_alpha = !grad_alpha.empty();
  if (!grad_image.empty() && !grad_image.same_size(out_.image)) {
    throw std::invalid_argument("image gradient does not match the render size");
  }
  if (has_alpha && !grad_alpha.same_size(w, out_.image.height())) {
    throw std::invalid_argument("alpha gradient does not match the render size");
  }
  FieldEvaluator ev(*field_);
  std::optional<ResidualEvaluator> residual;
  if (warp_->use_residual) residual.emplace(*warp_);

  std::vector<double> trans;
  std::vector<Eigen::Vector3d> suffix;
  for (std::size_t id = 0; id < rays_.size(); ++id) {
    const RaySpan& span = rays_[id];
    if (span.count == 0) continue;
    const int x = static_cast<int>(id % w);
    const int y = static_cast<int>(id / w);
    const Eigen::Vector3d gc = grad_image.empty() ? Eigen::Vector3d::Zero() : grad_image.pixel(x, y);
    const double ga = has_alpha ? grad_alpha(x, y) : 0.0;
    if (gc.isZero(0.0) && ga == 0.0) continue;

    const int n = span.count;
    const double* sigma = &sigma_[span.first];
    const Eigen::Vector3d* color = &color_[span.first];
    // trans[i] = T_i, transmittance before sample i; trans[n] = T_N.
    trans.assign(n + 1, 1.0);
    for (int i = 0; i < n; ++i) trans[i + 1] = trans[i] * std::exp(-sigma[i] * span.delta);
    // suffix[i] = Σ_{k>i} w_k c_k + T_N·bg
    suffix.assign(n, Eigen::Vector3d::Zero());
    Eigen::Vector3d acc = trans[n] * background_;
    for (int i = n - 1; i >= 0; --i) {
      suffix[i] = acc;
      acc += (trans[i] - trans[i + 1]) * color[i];
    }
    for (int i = 0; i < n; ++i) {
      const double weight = trans[i] - trans[i + 1];
      const Eigen::Vector3d g_color = weight * gc;
      const double g_sigma = span.delta * (gc.dot(trans[i + 1] * color[i] - suffix[i]) + ga * trans[n]);
      if (g_color.isZero(0.0) && g_sigma == 0.0) continue;
      const Eigen::Vector3d& xs = skeletal_[span.first + i];
      Eigen::Vector3d xc = xs;
      if (residual) xc += residual->forward(xs, posed_.feature());
      ev.forward(xc);
      const bool need_x = residual && !grad_residual.empty();
      const Eigen::Vector3d g_x = ev.backward(g_color, g_sigma, grad_field, need_x);
      if (need_x) residual->backward(g_x, grad_residual);
    }
  }
}

}  // namespace avatar
