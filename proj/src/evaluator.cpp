#include "avatar/evaluator.hpp"

#include "avatar/error.hpp"
#include "avatar/io_formats.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace avatar {
namespace {

void check_pair(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox) {
  if (!a.same_size(b)) {
    throw std::invalid_argument("image size mismatch: " + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()));
  }
  if (bbox.width() < 1 || bbox.height() < 1 || bbox.x0 < 0 || bbox.y0 < 0 || bbox.x1 >= a.width() ||
      bbox.y1 >= a.height()) {
    throw std::invalid_argument("bbox outside the image or empty");
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<std::filesystem::path> pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw AssetError("not a directory: '" + dir.string() + "'");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ImageBuffer crop(const ImageBuffer& image, const PixelRect& rect) {
  ImageBuffer out(rect.width(), rect.height());
  for (int y = 0; y < rect.height(); ++y) {
    for (int x = 0; x < rect.width(); ++x) out.set_pixel(x, y, image.pixel(rect.x0 + x, rect.y0 + y));
  }
  return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox) {
  check_pair(a, b, bbox);
  double sum = 0.0;
  for (int y = bbox.y0; y <= bbox.y1; ++y) {
    for (int x = bbox.x0; x <= bbox.x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        sum += d * d;
      }
    }
  }
  const double mse = sum / (3.0 * bbox.width() * bbox.height());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox) {
  check_pair(a, b, bbox);
  if (bbox.width() < kSsimWindow || bbox.height() < kSsimWindow) {
    throw std::invalid_argument("bbox " + std::to_string(bbox.width()) + "x" + std::to_string(bbox.height()) +
                                " is smaller than the SSIM window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  static const auto w = gaussian_window();
  double total = 0.0;
  long count = 0;
  for (int y0 = bbox.y0; y0 + kSsimWindow - 1 <= bbox.y1; ++y0) {
    for (int x0 = bbox.x0; x0 + kSsimWindow - 1 <= bbox.x1; ++x0) {
      for (int c = 0; c < 3; ++c) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int j = 0; j < kSsimWindow; ++j) {
          for (int i = 0; i < kSsimWindow; ++i) {
            const double k = w[i] * w[j];
            const double va = a.at(x0 + i, y0 + j, c);
            const double vb = b.at(x0 + i, y0 + j, c);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double var_a = saa - ma * ma;
        const double var_b = sbb - mb * mb;
        const double cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double perceptual(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox, PerceptualMetric& metric) {
  check_pair(a, b, bbox);
  return metric.evaluate(crop(a, bbox), crop(b, bbox), nullptr);
}

PixelRect subject_bbox(const SilhouetteMask& mask, int margin) {
  if (margin < 0) throw std::invalid_argument("negative bbox margin");
  PixelRect r{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      r.x0 = std::min(r.x0, x);
      r.y0 = std::min(r.y0, y);
      r.x1 = std::max(r.x1, x);
      r.y1 = std::max(r.y1, y);
    }
  }
  if (r.x1 < 0) throw std::invalid_argument("empty mask");
  r.x0 = std::max(0, r.x0 - margin);
  r.y0 = std::max(0, r.y0 - margin);
  r.x1 = std::min(mask.width() - 1, r.x1 + margin);
  r.y1 = std::min(mask.height() - 1, r.y1 + margin);
  return r;
}

MetricReport evaluate(const std::vector<EvalFrame>& frames, PerceptualMetric& metric, int bbox_margin) {
  if (frames.empty()) throw std::invalid_argument("no frames to evaluate");
  MetricReport report;
  report.perceptual_metric = metric.name();
  for (const EvalFrame& f : frames) {
    FrameMetrics m;
    m.name = f.name;
    if (!f.mask.same_size(f.truth.width(), f.truth.height())) {
      throw std::invalid_argument("mask size mismatch for frame '" + f.name + "'");
    }
    m.bbox = subject_bbox(f.mask, bbox_margin);
    m.psnr = psnr(f.rendered, f.truth, m.bbox);
    m.ssim = ssim(f.rendered, f.truth, m.bbox);
    m.perceptual = perceptual(f.rendered, f.truth, m.bbox, metric);
    report.psnr += m.psnr;
    report.ssim += m.ssim;
    report.perceptual += m.perceptual;
    report.frames.push_back(std::move(m));
  }
  const double n = static_cast<double>(frames.size());
  report.psnr /= n;
  report.ssim /= n;
  report.perceptual /= n;
  return report;
}

MetricReport evaluate_dirs(const std::filesystem::path& rendered, const std::filesystem::path& truth,
                           const std::filesystem::path& masks, PerceptualMetric& metric, int bbox_margin) {
  const auto r = pngs(rendered);
  const auto t = pngs(truth);
  const auto m = pngs(masks);
  if (r.size() != t.size() || r.size() != m.size()) {
    throw ConfigError("frame count mismatch: " + std::to_string(r.size()) + " rendered, " +
                      std::to_string(t.size()) + " ground truth, " + std::to_string(m.size()) + " masks");
  }
  std::vector<EvalFrame> frames;
  for (std::size_t i = 0; i < r.size(); ++i) {
    EvalFrame f;
    f.name = r[i].filename().string();
    f.rendered = load_image(r[i]);
    f.truth = load_image(t[i]);
    f.mask = load_mask(m[i]);
    frames.push_back(std::move(f));
  }
  return evaluate(frames, metric, bbox_margin);
}

void write_report(const MetricReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw AssetError("cannot write '" + csv_path.string() + "'");
  csv << "frame,x0,y0,x1,y1,psnr,ssim,perceptual\n";
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const FrameMetrics& f : report.frames) {
    csv << f.name << ',' << f.bbox.x0 << ',' << f.bbox.y0 << ',' << f.bbox.x1 << ',' << f.bbox.y1 << ','
        << format_double(f.psnr) << ',' << format_double(f.ssim) << ',' << format_double(f.perceptual) << '\n';
    rows.push_back({{"frame", f.name},
                    {"bbox", {f.bbox.x0, f.bbox.y0, f.bbox.x1, f.bbox.y1}},
                    {"psnr", f.psnr},
                    {"ssim", f.ssim},
                    {"perceptual", f.perceptual}});
  }
  csv << "mean,,,,," << format_double(report.psnr) << ',' << format_double(report.ssim) << ','
      << format_double(report.perceptual) << '\n';
  if (!csv) throw AssetError("failed writing '" + csv_path.string() + "'");

  nlohmann::ordered_json j;
  j["perceptual_metric"] = report.perceptual_metric;
  j["frames"] = report.frames.size();
  j["psnr"] = report.psnr;
  j["ssim"] = report.ssim;
  j["perceptual"] = report.perceptual;
  j["per_frame"] = rows;
  std::ofstream js(json_path);
  if (!js) throw AssetError("cannot write '" + json_path.string() + "'");
  js << j.dump(2) << '\n';
}

}  // namespace avatar
