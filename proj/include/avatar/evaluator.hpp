#pragma once

#include "avatar/image.hpp"
#include "avatar/losses.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace avatar {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;

ImageBuffer crop(const ImageBuffer& image, const PixelRect& rect);

/// 10·log10(1/MSE) inside bbox, capped at kPsnrCap.
double psnr(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox);

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// the windows that fit inside bbox and over channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox);

double perceptual(const ImageBuffer& a, const ImageBuffer& b, const PixelRect& bbox, PerceptualMetric& metric);

/// Tight bbox of the mask dilated by margin and clamped to the image.
PixelRect subject_bbox(const SilhouetteMask& mask, int margin);

struct FrameMetrics {
  std::string name;
  PixelRect bbox;
  double psnr = 0.0;
  double ssim = 0.0;
  double perceptual = 0.0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  double psnr = 0.0;
  double ssim = 0.0;
  double perceptual = 0.0;
  std::string perceptual_metric;
};

struct EvalFrame {
  std::string name;
  ImageBuffer rendered;
  ImageBuffer truth;
  SilhouetteMask mask;
};

MetricReport evaluate(const std::vector<EvalFrame>& frames, PerceptualMetric& metric, int bbox_margin = 0);

/// Frames are matched by sorted file name; every directory must hold the
/// same number of PNGs.
MetricReport evaluate_dirs(const std::filesystem::path& rendered, const std::filesystem::path& truth,
                           const std::filesystem::path& masks, PerceptualMetric& metric, int bbox_margin = 0);

/// CSV rows (one per frame plus "mean") and a JSON summary alongside.
void write_report(const MetricReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

}  // namespace avatar
