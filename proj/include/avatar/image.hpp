#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace avatar {

/// Dense row-major H×W raster of a single value type.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_size(int w, int h) const noexcept { return width_ == w && height_ == h; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Boolean silhouette, 1 = inside.
using SilhouetteMask = Grid<std::uint8_t>;
/// 0 = background, k >= 1 = body part id.
using SegmentationMap = Grid<int>;
/// Accumulated opacity per pixel, in [0,1].
using AlphaMap = Grid<double>;

/// Linear RGB image with channel values nominally in [0,1], interleaved.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, double fill = 0.0)
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

  Eigen::Vector3d pixel(int x, int y) const {
    const double* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set_pixel(int x, int y, const Eigen::Vector3d& v) {
    double* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = v.x();
    p[1] = v.y();
    p[2] = v.z();
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_size(const ImageBuffer& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Inclusive pixel rectangle [x0,x1]×[y0,y1].
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0 + 1; }
  int height() const noexcept { return y1 - y0 + 1; }
  bool contains(int x, int y) const noexcept { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

enum class BorderMode { kClamp, kConstant };

/// Window into a source image sampled on a regular lattice: output pixel
/// (i, j) reads the source at continuous coordinate
/// (left + (i + 0.5)·scale_x, top + (j + 0.5)·scale_y).
struct ResampleWindow {
  double left = 0.0;
  double top = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  int out_width = 0;
  int out_height = 0;
};

ImageBuffer resample_bilinear(const ImageBuffer& src, const ResampleWindow& window, BorderMode border,
                              const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

/// Adjoint of resample_bilinear with respect to the source pixels.
ImageBuffer resample_bilinear_backward(const ImageBuffer& grad_out, int src_width, int src_height,
                                       const ResampleWindow& window, BorderMode border);

/// Window mapping a whole src_width×src_height image onto width×height.
ResampleWindow resize_window(int src_width, int src_height, int width, int height);

ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height);

/// Window covering the square-padded `rect` at `patch`×`patch` output size.
ResampleWindow square_crop_window(const PixelRect& rect, int patch);

}  // namespace avatar
