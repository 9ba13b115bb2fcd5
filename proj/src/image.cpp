#include "avatar/image.hpp"

#include <algorithm>
#include <cmath>

namespace avatar {
namespace {

struct Tap {
  int index;
  double weight;
};

// Two bilinear taps along one axis; index -1 marks an out-of-range tap under
// constant borders.
void axis_taps(double coord, int size, BorderMode border, Tap taps[2]) {
  const double f = coord - 0.5;
  const double base = std::floor(f);
  const double t = f - base;
  int i0 = static_cast<int>(base);
  int i1 = i0 + 1;
  if (border == BorderMode::kClamp) {
    i0 = std::clamp(i0, 0, size - 1);
    i1 = std::clamp(i1, 0, size - 1);
  } else {
    if (i0 < 0 || i0 >= size) i0 = -1;
    if (i1 < 0 || i1 >= size) i1 = -1;
  }
  taps[0] = {i0, 1.0 - t};
  taps[1] = {i1, t};
}

}  // namespace

ImageBuffer resample_bilinear(const ImageBuffer& src, const ResampleWindow& w, BorderMode border,
                              const Eigen::Vector3d& background) {
  ImageBuffer out(w.out_width, w.out_height);
  Tap tx[2];
  Tap ty[2];
  for (int j = 0; j < w.out_height; ++j) {
    axis_taps(w.top + (j + 0.5) * w.scale_y, src.height(), border, ty);
    for (int i = 0; i < w.out_width; ++i) {
      axis_taps(w.left + (i + 0.5) * w.scale_x, src.width(), border, tx);
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (const Tap& b : ty) {
          for (const Tap& a : tx) {
            const double v = (a.index < 0 || b.index < 0) ? background[c] : src.at(a.index, b.index, c);
            acc += a.weight * b.weight * v;
          }
        }
        out.at(i, j, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer resample_bilinear_backward(const ImageBuffer& grad_out, int src_width, int src_height,
                                       const ResampleWindow& w, BorderMode border) {
  ImageBuffer grad(src_width, src_height);
  Tap tx[2];
  Tap ty[2];
  for (int j = 0; j < w.out_height; ++j) {
    axis_taps(w.top + (j + 0.5) * w.scale_y, src_height, border, ty);
    for (int i = 0; i < w.out_width; ++i) {
      axis_taps(w.left + (i + 0.5) * w.scale_x, src_width, border, tx);
      for (const Tap& b : ty) {
        for (const Tap& a : tx) {
          if (a.index < 0 || b.index < 0) continue;
          const double k = a.weight * b.weight;
          for (int c = 0; c < 3; ++c) grad.at(a.index, b.index, c) += k * grad_out.at(i, j, c);
        }
      }
    }
  }
  return grad;
}

ResampleWindow resize_window(int src_width, int src_height, int width, int height) {
  ResampleWindow w;
  w.scale_x = static_cast<double>(src_width) / width;
  w.scale_y = static_cast<double>(src_height) / height;
  w.out_width = width;
  w.out_height = height;
  return w;
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height) {
  return resample_bilinear(src, resize_window(src.width(), src.height(), width, height), BorderMode::kClamp);
}

ResampleWindow square_crop_window(const PixelRect& rect, int patch) {
  const double side = std::max(rect.width(), rect.height());
  const double cx = 0.5 * (rect.x0 + rect.x1 + 1);
  const double cy = 0.5 * (rect.y0 + rect.y1 + 1);
  ResampleWindow w;
  w.left = cx - 0.5 * side;
  w.top = cy - 0.5 * side;
  w.scale_x = side / patch;
  w.scale_y = side / patch;
  w.out_width = patch;
  w.out_height = patch;
  return w;
}

}  // namespace avatar
