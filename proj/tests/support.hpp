#pragma once

#include "avatar/image.hpp"
#include "avatar/random.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace avatar::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("avatar_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ImageBuffer random_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
  ImageBuffer img(w, h);
  for (double& v : img.data()) v = uniform(rng, lo, hi);
  return img;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Relative error with a floor on the denominator so entries near zero are
/// compared absolutely.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of f around x, one coordinate at a time.
inline std::vector<double> central_difference(std::vector<double> x, const std::function<double(std::span<const double>)>& f,
                                              double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = f(x);
    x[i] = x0 - step;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  double m = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) m = std::max(m, rel_error(analytic[i], numeric[i], floor));
  return m;
}

}  // namespace avatar::test
