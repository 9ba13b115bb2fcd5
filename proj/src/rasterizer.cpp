#include "avatar/rasterizer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace avatar {
namespace {

constexpr double kNearPlane = 1e-3;

int face_part(const Faces& faces, const std::vector<int>& labels, int f) {
  const int a = labels[faces(f, 0)];
  const int b = labels[faces(f, 1)];
  const int c = labels[faces(f, 2)];
  if (b == c) return b;
  return a;
}

}  // namespace

RasterFrame rasterize_frame(const Vertices& vertices, const Faces& faces, const Camera& cam) {
  RasterFrame fr{Grid<int>(cam.width, cam.height, -1),
                 Grid<double>(cam.width, cam.height, std::numeric_limits<double>::infinity()),
                 Grid<Eigen::Vector3d>(cam.width, cam.height, Eigen::Vector3d::Zero())};
  const Eigen::Index n = vertices.rows();
  std::vector<Eigen::Vector3d> proj(n);  // (u, v, z_cam)
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Vector3d p = cam.R * vertices.row(v).transpose() + cam.t;
    proj[v] = {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
  }
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Eigen::Vector3d& a = proj[faces(f, 0)];
    const Eigen::Vector3d& b = proj[faces(f, 1)];
    const Eigen::Vector3d& c = proj[faces(f, 2)];
    if (a.z() < kNearPlane || b.z() < kNearPlane || c.z() < kNearPlane) continue;
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (area == 0.0 || !std::isfinite(area)) continue;
    const double min_x = std::min({a.x(), b.x(), c.x()});
    const double max_x = std::max({a.x(), b.x(), c.x()});
    const double min_y = std::min({a.y(), b.y(), c.y()});
    const double max_y = std::max({a.y(), b.y(), c.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
        const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        // perspective-correct barycentrics and depth
        const double i0 = w0 / a.z();
        const double i1 = w1 / b.z();
        const double i2 = w2 / c.z();
        const double inv_z = i0 + i1 + i2;
        const double z = 1.0 / inv_z;
        if (z < fr.depth(x, y)) {
          fr.depth(x, y) = z;
          fr.face(x, y) = static_cast<int>(f);
          fr.barycentric(x, y) = Eigen::Vector3d(i0, i1, i2) * z;
        }
      }
    }
  }
  return fr;
}

SilhouetteMask to_silhouette(const RasterFrame& frame) {
  SilhouetteMask mask(frame.face.width(), frame.face.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = frame.face.data()[i] >= 0 ? 1 : 0;
  return mask;
}

SegmentationMap to_parts(const RasterFrame& frame, const Faces& faces, const std::vector<int>& part_labels) {
  SegmentationMap seg(frame.face.width(), frame.face.height(), 0);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const int f = frame.face.data()[i];
    if (f >= 0) seg.data()[i] = face_part(faces, part_labels, f);
  }
  return seg;
}

ImageBuffer shade(const RasterFrame& frame, const Vertices& vertices, const Faces& faces, const Camera& cam,
                  const AlbedoFn& albedo, const Eigen::Vector3d& background) {
  ImageBuffer img(cam.width, cam.height);
  const Eigen::Vector3d eye = cam.center();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const int f = frame.face(x, y);
      if (f < 0) {
        img.set_pixel(x, y, background);
        continue;
      }
      const Eigen::Vector3d p0 = vertices.row(faces(f, 0)).transpose();
      const Eigen::Vector3d p1 = vertices.row(faces(f, 1)).transpose();
      const Eigen::Vector3d p2 = vertices.row(faces(f, 2)).transpose();
      const Eigen::Vector3d& bc = frame.barycentric(x, y);
      const Eigen::Vector3d pos = bc.x() * p0 + bc.y() * p1 + bc.z() * p2;
      const Eigen::Vector3d normal = (p1 - p0).cross(p2 - p0).normalized();
      const Eigen::Vector3d to_eye = (eye - pos).normalized();
      const double lambert = std::abs(normal.dot(to_eye));
      img.set_pixel(x, y, albedo(f, pos) * (0.35 + 0.65 * lambert));
    }
  }
  return img;
}

Eigen::Vector3d template_part_color(int part) {
  static const std::array<Eigen::Vector3d, 7> palette = {
      Eigen::Vector3d(0.7, 0.7, 0.7),  Eigen::Vector3d(0.95, 0.75, 0.55), Eigen::Vector3d(0.3, 0.5, 0.9),
      Eigen::Vector3d(0.9, 0.35, 0.3), Eigen::Vector3d(0.35, 0.8, 0.35),  Eigen::Vector3d(0.85, 0.8, 0.25),
      Eigen::Vector3d(0.65, 0.35, 0.8)};
  return palette[static_cast<std::size_t>(part) % palette.size()];
}

RasterOutput rasterize(const PosedMesh& mesh, const Faces& faces, const Camera& camera, RasterMode mode) {
  switch (mode) {
    case RasterMode::kSilhouette: return rasterize_silhouette(mesh, faces, camera);
    case RasterMode::kParts: return rasterize_parts(mesh, faces, camera);
    case RasterMode::kTemplateColor: return rasterize_template_color(mesh, faces, camera);
  }
  return SilhouetteMask{};
}

SilhouetteMask rasterize_silhouette(const PosedMesh& mesh, const Faces& faces, const Camera& camera) {
  return to_silhouette(rasterize_frame(mesh.vertices, faces, camera));
}

SegmentationMap rasterize_parts(const PosedMesh& mesh, const Faces& faces, const Camera& camera) {
  return to_parts(rasterize_frame(mesh.vertices, faces, camera), faces, mesh.part_labels);
}

ImageBuffer rasterize_template_color(const PosedMesh& mesh, const Faces& faces, const Camera& camera) {
  const RasterFrame frame = rasterize_frame(mesh.vertices, faces, camera);
  return shade(frame, mesh.vertices, faces, camera, [&](int f, const Eigen::Vector3d&) {
    return template_part_color(face_part(faces, mesh.part_labels, f));
  });
}

std::optional<PixelRect> part_bbox(const SegmentationMap& seg, int part) {
  PixelRect r{seg.width(), seg.height(), -1, -1};
  bool found = false;
  for (int y = 0; y < seg.height(); ++y) {
    for (int x = 0; x < seg.width(); ++x) {
      const int label = seg(x, y);
      const bool hit = part == kWholeBody ? label != 0 : label == part;
      if (!hit) continue;
      found = true;
      r.x0 = std::min(r.x0, x);
      r.y0 = std::min(r.y0, y);
      r.x1 = std::max(r.x1, x);
      r.y1 = std::max(r.y1, y);
    }
  }
  if (!found) return std::nullopt;
  return r;
}

std::vector<Eigen::Vector2i> mask_edge(const SilhouetteMask& mask, EdgeConnectivity connectivity) {
  static constexpr int kOffsets[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const int count = connectivity == EdgeConnectivity::kFour ? 4 : 8;
  std::vector<Eigen::Vector2i> edge;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int k = 0; k < count; ++k) {
        const int nx = x + kOffsets[k][0];
        const int ny = y + kOffsets[k][1];
        if (nx < 0 || ny < 0 || nx >= mask.width() || ny >= mask.height() || !mask(nx, ny)) {
          edge.emplace_back(x, y);
          break;
        }
      }
    }
  }
  return edge;
}

}  // namespace avatar
