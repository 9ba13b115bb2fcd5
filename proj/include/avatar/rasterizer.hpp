#pragma once

#include "avatar/body_model.hpp"
#include "avatar/cameras.hpp"
#include "avatar/image.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace avatar {

/// Z-buffer of a posed mesh: nearest face per pixel center plus its
/// perspective-correct barycentrics. face == -1 is background.
struct RasterFrame {
  Grid<int> face;
  Grid<double> depth;
  Grid<Eigen::Vector3d> barycentric;
};

RasterFrame rasterize_frame(const Vertices& vertices, const Faces& faces, const Camera& camera);

SilhouetteMask to_silhouette(const RasterFrame& frame);
SegmentationMap to_parts(const RasterFrame& frame, const Faces& faces, const std::vector<int>& part_labels);

/// Per-surface-point albedo; receives the face index and the world position.
using AlbedoFn = std::function<Eigen::Vector3d(int face, const Eigen::Vector3d& position)>;

/// Lambertian shading under a headlight at the camera, flat per face.
ImageBuffer shade(const RasterFrame& frame, const Vertices& vertices, const Faces& faces, const Camera& camera,
                  const AlbedoFn& albedo, const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

/// Fixed distinct albedo per part id.
Eigen::Vector3d template_part_color(int part);

enum class RasterMode { kSilhouette, kParts, kTemplateColor };

using RasterOutput = std::variant<SilhouetteMask, SegmentationMap, ImageBuffer>;

RasterOutput rasterize(const PosedMesh& mesh, const Faces& faces, const Camera& camera, RasterMode mode);

SilhouetteMask rasterize_silhouette(const PosedMesh& mesh, const Faces& faces, const Camera& camera);
SegmentationMap rasterize_parts(const PosedMesh& mesh, const Faces& faces, const Camera& camera);
ImageBuffer rasterize_template_color(const PosedMesh& mesh, const Faces& faces, const Camera& camera);

/// Tight bounding box of pixels labelled `part`; kWholeBody selects every
/// nonzero label. Empty when no pixel matches.
std::optional<PixelRect> part_bbox(const SegmentationMap& seg, int part);

enum class EdgeConnectivity { kFour = 4, kEight = 8 };

/// Mask pixels with at least one neighbor outside the mask or the image,
/// in row-major order.
std::vector<Eigen::Vector2i> mask_edge(const SilhouetteMask& mask,
                                       EdgeConnectivity connectivity = EdgeConnectivity::kFour);

}  // namespace avatar
