#pragma once

#include "avatar/body_model.hpp"
#include "avatar/cameras.hpp"
#include "avatar/image.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace avatar {

namespace fs = std::filesystem;

// Body-model archive: a directory holding manifest.txt plus one raw
// little-endian binary per array. Each manifest line reads
//   <name> <dtype> <dim0,dim1,...> <file>
// with dtype one of f32, f64, i32, i64. Required arrays: v_template [N,3],
// faces [F,3], shapedirs [N,3,10], posedirs [N,3,9(J-1)], J_regressor [J,N],
// weights [N,J]. Optional: part_labels [N] and parents [J]; both default to
// the SMPL tables when J = 24.
SkinnedBodyModel load_body_model_archive(const fs::path& dir);
void save_body_model_archive(const SkinnedBodyModel& model, const fs::path& dir);

struct MotionSequence {
  std::vector<PoseParams> frames;
  double fps = 30.0;
  std::vector<int> camera_ref;  // empty, or one rig camera index per frame
};

/// One row of 72 comma/whitespace separated reals per frame. Lines starting
/// with '#' are comments, except "# fps: <x>" and "# camera_ref: <i> ...".
MotionSequence load_motion_sequence(const fs::path& path);
void save_motion_sequence(const MotionSequence& motion, const fs::path& path);
MotionSequence parse_motion_sequence(const std::string& text);

/// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA, palette) as linear [0,1]
/// RGB. Alpha is dropped.
ImageBuffer load_image(const fs::path& path);
/// Binarized at 0.5 of the channel mean.
SilhouetteMask load_mask(const fs::path& path);
std::pair<ImageBuffer, SilhouetteMask> load_image_with_mask(const fs::path& image_path, const fs::path& mask_path);

/// Values are clamped to [0,1] and rounded to `bit_depth` (8 or 16) bits.
void save_image(const ImageBuffer& image, const fs::path& path, int bit_depth = 8);
void save_mask(const SilhouetteMask& mask, const fs::path& path);

/// Writes 000000.png, 000001.png, ...; returns the count.
int write_frame_sequence(const std::vector<ImageBuffer>& frames, const fs::path& out_dir);

/// One camera per line: fx fy cx cy R(9, row-major) t(3) width height.
std::vector<Camera> load_cameras(const fs::path& path);
void save_cameras(const std::vector<Camera>& cameras, const fs::path& path);

/// Shape coefficients: up to 10 whitespace separated reals (missing = 0).
BodyShapeParams load_shape(const fs::path& path);
void save_shape(const BodyShapeParams& shape, const fs::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& token, const std::string& context);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
/// Digest of a file, or of a directory's files in sorted path order.
std::string path_digest(const fs::path& path);

std::vector<std::uint8_t> read_file(const fs::path& path);
void write_file(const fs::path& path, std::span<const std::uint8_t> bytes);

}  // namespace avatar
