#include "avatar/io_formats.hpp"

#include "avatar/error.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace avatar {
namespace {

// ---- archive arrays --------------------------------------------------------

struct ArrayEntry {
  std::string dtype;
  std::vector<long> dims;
  std::string file;
};

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32" || dtype == "i32") return 4;
  if (dtype == "f64" || dtype == "i64") return 8;
  return 0;
}

std::string dims_string(const std::vector<long>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

template <class T>
T load_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

template <class T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

class Archive {
 public:
  explicit Archive(const fs::path& dir) : dir_(dir) {
    const fs::path manifest = dir / "manifest.txt";
    std::ifstream in(manifest);
    if (!in) throw AssetError("malformed archive: cannot read " + manifest.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string name, dtype, dims, file;
      if (!(ls >> name >> dtype >> dims >> file)) {
        throw AssetError("malformed archive: manifest line " + std::to_string(lineno) + " needs 4 fields");
      }
      if (dtype_size(dtype) == 0) throw AssetError("malformed archive: unknown dtype '" + dtype + "' for " + name);
      ArrayEntry e{dtype, {}, file};
      std::stringstream ds(dims);
      std::string tok;
      while (std::getline(ds, tok, ',')) {
        long v = 0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size() || v < 0) {
          throw AssetError("malformed archive: bad dims '" + dims + "' for " + name);
        }
        e.dims.push_back(v);
      }
      entries_[name] = std::move(e);
    }
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  /// Values as doubles after checking the shape; -1 in `expect` matches any extent.
  std::vector<double> read(const std::string& name, std::vector<long> expect) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw AssetError("malformed archive: missing field '" + name + "'");
    const ArrayEntry& e = it->second;
    bool ok = e.dims.size() == expect.size();
    for (std::size_t i = 0; ok && i < expect.size(); ++i) ok = expect[i] < 0 || expect[i] == e.dims[i];
    if (!ok) {
      throw AssetError("malformed archive: field '" + name + "' has shape " + dims_string(e.dims) + ", expected " +
                       dims_string(expect));
    }
    std::size_t count = 1;
    for (long d : e.dims) count *= static_cast<std::size_t>(d);
    const std::vector<std::uint8_t> bytes = read_file(dir_ / e.file);
    const std::size_t size = dtype_size(e.dtype);
    if (bytes.size() != count * size) {
      throw AssetError("malformed archive: field '" + name + "' file holds " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(count * size));
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint8_t* p = bytes.data() + i * size;
      if (e.dtype == "f32") out[i] = load_le<float>(p);
      else if (e.dtype == "f64") out[i] = load_le<double>(p);
      else if (e.dtype == "i32") out[i] = load_le<std::int32_t>(p);
      else out[i] = static_cast<double>(load_le<std::int64_t>(p));
      if (!std::isfinite(out[i])) throw AssetError("invalid model data: non-finite value in '" + name + "'");
    }
    return out;
  }

  long extent(const std::string& name, std::size_t axis) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw AssetError("malformed archive: missing field '" + name + "'");
    if (axis >= it->second.dims.size()) throw AssetError("malformed archive: field '" + name + "' has too few dims");
    return it->second.dims[axis];
  }

 private:
  fs::path dir_;
  std::map<std::string, ArrayEntry> entries_;
};

std::vector<int> to_ints(const std::vector<double>& v, const std::string& name) {
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != std::floor(v[i])) throw AssetError("invalid model data: non-integer entry in '" + name + "'");
    out[i] = static_cast<int>(v[i]);
  }
  return out;
}

// ---- text tables ----------------------------------------------------------

std::vector<std::string> split_numbers(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AssetError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AssetError("cannot write " + path.string());
  out << text;
  if (!out) throw AssetError("write failed: " + path.string());
}

// ---- PNG ------------------------------------------------------------------

struct PngFile {
  std::FILE* f = nullptr;
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<std::uint16_t> values;  // width·height·channels
};

RawImage read_png(const fs::path& path) {
  PngFile file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw AssetError("cannot open image " + path.string());
  std::string what;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw AssetError("libpng initialization failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw AssetError("cannot decode image " + path.string() + ": " + what);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.values.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    if (img.depth == 16) {
      img.values[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    } else {
      img.values[i] = buffer[i];
    }
  }
  return img;
}

void write_png(const fs::path& path, int width, int height, int channels, int depth,
               const std::vector<std::uint16_t>& values) {
  PngFile file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw AssetError("cannot write image " + path.string());
  std::string what;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw AssetError("libpng initialization failed");
  }
  const std::size_t bpc = depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bpc;
  std::vector<std::uint8_t> buffer(rowbytes * height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (depth == 16) {
      buffer[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xff);
    } else {
      buffer[i] = static_cast<std::uint8_t>(values[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw AssetError("cannot encode image " + path.string() + ": " + what);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, width, height, depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

// ---- body model -------------------------------------------------------------

SkinnedBodyModel load_body_model_archive(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw AssetError("malformed archive: " + dir.string() + " is not a directory");
  const Archive ar(dir);
  const long n = ar.extent("v_template", 0);
  const long f = ar.extent("faces", 0);
  const long j = ar.extent("J_regressor", 0);
  if (j < 1 || j > kSmplJoints) throw AssetError("invalid model data: joint count " + std::to_string(j));

  SkinnedBodyModel m;
  const std::vector<double> v = ar.read("v_template", {n, 3});
  m.template_vertices = Eigen::Map<const Vertices>(v.data(), n, 3);
  const std::vector<int> faces = to_ints(ar.read("faces", {f, 3}), "faces");
  m.faces = Eigen::Map<const Faces>(faces.data(), f, 3);
  const std::vector<double> sd = ar.read("shapedirs", {n, 3, kShapeDims});
  m.shape_dirs = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      sd.data(), 3 * n, kShapeDims);
  const long p = 9 * (j - 1);
  const std::vector<double> pd = ar.read("posedirs", {n, 3, p});
  m.pose_dirs =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(pd.data(), 3 * n, p);
  const std::vector<double> jr = ar.read("J_regressor", {j, n});
  m.joint_regressor =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(jr.data(), j, n);
  const std::vector<double> w = ar.read("weights", {n, j});
  m.skin_weights =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), n, j);

  if (ar.has("parents")) {
    m.parents = to_ints(ar.read("parents", {j}), "parents");
  } else if (j == kSmplJoints) {
    m.parents.assign(smpl_parents().begin(), smpl_parents().end());
  } else {
    throw AssetError("malformed archive: missing field 'parents'");
  }
  if (ar.has("part_labels")) {
    m.part_labels = to_ints(ar.read("part_labels", {n}), "part_labels");
  } else if (j == kSmplJoints) {
    m.part_labels = derive_part_labels(m.skin_weights, {smpl_joint_parts().begin(), smpl_joint_parts().end()});
  } else {
    throw AssetError("malformed archive: missing field 'part_labels'");
  }
  validate(m);
  return m;
}

void save_body_model_archive(const SkinnedBodyModel& m, const fs::path& dir) {
  fs::create_directories(dir);
  std::string manifest = "# body model archive\n";
  auto put_f64 = [&](const std::string& name, const std::vector<long>& dims, const double* data, std::size_t count) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(count * 8);
    for (std::size_t i = 0; i < count; ++i) store_le<double>(bytes, data[i]);
    write_file(dir / (name + ".bin"), bytes);
    manifest += name + " f64 " + dims_string(dims).substr(1, dims_string(dims).size() - 2) + " " + name + ".bin\n";
  };
  auto put_i32 = [&](const std::string& name, const std::vector<long>& dims, const int* data, std::size_t count) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(count * 4);
    for (std::size_t i = 0; i < count; ++i) store_le<std::int32_t>(bytes, data[i]);
    write_file(dir / (name + ".bin"), bytes);
    manifest += name + " i32 " + dims_string(dims).substr(1, dims_string(dims).size() - 2) + " " + name + ".bin\n";
  };
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const long n = m.num_vertices();
  const long j = m.num_joints();
  put_f64("v_template", {n, 3}, m.template_vertices.data(), m.template_vertices.size());
  put_i32("faces", {m.faces.rows(), 3}, m.faces.data(), m.faces.size());
  const RowMajor sd = m.shape_dirs;
  put_f64("shapedirs", {n, 3, kShapeDims}, sd.data(), sd.size());
  const RowMajor pd = m.pose_dirs;
  put_f64("posedirs", {n, 3, static_cast<long>(m.pose_dirs.cols())}, pd.data(), pd.size());
  const RowMajor jr = m.joint_regressor;
  put_f64("J_regressor", {j, n}, jr.data(), jr.size());
  const RowMajor w = m.skin_weights;
  put_f64("weights", {n, j}, w.data(), w.size());
  put_i32("part_labels", {n}, m.part_labels.data(), m.part_labels.size());
  put_i32("parents", {j}, m.parents.data(), m.parents.size());
  write_text(dir / "manifest.txt", manifest);
}

// ---- motion -------------------------------------------------------------------

MotionSequence parse_motion_sequence(const std::string& text) {
  MotionSequence m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      const std::string body = line.substr(first + 1);
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      std::string key = body.substr(0, colon);
      key.erase(0, key.find_first_not_of(' '));
      key.erase(key.find_last_not_of(' ') + 1);
      const std::vector<std::string> vals = split_numbers(body.substr(colon + 1));
      if (key == "fps" && vals.size() == 1) m.fps = parse_double(vals[0], "motion fps");
      if (key == "camera_ref") {
        for (const std::string& v : vals) m.camera_ref.push_back(static_cast<int>(parse_double(v, "camera_ref")));
      }
      continue;
    }
    const std::vector<std::string> tokens = split_numbers(line);
    const std::size_t index = m.frames.size();
    if (tokens.size() != kPoseDims) {
      throw AssetError("motion parse error at frame " + std::to_string(index) + ": " + std::to_string(tokens.size()) +
                       " values, expected 72");
    }
    PoseParams p;
    for (int k = 0; k < kPoseDims; ++k) {
      p.theta[k] = parse_double(tokens[k], "motion frame " + std::to_string(index));
    }
    m.frames.push_back(p);
  }
  if (m.frames.empty()) throw AssetError("motion parse error: no frames");
  if (!m.camera_ref.empty() && m.camera_ref.size() != m.frames.size()) {
    throw AssetError("motion parse error: camera_ref has " + std::to_string(m.camera_ref.size()) + " entries for " +
                     std::to_string(m.frames.size()) + " frames");
  }
  return m;
}

MotionSequence load_motion_sequence(const fs::path& path) {
  try {
    return parse_motion_sequence(read_text(path));
  } catch (const AssetError& e) {
    throw AssetError(path.string() + ": " + e.what());
  }
}

void save_motion_sequence(const MotionSequence& motion, const fs::path& path) {
  std::string text = "# fps: " + format_double(motion.fps) + "\n";
  if (!motion.camera_ref.empty()) {
    text += "# camera_ref:";
    for (int c : motion.camera_ref) text += " " + std::to_string(c);
    text += "\n";
  }
  for (const PoseParams& p : motion.frames) {
    for (int k = 0; k < kPoseDims; ++k) text += (k ? " " : "") + format_double(p.theta[k]);
    text += "\n";
  }
  write_text(path, text);
}

// ---- images -------------------------------------------------------------------

ImageBuffer load_image(const fs::path& path) {
  const RawImage raw = read_png(path);
  const double scale = raw.depth == 16 ? 65535.0 : 255.0;
  ImageBuffer img(raw.width, raw.height);
  const bool gray = raw.channels <= 2;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = raw.values[base + (gray ? 0 : c)] / scale;
    }
  }
  return img;
}

SilhouetteMask load_mask(const fs::path& path) {
  const ImageBuffer img = load_image(path);
  SilhouetteMask mask(img.width(), img.height(), 0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double mean = (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
      mask(x, y) = mean >= 0.5 ? 1 : 0;
    }
  }
  return mask;
}

std::pair<ImageBuffer, SilhouetteMask> load_image_with_mask(const fs::path& image_path, const fs::path& mask_path) {
  ImageBuffer img = load_image(image_path);
  SilhouetteMask mask = load_mask(mask_path);
  if (!mask.same_size(img.width(), img.height())) {
    throw AssetError("resolution mismatch: image " + image_path.string() + " is " + std::to_string(img.width()) + "x" +
                     std::to_string(img.height()) + ", mask " + mask_path.string() + " is " +
                     std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
  }
  return {std::move(img), std::move(mask)};
}

void save_image(const ImageBuffer& image, const fs::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  if (image.empty()) throw std::invalid_argument("cannot save an empty image");
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> values(image.data().size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(image.data()[i]) ? std::clamp(image.data()[i], 0.0, 1.0) : 0.0;
    values[i] = static_cast<std::uint16_t>(std::lround(v * scale));
  }
  write_png(path, image.width(), image.height(), 3, bit_depth, values);
}

void save_mask(const SilhouetteMask& mask, const fs::path& path) {
  std::vector<std::uint16_t> values(mask.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = mask.data()[i] ? 255 : 0;
  write_png(path, mask.width(), mask.height(), 1, 8, values);
}

int write_frame_sequence(const std::vector<ImageBuffer>& frames, const fs::path& out_dir) {
  if (frames.empty()) throw std::invalid_argument("no frames");
  for (const ImageBuffer& f : frames) {
    if (!f.same_size(frames.front())) throw std::invalid_argument("frames differ in resolution");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw AssetError("cannot create output directory " + out_dir.string());
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    save_image(frames[i], out_dir / name);
  }
  return static_cast<int>(frames.size());
}

// ---- cameras ------------------------------------------------------------------

std::vector<Camera> load_cameras(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Camera> cams;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::vector<std::string> t = split_numbers(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (t.size() != 18) throw AssetError(where + ": camera record has " + std::to_string(t.size()) + " values, expected 18");
    double v[18];
    for (int k = 0; k < 18; ++k) v[k] = parse_double(t[k], where);
    Camera c;
    c.fx = v[0];
    c.fy = v[1];
    c.cx = v[2];
    c.cy = v[3];
    for (int k = 0; k < 9; ++k) c.R(k / 3, k % 3) = v[4 + k];
    c.t = {v[13], v[14], v[15]};
    if (v[16] != std::floor(v[16]) || v[17] != std::floor(v[17]) || v[16] < 1 || v[17] < 1) {
      throw AssetError(where + ": image size must be positive integers");
    }
    c.width = static_cast<int>(v[16]);
    c.height = static_cast<int>(v[17]);
    try {
      validate(c);
    } catch (const std::invalid_argument& e) {
      throw AssetError(where + ": " + e.what());
    }
    cams.push_back(c);
  }
  if (cams.empty()) throw AssetError(path.string() + ": no cameras");
  return cams;
}

void save_cameras(const std::vector<Camera>& cameras, const fs::path& path) {
  std::string text = "# fx fy cx cy R00 R01 R02 R10 R11 R12 R20 R21 R22 tx ty tz width height\n";
  for (const Camera& c : cameras) {
    std::vector<double> v = {c.fx, c.fy, c.cx, c.cy};
    for (int k = 0; k < 9; ++k) v.push_back(c.R(k / 3, k % 3));
    v.insert(v.end(), {c.t.x(), c.t.y(), c.t.z()});
    for (std::size_t k = 0; k < v.size(); ++k) text += (k ? " " : "") + format_double(v[k]);
    text += " " + std::to_string(c.width) + " " + std::to_string(c.height) + "\n";
  }
  write_text(path, text);
}

BodyShapeParams load_shape(const fs::path& path) {
  std::vector<std::string> tokens;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    for (std::string& t : split_numbers(line)) tokens.push_back(std::move(t));
  }
  if (tokens.size() > kShapeDims) throw AssetError(path.string() + ": more than 10 shape coefficients");
  BodyShapeParams s;
  for (std::size_t k = 0; k < tokens.size(); ++k) s.beta[k] = parse_double(tokens[k], path.string());
  return s;
}

void save_shape(const BodyShapeParams& shape, const fs::path& path) {
  std::string text;
  for (int k = 0; k < kShapeDims; ++k) text += (k ? " " : "") + format_double(shape.beta[k]);
  write_text(path, text + "\n");
}

// ---- misc ---------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& token, const std::string& context) {
  double v = 0.0;
  const char* end = token.data() + token.size();
  const auto r = std::from_chars(token.data(), end, v);
  if (r.ec != std::errc{} || r.ptr != end || !std::isfinite(v)) {
    throw AssetError(context + ": bad number '" + token + "'");
  }
  return v;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string path_digest(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_hex(read_file(path));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::uint8_t> all;
  for (const fs::path& f : files) {
    const std::string rel = fs::relative(f, path).generic_string();
    all.insert(all.end(), rel.begin(), rel.end());
    all.push_back(0);
    const std::string d = sha256_hex(read_file(f));
    all.insert(all.end(), d.begin(), d.end());
  }
  return sha256_hex(all);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AssetError("cannot read " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AssetError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw AssetError("write failed: " + path.string());
}

}  // namespace avatar
