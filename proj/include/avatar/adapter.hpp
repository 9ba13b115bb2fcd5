#pragma once

#include "avatar/image.hpp"

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avatar::adapter {

// Wire format (all integers and floats little-endian):
//   request  = u32 length | u64 id | u8 kind | payload
//   response = u32 length | u64 id | u8 status | body
// `length` counts the bytes after itself. status 0 means success; any other
// value carries a UTF-8 error message as the body. See docs/adapter_protocol.md.

enum class Kind : std::uint8_t {
  kImage = 1,       // image -> embedding
  kText = 2,        // text -> embedding
  kImageVjp = 3,    // image + cotangent -> d(embedding·cotangent)/d(image)
  kPerceptual = 4,  // image a + image b -> distance and d/d(a)
};

struct Frame {
  std::uint64_t id = 0;
  std::uint8_t code = 0;  // request kind or response status
  std::vector<std::uint8_t> body;
};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void image(const ImageBuffer& img);
  void f32_array(std::span<const double> values);
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; malformed input throws AdapterError.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  ImageBuffer image();
  std::vector<double> f32_array(std::size_t n);
  std::string rest();
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
/// Decodes one complete frame (length prefix included).
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// Blocking client over a Unix-domain stream socket. One request in flight
/// at a time; replies are matched against the request id.
class Client {
 public:
  explicit Client(std::string socket_path);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  const std::string& path() const { return path_; }

  /// Sends a request and returns the success body. Throws AdapterError on
  /// connection failure, id mismatch, or a nonzero status.
  std::vector<std::uint8_t> call(Kind kind, const std::vector<std::uint8_t>& payload);

 private:
  void connect_socket();
  void send_all(const std::vector<std::uint8_t>& bytes);
  void recv_all(std::uint8_t* dst, std::size_t n);

  std::string path_;
  int fd_ = -1;
  std::uint64_t next_id_ = 1;
  std::mutex mutex_;
};

}  // namespace avatar::adapter
