#include "avatar/adapter.hpp"

#include "avatar/error.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>

namespace avatar::adapter {

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void Writer::image(const ImageBuffer& img) {
  u32(static_cast<std::uint32_t>(img.height()));
  u32(static_cast<std::uint32_t>(img.width()));
  f32_array(img.data());
}

void Writer::f32_array(std::span<const double> values) {
  for (double v : values) f32(static_cast<float>(v));
}

void Reader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw AdapterError("adapter: truncated message");
}

std::uint8_t Reader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }

ImageBuffer Reader::image() {
  const std::uint32_t h = u32();
  const std::uint32_t w = u32();
  if (h == 0 || w == 0 || h > 16384 || w > 16384) throw AdapterError("adapter: bad image size");
  ImageBuffer img(static_cast<int>(w), static_cast<int>(h));
  need(img.data().size() * 4);
  for (double& v : img.data()) v = f32();
  return img;
}

std::vector<double> Reader::f32_array(std::size_t n) {
  need(n * 4);
  std::vector<double> out(n);
  for (double& v : out) v = f32();
  return out;
}

std::string Reader::rest() {
  std::string s(bytes_.begin() + pos_, bytes_.end());
  pos_ = bytes_.size();
  return s;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(9 + frame.body.size()));
  w.u64(frame.id);
  w.u8(frame.code);
  w.bytes().insert(w.bytes().end(), frame.body.begin(), frame.body.end());
  return std::move(w.bytes());
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint32_t len = r.u32();
  if (len < 9 || len != bytes.size() - 4) throw AdapterError("adapter: bad frame length");
  Frame f;
  f.id = r.u64();
  f.code = r.u8();
  f.body.assign(bytes.begin() + 13, bytes.end());
  return f;
}

Client::Client(std::string socket_path) : path_(std::move(socket_path)) {}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::connect_socket() {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path_.empty() || path_.size() >= sizeof(addr.sun_path)) {
    throw AdapterError("adapter: invalid socket path '" + path_ + "'");
  }
  std::memcpy(addr.sun_path, path_.c_str(), path_.size() + 1);
  fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd_ < 0) throw AdapterError("adapter: socket() failed: " + std::string(std::strerror(errno)));
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw AdapterError("adapter unreachable at '" + path_ + "': " + why);
  }
}

void Client::send_all(const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw AdapterError("adapter: send failed on '" + path_ + "'");
    }
    off += static_cast<std::size_t>(n);
  }
}

void Client::recv_all(std::uint8_t* dst, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    const ssize_t n = ::recv(fd_, dst + off, len - off, 0);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw AdapterError("adapter: connection closed by '" + path_ + "'");
    }
    off += static_cast<std::size_t>(n);
  }
}

std::vector<std::uint8_t> Client::call(Kind kind, const std::vector<std::uint8_t>& payload) {
  std::lock_guard lock(mutex_);
  if (fd_ < 0) connect_socket();
  const std::uint64_t id = next_id_++;
  try {
    send_all(encode_frame({id, static_cast<std::uint8_t>(kind), payload}));
    std::vector<std::uint8_t> buf(4);
    recv_all(buf.data(), 4);
    const std::uint32_t len = Reader(buf).u32();
    if (len < 9 || len > (1u << 30)) throw AdapterError("adapter: bad response length");
    buf.resize(4 + len);
    recv_all(buf.data() + 4, len);
    Frame reply = decode_frame(buf);
    if (reply.id != id) {
      throw AdapterError("adapter: response id " + std::to_string(reply.id) + " does not match request " +
                         std::to_string(id));
    }
    if (reply.code != 0) {
      throw AdapterError("adapter error: " + std::string(reply.body.begin(), reply.body.end()));
    }
    return std::move(reply.body);
  } catch (...) {
    // the stream may be mid-frame; reconnect on the next call
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

}  // namespace avatar::adapter
