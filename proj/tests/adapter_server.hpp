#pragma once

// In-process stand-in for an external encoder: listens on a Unix socket and
// answers each request frame through a caller-supplied handler.

#include "avatar/adapter.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <thread>

namespace avatar::test {

class AdapterServer {
 public:
  using Handler = std::function<adapter::Frame(const adapter::Frame& request)>;

  AdapterServer(std::filesystem::path socket_path, Handler handler)
      : path_(std::move(socket_path)), handler_(std::move(handler)) {
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    const std::string p = path_.string();
    if (p.size() >= sizeof(addr.sun_path)) throw std::runtime_error("socket path too long");
    std::memcpy(addr.sun_path, p.c_str(), p.size() + 1);
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 4) != 0) {
      throw std::runtime_error("cannot listen on " + p);
    }
    thread_ = std::thread([this] { serve(); });
  }

  ~AdapterServer() {
    stopping_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (const int fd = client_fd_.load(); fd >= 0) ::shutdown(fd, SHUT_RDWR);
    thread_.join();
  }

  std::string path() const { return path_.string(); }
  int requests() const { return requests_; }

 private:
  static bool read_exact(int fd, std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      const ssize_t got = ::recv(fd, dst + off, n - off, 0);
      if (got <= 0) return false;
      off += static_cast<std::size_t>(got);
    }
    return true;
  }

  void serve() {
    while (!stopping_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      client_fd_ = fd;
      for (;;) {
        std::vector<std::uint8_t> buf(4);
        if (!read_exact(fd, buf.data(), 4)) break;
        const std::uint32_t len = adapter::Reader(buf).u32();
        buf.resize(4 + len);
        if (!read_exact(fd, buf.data() + 4, len)) break;
        const adapter::Frame reply = handler_(adapter::decode_frame(buf));
        ++requests_;
        const std::vector<std::uint8_t> out = adapter::encode_frame(reply);
        if (::send(fd, out.data(), out.size(), MSG_NOSIGNAL) != static_cast<ssize_t>(out.size())) break;
      }
      client_fd_ = -1;
      ::close(fd);
    }
  }

  std::filesystem::path path_;
  Handler handler_;
  int listen_fd_ = -1;
  std::atomic<int> client_fd_{-1};
  std::atomic<bool> stopping_{false};
  std::atomic<int> requests_{0};
  std::thread thread_;
};

}  // namespace avatar::test
