#pragma once

#include <functional>
#include <memory>
#include <string>

#include "pirspv/server.hpp"
#include "pirspv/wire.hpp"

namespace pirspv {

// Client-side transport to one PIR server.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual Frame roundtrip(const Frame& request) = 0;
};

// Direct in-process dispatch against a ServerCore. Doubles as the fault
// injection point for robustness tests: a killed channel throws, a tamper
// hook rewrites responses before the client sees them.
class LoopbackChannel : public Channel {
 public:
  explicit LoopbackChannel(std::shared_ptr<const ServerData> data, std::uint8_t server_index)
      : core_(std::move(data), server_index) {}

  Frame roundtrip(const Frame& request) override {
    if (killed_) throw ChannelError("server unreachable");
    Frame response = core_.handle(request, &stats_);
    if (tamper_) tamper_(response);
    return response;
  }

  void kill() { killed_ = true; }
  void set_tamper(std::function<void(Frame&)> hook) { tamper_ = std::move(hook); }
  const WireStats& server_stats() const { return stats_; }
  const ServerCore& core() const { return core_; }

 private:
  ServerCore core_;
  WireStats stats_;
  bool killed_ = false;
  std::function<void(Frame&)> tamper_;
};

class TcpChannel : public Channel {
 public:
  TcpChannel(const std::string& host, std::uint16_t port,
             std::size_t max_frame = kDefaultMaxFrame)
      : max_frame_(max_frame) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ChannelError("cannot create socket");
    sockaddr_in addr = net::make_addr(host, port);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw ChannelError("cannot connect to " + host + ":" + std::to_string(port));
    }
  }

  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  Frame roundtrip(const Frame& request) override {
    net::write_frame(fd_, request);
    auto response = net::read_frame(fd_, max_frame_);
    if (!response) throw ChannelError("server closed the connection");
    return *response;
  }

 private:
  int fd_ = -1;
  std::size_t max_frame_;
};

}  // namespace pirspv
