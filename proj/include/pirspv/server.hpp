#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pirspv/cpir.hpp"
#include "pirspv/db_build.hpp"
#include "pirspv/itpir.hpp"
#include "pirspv/manifest.hpp"
#include "pirspv/pirdb.hpp"
#include "pirspv/wire.hpp"

namespace pirspv {

// Everything one server instance hosts: the nine databases, their
// manifest bytes, and the header list.
struct ServerData {
  std::map<std::pair<DbKind, DbPeriod>, PirDatabase> databases;
  std::map<std::pair<DbKind, DbPeriod>, std::string> manifests;
  std::vector<std::uint8_t> headers_blob;  // concatenated 80-byte headers
};

inline ServerData server_data_from_build(const BuildOutput& build) {
  ServerData data;
  for (const auto& [key, built] : build.databases) {
    data.databases[key] = built.db;
    data.manifests[key] = manifest_to_json(built.manifest);
  }
  for (const auto& h : build.headers) {
    auto bytes = h.serialize();
    data.headers_blob.insert(data.headers_blob.end(), bytes.begin(), bytes.end());
  }
  return data;
}

inline ServerData load_server_data(const std::string& dir) {
  ServerData data;
  for (DbKind k : kAllKinds) {
    for (DbPeriod p : kAllPeriods) {
      data.databases[{k, p}] = read_pirdb_file(dir + "/" + db_filename(k, p));
      std::ifstream mf(dir + "/" + manifest_filename(k, p));
      if (!mf) throw std::runtime_error("missing manifest in " + dir);
      std::stringstream ss;
      ss << mf.rdbuf();
      data.manifests[{k, p}] = ss.str();
    }
  }
  std::ifstream hf(dir + "/headers.bin", std::ios::binary);
  if (!hf) throw std::runtime_error("missing headers.bin in " + dir);
  data.headers_blob.assign(std::istreambuf_iterator<char>(hf), std::istreambuf_iterator<char>());
  if (data.headers_blob.size() % BlockHeader::kSerializedSize != 0)
    throw std::runtime_error("headers.bin is not a multiple of 80 bytes");
  return data;
}

// Request dispatch against an immutable snapshot. Thread safe by
// construction: handlers only read shared state.
class ServerCore {
 public:
  ServerCore(std::shared_ptr<const ServerData> data, std::uint8_t server_index)
      : data_(std::move(data)),
        server_index_(server_index),
        alpha_(static_cast<gf::Elem>(server_index + 1)) {}

  std::uint8_t server_index() const { return server_index_; }
  gf::Elem alpha() const { return alpha_; }

  Frame handle(const Frame& request, WireStats* stats = nullptr) const {
    Frame response = dispatch(request);
    if (stats != nullptr) {
      stats->wire_received += request.wire_size();
      stats->wire_sent += response.wire_size();
      stats->frames += 1;
      auto& t = stats->by_type[request.type];
      t.received_payload += request.payload.size();
      t.sent_payload += response.payload.size();
      t.frames += 1;
    }
    return response;
  }

 private:
  Frame dispatch(const Frame& request) const {
    switch (static_cast<MsgType>(request.type)) {
      case MsgType::GetManifest: return handle_manifest(request);
      case MsgType::GetHeaders: return handle_headers(request);
      case MsgType::PirQuery: return handle_pir_query(request);
      case MsgType::GetDbMeta: return handle_meta(request);
      case MsgType::GetFullDb: return handle_full_db(request);
      default:
        return make_error_frame(WireErrorCode::UnknownType, "unknown message type");
    }
  }

  const PirDatabase* find_db(std::uint8_t kind, std::uint8_t period) const {
    if (kind > 2 || period > 2) return nullptr;
    auto it = data_->databases.find({static_cast<DbKind>(kind), static_cast<DbPeriod>(period)});
    return it == data_->databases.end() ? nullptr : &it->second;
  }

  static Frame ok(std::uint8_t type, std::vector<std::uint8_t> payload) {
    Frame f;
    f.type = type;
    f.payload = std::move(payload);
    return f;
  }

  Frame handle_manifest(const Frame& req) const {
    if (req.payload.size() != 2)
      return make_error_frame(WireErrorCode::BadRequest, "manifest request wants kind, period");
    auto it = data_->manifests.find(
        {static_cast<DbKind>(req.payload[0]), static_cast<DbPeriod>(req.payload[1])});
    if (req.payload[0] > 2 || req.payload[1] > 2 || it == data_->manifests.end())
      return make_error_frame(WireErrorCode::NotFound, "no such database");
    return ok(req.type, {it->second.begin(), it->second.end()});
  }

  Frame handle_headers(const Frame& req) const {
    if (req.payload.size() != 4)
      return make_error_frame(WireErrorCode::BadRequest, "headers request wants u32 from_height");
    std::uint32_t from = 0;
    for (int i = 0; i < 4; ++i) from |= static_cast<std::uint32_t>(req.payload[i]) << (8 * i);
    const std::size_t offset =
        std::min<std::size_t>(static_cast<std::size_t>(from) * BlockHeader::kSerializedSize,
                              data_->headers_blob.size());
    return ok(req.type, {data_->headers_blob.begin() + static_cast<std::ptrdiff_t>(offset),
                         data_->headers_blob.end()});
  }

  Frame handle_pir_query(const Frame& req) const {
    if (req.payload.size() < kPirRouteBytes)
      return make_error_frame(WireErrorCode::BadRequest, "pir query wants kind, period, backend");
    const PirDatabase* db = find_db(req.payload[0], req.payload[1]);
    if (db == nullptr) return make_error_frame(WireErrorCode::NotFound, "no such database");
    std::span<const std::uint8_t> blob(req.payload.data() + kPirRouteBytes,
                                       req.payload.size() - kPirRouteBytes);
    try {
      switch (static_cast<PirBackendId>(req.payload[2])) {
        case PirBackendId::ItPir:
          return ok(req.type, itpir_compute(blob, *db));
        case PirBackendId::CPir:
          return ok(req.type, cpir_compute(blob, *db));
        default:
          return make_error_frame(WireErrorCode::BadRequest, "unknown pir backend");
      }
    } catch (const ProtocolError& e) {
      return make_error_frame(WireErrorCode::BadRequest, e.what());
    } catch (const std::exception& e) {
      return make_error_frame(WireErrorCode::Internal, e.what());
    }
  }

  Frame handle_meta(const Frame& req) const {
    if (req.payload.size() != 2)
      return make_error_frame(WireErrorCode::BadRequest, "meta request wants kind, period");
    const PirDatabase* db = find_db(req.payload[0], req.payload[1]);
    if (db == nullptr) return make_error_frame(WireErrorCode::NotFound, "no such database");
    DbMeta meta;
    meta.kind = req.payload[0];
    meta.period = req.payload[1];
    meta.row_width = db->row_width;
    meta.num_rows = db->num_rows;
    meta.item_unit = db->item_unit;
    meta.server_index = server_index_;
    meta.alpha = alpha_;
    return ok(req.type, meta.encode());
  }

  Frame handle_full_db(const Frame& req) const {
    if (req.payload.size() != 2)
      return make_error_frame(WireErrorCode::BadRequest, "full-db request wants kind, period");
    const PirDatabase* db = find_db(req.payload[0], req.payload[1]);
    if (db == nullptr) return make_error_frame(WireErrorCode::NotFound, "no such database");
    return ok(req.type, db->payload);
  }

  std::shared_ptr<const ServerData> data_;
  std::uint8_t server_index_;
  gf::Elem alpha_;
};

namespace net {

inline void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) throw ChannelError("socket write failed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

// Returns false on clean EOF at a frame boundary.
inline bool read_all(int fd, std::uint8_t* data, std::size_t len, bool eof_ok) {
  std::size_t got = 0;
  while (got < len) {
    ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n == 0) {
      if (eof_ok && got == 0) return false;
      throw ChannelError("socket closed mid-frame");
    }
    if (n < 0) throw ChannelError("socket read failed");
    got += static_cast<std::size_t>(n);
  }
  return true;
}

inline void write_frame(int fd, const Frame& frame) {
  std::uint8_t head[kFrameOverhead];
  const std::uint32_t len = static_cast<std::uint32_t>(frame.payload.size());
  for (int i = 0; i < 4; ++i) head[i] = static_cast<std::uint8_t>(len >> (8 * i));
  head[4] = frame.type;
  write_all(fd, head, sizeof(head));
  if (!frame.payload.empty()) write_all(fd, frame.payload.data(), frame.payload.size());
}

// Empty optional on clean EOF; throws ChannelError on oversized frames.
inline std::optional<Frame> read_frame(int fd, std::size_t max_frame) {
  std::uint8_t head[kFrameOverhead];
  if (!read_all(fd, head, sizeof(head), true)) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(head[i]) << (8 * i);
  if (len > max_frame) throw ChannelError("frame exceeds maximum size");
  Frame frame;
  frame.type = head[4];
  frame.payload.resize(len);
  if (len > 0) read_all(fd, frame.payload.data(), len, false);
  return frame;
}

inline sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw ChannelError("invalid IPv4 address: " + host);
  return addr;
}

}  // namespace net

// Thread-per-connection TCP front end over a ServerCore. Oversized frames
// close the connection; malformed requests get error frames and the
// connection stays open.
class TcpServer {
 public:
  TcpServer(std::shared_ptr<const ServerData> data, std::uint8_t server_index,
            std::size_t max_frame = kDefaultMaxFrame)
      : core_(std::move(data), server_index), max_frame_(max_frame) {}

  ~TcpServer() { stop(); }

  // Binds and starts accepting; returns the bound port (useful with port 0).
  std::uint16_t start(const std::string& host, std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ChannelError("cannot create listen socket");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = net::make_addr(host, port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw ChannelError("bind failed on " + host + ":" + std::to_string(port));
    if (::listen(listen_fd_, 64) != 0) throw ChannelError("listen failed");
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    return ntohs(addr.sin_port);
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      workers.swap(workers_);
      for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& w : workers)
      if (w.joinable()) w.join();
  }

  const ServerCore& core() const { return core_; }

 private:
  void accept_loop() {
    while (running_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_) break;
        continue;
      }
      std::lock_guard<std::mutex> lock(mutex_);
      conn_fds_.insert(fd);
      workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
  }

  void serve_connection(int fd) {
    try {
      WireStats stats;
      while (running_) {
        auto request = net::read_frame(fd, max_frame_);
        if (!request) break;
        Frame response = core_.handle(*request, &stats);
        net::write_frame(fd, response);
      }
    } catch (const ChannelError&) {
      // oversized frame or peer failure: drop the connection
    }
    ::close(fd);
    std::lock_guard<std::mutex> lock(mutex_);
    conn_fds_.erase(fd);
  }

  ServerCore core_;
  std::size_t max_frame_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::set<int> conn_fds_;
};

}  // namespace pirspv
