#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pirspv {

// Length-prefixed binary frames: u32le payload length, u8 message type,
// payload bytes.
enum class MsgType : std::uint8_t {
  GetManifest = 0x01,  // request: u8 kind, u8 period          -> manifest JSON bytes
  GetHeaders = 0x02,   // request: u32le from_height           -> concatenated 80-byte headers
  PirQuery = 0x03,     // request: u8 kind, u8 period, u8 backend, query blob -> response blob
  GetDbMeta = 0x04,    // request: u8 kind, u8 period          -> DbMeta
  GetFullDb = 0x05,    // request: u8 kind, u8 period          -> whole payload
  Error = 0xFF,        // response only: u8 code, message text
};

enum class PirBackendId : std::uint8_t { ItPir = 0, CPir = 1 };

enum class WireErrorCode : std::uint8_t {
  UnknownType = 1,
  BadRequest = 2,
  NotFound = 3,
  Internal = 4,
};

inline constexpr std::size_t kFrameOverhead = 5;        // u32 length + u8 type
inline constexpr std::size_t kPirRouteBytes = 3;        // kind + period + backend
inline constexpr std::size_t kDefaultMaxFrame = 64ull << 20;

struct Frame {
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;

  std::size_t wire_size() const { return kFrameOverhead + payload.size(); }
};

struct ChannelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Frame make_error_frame(WireErrorCode code, const std::string& message) {
  Frame f;
  f.type = static_cast<std::uint8_t>(MsgType::Error);
  f.payload.push_back(static_cast<std::uint8_t>(code));
  f.payload.insert(f.payload.end(), message.begin(), message.end());
  return f;
}

struct DbMeta {
  std::uint8_t kind = 0;
  std::uint8_t period = 0;
  std::uint32_t row_width = 0;
  std::uint32_t num_rows = 0;
  std::uint8_t item_unit = 0;
  std::uint8_t server_index = 0;
  std::uint8_t alpha = 0;

  static constexpr std::size_t kSize = 13;

  std::vector<std::uint8_t> encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(kSize);
    out.push_back(kind);
    out.push_back(period);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(row_width >> (8 * i)));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(num_rows >> (8 * i)));
    out.push_back(item_unit);
    out.push_back(server_index);
    out.push_back(alpha);
    return out;
  }

  static DbMeta decode(std::span<const std::uint8_t> in) {
    if (in.size() != kSize) throw std::invalid_argument("db meta: wrong size");
    DbMeta m;
    m.kind = in[0];
    m.period = in[1];
    for (int i = 0; i < 4; ++i) m.row_width |= static_cast<std::uint32_t>(in[2 + i]) << (8 * i);
    for (int i = 0; i < 4; ++i) m.num_rows |= static_cast<std::uint32_t>(in[6 + i]) << (8 * i);
    m.item_unit = in[10];
    m.server_index = in[11];
    m.alpha = in[12];
    return m;
  }
};

// Per-session traffic accounting, exact to the framed byte. Payload bytes
// are tracked per request type; frame headers are counted separately so
// reports can include or exclude them.
struct WireStats {
  struct PerType {
    std::uint64_t received_payload = 0;
    std::uint64_t sent_payload = 0;
    std::uint64_t frames = 0;
  };
  std::map<std::uint8_t, PerType> by_type;  // keyed by request type
  std::uint64_t wire_received = 0;          // includes the 5-byte frame header
  std::uint64_t wire_sent = 0;
  std::uint64_t frames = 0;

  std::uint64_t overhead() const { return frames * 2 * kFrameOverhead; }
};

}  // namespace pirspv
