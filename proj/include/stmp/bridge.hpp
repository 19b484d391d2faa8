#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stmp/score.hpp"
#include "stmp/tensor.hpp"

// Score bridge: a little-endian request/response protocol over a byte stream
// that lets an out-of-process score model back the channel denoiser.
//
// Request:  "STMP" u8 version=1, u8 op, u16 reserved=0, u32 B, u32 N, u32 M,
//           f64 tau, then B*N*M (f64 re, f64 im), k-major then n then m.
// Response: "STMP" u8 version, u8 op, u8 status, then score1 entries
//           (f64 re, f64 im) for op 1|3 and score2 entries (f64) for op 2|3.
//           Non-zero status carries no payload.
namespace stmp::bridge {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kRequestHeaderBytes = 28;
inline constexpr std::size_t kResponseHeaderBytes = 7;
/// Frames announcing more entries than this are treated as malformed.
inline constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 26;

enum class Op : std::uint8_t { score1 = 1, score2 = 2, both = 3 };
enum class Status : std::uint8_t { ok = 0, bad_tau = 1, shape_error = 2 };

inline bool wants_first(Op op) { return op == Op::score1 || op == Op::both; }
inline bool wants_second(Op op) { return op == Op::score2 || op == Op::both; }

struct Request {
  Op op = Op::both;
  double tau = 0.0;
  CTensor3 h;  ///< (B, N, M)
};

struct Response {
  std::uint8_t version = kVersion;
  Op op = Op::both;
  Status status = Status::ok;
  CTensor3 score1;
  RTensor3 score2;
};

std::vector<std::uint8_t> encode_request(const Request& req);
std::vector<std::uint8_t> encode_response(const Response& resp);

/// Bidirectional byte stream. Reads and writes throw BridgeError on failure.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  /// Fills `out` completely, or returns false on a clean EOF before the
  /// first byte. EOF mid-buffer throws BridgeError.
  virtual bool read_exact(std::span<std::uint8_t> out) = 0;
};

/// Stream over a pair of file descriptors (which may be the same socket).
class FdStream : public ByteStream {
 public:
  FdStream(int read_fd, int write_fd, bool owns);
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  bool read_exact(std::span<std::uint8_t> out) override;

 protected:
  int read_fd_;
  int write_fd_;
  bool owns_;
};

std::unique_ptr<ByteStream> connect_tcp(const std::string& host, std::uint16_t port);
/// Runs `command` under /bin/sh with its stdin/stdout wired to the stream.
std::unique_ptr<ByteStream> spawn_process(const std::string& command);
/// "host:port", "tcp://host:port" or "exec:<shell command>".
std::unique_ptr<ByteStream> connect(std::string_view address);

/// Client side: reads one response matching the request's op and shape.
Response read_response(ByteStream& stream, Op op, std::size_t b, std::size_t n, std::size_t m);

/// Server side: reads one request; std::nullopt on clean EOF. Throws
/// FormatError on a malformed frame (bad magic, version, op, reserved field
/// or oversized payload).
std::optional<Request> read_request(ByteStream& stream);

/// Evaluates a request against an in-process model. tau outside the model's
/// domain gives bad_tau; second-order ops on a first-order-only model give
/// shape_error.
Response handle(const Request& req, const ScoreModel& model);

/// Answers requests in FIFO order until EOF or a malformed frame.
/// Returns the number of requests served.
std::size_t serve(ByteStream& stream, const ScoreModel& model);

/// Score model served by a remote process. Requests on one connection are
/// serialized; the object may be shared across threads.
class BridgeScore final : public ScoreModel {
 public:
  explicit BridgeScore(std::unique_ptr<ByteStream> stream, std::string label = "bridge");
  std::string name() const override { return label_; }
  bool has_second_order() const override { return true; }
  void evaluate(const CTensor3& h, double tau, CTensor3* score1, RTensor3* score2) const override;

  /// Raw request/response round trip.
  Response call(const Request& req) const;

 private:
  std::unique_ptr<ByteStream> stream_;
  std::string label_;
  mutable std::mutex mu_;
};

/// Minimal blocking TCP listener used by conformance tests and stubs.
class TcpListener {
 public:
  /// Port 0 picks an ephemeral port.
  explicit TcpListener(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<ByteStream> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace stmp::bridge
