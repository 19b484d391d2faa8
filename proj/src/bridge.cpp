#include "stmp/bridge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "stmp/binary_io.hpp"
#include "stmp/errors.hpp"

namespace stmp::bridge {
namespace {

constexpr char kMagic[4] = {'S', 'T', 'M', 'P'};

bool valid_op(std::uint8_t op) { return op >= 1 && op <= 3; }

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

std::vector<std::uint8_t> encode_request(const Request& req) {
  std::vector<std::uint8_t> buf;
  buf.reserve(kRequestHeaderBytes + req.h.size() * 16);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put<std::uint8_t>(buf, kVersion);
  binio::put<std::uint8_t>(buf, static_cast<std::uint8_t>(req.op));
  binio::put<std::uint16_t>(buf, 0);
  binio::put<std::uint32_t>(buf, static_cast<std::uint32_t>(req.h.dim0()));
  binio::put<std::uint32_t>(buf, static_cast<std::uint32_t>(req.h.dim1()));
  binio::put<std::uint32_t>(buf, static_cast<std::uint32_t>(req.h.dim2()));
  binio::put<double>(buf, req.tau);
  for (const auto& z : req.h.data()) {
    binio::put<double>(buf, z.real());
    binio::put<double>(buf, z.imag());
  }
  return buf;
}

std::vector<std::uint8_t> encode_response(const Response& resp) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put<std::uint8_t>(buf, resp.version);
  binio::put<std::uint8_t>(buf, static_cast<std::uint8_t>(resp.op));
  binio::put<std::uint8_t>(buf, static_cast<std::uint8_t>(resp.status));
  if (resp.status != Status::ok) return buf;
  if (wants_first(resp.op)) {
    for (const auto& z : resp.score1.data()) {
      binio::put<double>(buf, z.real());
      binio::put<double>(buf, z.imag());
    }
  }
  if (wants_second(resp.op))
    for (double v : resp.score2.data()) binio::put<double>(buf, v);
  return buf;
}

FdStream::FdStream(int read_fd, int write_fd, bool owns)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}

FdStream::~FdStream() {
  if (!owns_) return;
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

void FdStream::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t w = ::send(write_fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (w < 0 && errno == ENOTSOCK) w = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(errno_text("bridge write"));
    }
    done += static_cast<std::size_t>(w);
  }
}

bool FdStream::read_exact(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t r = ::read(read_fd_, out.data() + done, out.size() - done);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(errno_text("bridge read"));
    }
    if (r == 0) {
      if (done == 0) return false;
      throw BridgeError("bridge stream closed mid-frame");
    }
    done += static_cast<std::size_t>(r);
  }
  return true;
}

namespace {

class ChildStream final : public FdStream {
 public:
  ChildStream(int fd, pid_t pid) : FdStream(fd, fd, true), pid_(pid) {}
  ~ChildStream() override {
    ::shutdown(read_fd_, SHUT_RDWR);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

 private:
  pid_t pid_;
};

}  // namespace

std::unique_ptr<ByteStream> connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw BridgeError("resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw BridgeError("cannot connect to " + host + ":" + service);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<FdStream>(fd, fd, true);
}

std::unique_ptr<ByteStream> spawn_process(const std::string& command) {
  // A socketpair rather than two pipes lets writes use MSG_NOSIGNAL, so a
  // dead child surfaces as BridgeError instead of SIGPIPE.
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw BridgeError(errno_text("socketpair"));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw BridgeError(errno_text("fork"));
  }
  if (pid == 0) {
    ::close(sv[0]);
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::close(sv[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  return std::make_unique<ChildStream>(sv[0], pid);
}

std::unique_ptr<ByteStream> connect(std::string_view address) {
  if (address.starts_with("exec:")) return spawn_process(std::string(address.substr(5)));
  if (address.starts_with("tcp://")) address.remove_prefix(6);
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == address.size())
    throw BridgeError("bridge address must be host:port or exec:<command>");
  std::string host(address.substr(0, colon));
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const std::string port_text(address.substr(colon + 1));
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size() || port > 65535) throw std::out_of_range("port");
  } catch (const std::exception&) {
    throw BridgeError("bad port in bridge address: " + port_text);
  }
  return connect_tcp(host, static_cast<std::uint16_t>(port));
}

Response read_response(ByteStream& stream, Op op, std::size_t b, std::size_t n, std::size_t m) {
  std::uint8_t head[kResponseHeaderBytes];
  if (!stream.read_exact(head)) throw BridgeError("bridge closed before responding");
  if (std::memcmp(head, kMagic, 4) != 0) throw BridgeError("bridge response has bad magic");
  Response resp;
  resp.version = head[4];
  resp.op = static_cast<Op>(head[5]);
  resp.status = static_cast<Status>(head[6]);
  if (resp.version != kVersion) throw BridgeError("bridge response has unsupported version");
  if (resp.status != Status::ok) return resp;
  if (resp.op != op) throw BridgeError("bridge response echoes the wrong op");
  const std::size_t count = b * n * m;
  if (wants_first(op)) {
    std::vector<std::uint8_t> raw(count * 16);
    if (count && !stream.read_exact(raw)) throw BridgeError("bridge closed mid-response");
    resp.score1 = CTensor3(b, n, m);
    for (std::size_t i = 0; i < count; ++i)
      resp.score1.data()[i] = {binio::get<double>(&raw[16 * i]), binio::get<double>(&raw[16 * i + 8])};
  }
  if (wants_second(op)) {
    std::vector<std::uint8_t> raw(count * 8);
    if (count && !stream.read_exact(raw)) throw BridgeError("bridge closed mid-response");
    resp.score2 = RTensor3(b, n, m);
    for (std::size_t i = 0; i < count; ++i) resp.score2.data()[i] = binio::get<double>(&raw[8 * i]);
  }
  return resp;
}

std::optional<Request> read_request(ByteStream& stream) {
  std::uint8_t head[kRequestHeaderBytes];
  if (!stream.read_exact(head)) return std::nullopt;
  if (std::memcmp(head, kMagic, 4) != 0) throw FormatError("bad request magic");
  if (head[4] != kVersion) throw FormatError("unsupported request version");
  if (!valid_op(head[5])) throw FormatError("unknown op");
  if (binio::get<std::uint16_t>(&head[6]) != 0) throw FormatError("reserved field must be zero");
  const auto b = binio::get<std::uint32_t>(&head[8]);
  const auto n = binio::get<std::uint32_t>(&head[12]);
  const auto m = binio::get<std::uint32_t>(&head[16]);
  const std::uint64_t count = std::uint64_t{b} * n * m;
  if (count > kMaxEntries) throw FormatError("request payload too large");
  Request req;
  req.op = static_cast<Op>(head[5]);
  req.tau = binio::get<double>(&head[20]);
  req.h = CTensor3(b, n, m);
  if (count) {
    std::vector<std::uint8_t> raw(count * 16);
    if (!stream.read_exact(raw)) throw FormatError("request truncated");
    for (std::size_t i = 0; i < count; ++i)
      req.h.data()[i] = {binio::get<double>(&raw[16 * i]), binio::get<double>(&raw[16 * i + 8])};
  }
  return req;
}

Response handle(const Request& req, const ScoreModel& model) {
  Response resp;
  resp.op = req.op;
  if (!std::isfinite(req.tau) || req.tau < 0.0 || !model.domain().contains(req.tau)) {
    resp.status = Status::bad_tau;
    return resp;
  }
  if (wants_second(req.op) && !model.has_second_order()) {
    resp.status = Status::shape_error;
    return resp;
  }
  if (req.h.empty()) {
    resp.score1 = CTensor3(req.h.dim0(), req.h.dim1(), req.h.dim2());
    resp.score2 = RTensor3(req.h.dim0(), req.h.dim1(), req.h.dim2());
    return resp;
  }
  model.evaluate(req.h, req.tau, wants_first(req.op) ? &resp.score1 : nullptr,
                 wants_second(req.op) ? &resp.score2 : nullptr);
  return resp;
}

std::size_t serve(ByteStream& stream, const ScoreModel& model) {
  std::size_t served = 0;
  while (true) {
    std::optional<Request> req;
    try {
      req = read_request(stream);
    } catch (const Error&) {
      return served;  // malformed frame or broken stream: close the connection
    }
    if (!req) return served;
    const auto bytes = encode_response(handle(*req, model));
    try {
      stream.write_all(bytes);
    } catch (const BridgeError&) {
      return served;
    }
    ++served;
  }
}

BridgeScore::BridgeScore(std::unique_ptr<ByteStream> stream, std::string label)
    : stream_(std::move(stream)), label_(std::move(label)) {
  if (!stream_) throw BridgeError("bridge score needs a stream");
}

Response BridgeScore::call(const Request& req) const {
  const auto bytes = encode_request(req);
  std::lock_guard lock(mu_);
  stream_->write_all(bytes);
  return read_response(*stream_, req.op, req.h.dim0(), req.h.dim1(), req.h.dim2());
}

void BridgeScore::evaluate(const CTensor3& h, double tau, CTensor3* score1, RTensor3* score2) const {
  if (!score1 && !score2) return;
  Request req;
  req.op = score1 && score2 ? Op::both : (score1 ? Op::score1 : Op::score2);
  req.tau = tau;
  req.h = h;
  Response resp = call(req);
  if (resp.status != Status::ok)
    throw BridgeError("bridge returned status " + std::to_string(static_cast<int>(resp.status)),
                      static_cast<int>(resp.status));
  if (score1) *score1 = std::move(resp.score1);
  if (score2) *score2 = std::move(resp.score2);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw BridgeError(errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw BridgeError("listener needs a dotted IPv4 address");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 8) != 0) {
    const auto msg = errno_text("bind/listen");
    ::close(fd_);
    throw BridgeError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<ByteStream> TcpListener::accept() {
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) throw BridgeError(errno_text("accept"));
  return std::make_unique<FdStream>(c, c, true);
}

}  // namespace stmp::bridge
