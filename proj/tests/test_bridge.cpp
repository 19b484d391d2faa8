#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <thread>

#include "stmp/binary_io.hpp"
#include "stmp/bridge.hpp"
#include "stmp/denoiser.hpp"
#include "stmp/errors.hpp"
#include "stmp/rng.hpp"

using namespace stmp;
namespace br = stmp::bridge;

#ifndef STMP_BRIDGE_STUB
#error "STMP_BRIDGE_STUB must name the stub executable"
#endif

namespace {

const std::string kStub = STMP_BRIDGE_STUB;

CTensor3 random_batch(std::size_t b, std::size_t n, std::size_t m, Rng& rng) {
  CTensor3 h(b, n, m);
  for (auto& z : h.data()) z = complex_normal(rng, 2.0);
  return h;
}

struct Pipe {
  std::unique_ptr<br::ByteStream> client;
  std::unique_ptr<br::ByteStream> server;
};

Pipe socket_pipe() {
  int sv[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
  return {std::make_unique<br::FdStream>(sv[0], sv[0], true), std::make_unique<br::FdStream>(sv[1], sv[1], true)};
}

/// Serves `model` on a background thread over a socketpair.
struct LocalServer {
  std::unique_ptr<br::ByteStream> client;
  std::unique_ptr<br::ByteStream> server_end;
  std::thread worker;
  std::size_t served = 0;

  explicit LocalServer(std::shared_ptr<const ScoreModel> model) {
    auto p = socket_pipe();
    client = std::move(p.client);
    server_end = std::move(p.server);
    worker = std::thread([this, model] { served = br::serve(*server_end, *model); });
  }
  ~LocalServer() {
    client.reset();
    if (worker.joinable()) worker.join();
  }
};

class NarrowScore final : public ScoreModel {
 public:
  std::string name() const override { return "narrow"; }
  bool has_second_order() const override { return false; }
  NoiseDomain domain() const override { return {0.1, 1.0}; }
  void evaluate(const CTensor3& h, double tau, CTensor3* s1, RTensor3*) const override {
    GaussianScore(1.0).evaluate(h, tau, s1, nullptr);
  }
};

}  // namespace

TEST_CASE("request frame layout") {
  br::Request req;
  req.op = br::Op::score2;
  req.tau = 0.125;
  req.h = CTensor3(2, 3, 1);
  req.h(1, 2, 0) = cplx(1.5, -2.0);
  const auto bytes = br::encode_request(req);
  REQUIRE(bytes.size() == 28 + 6 * 16);
  CHECK(std::memcmp(bytes.data(), "STMP", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(binio::get<std::uint32_t>(&bytes[8]) == 2);
  CHECK(binio::get<std::uint32_t>(&bytes[12]) == 3);
  CHECK(binio::get<std::uint32_t>(&bytes[16]) == 1);
  CHECK(binio::get<double>(&bytes[20]) == 0.125);
  CHECK(binio::get<double>(&bytes[28 + 5 * 16]) == 1.5);
  CHECK(binio::get<double>(&bytes[28 + 5 * 16 + 8]) == -2.0);
  CHECK(bytes[8] == 2);  // little-endian
}

TEST_CASE("response frame layout") {
  br::Response resp;
  resp.op = br::Op::both;
  resp.score1 = CTensor3(1, 2, 2, cplx(0.5, 0.25));
  resp.score2 = RTensor3(1, 2, 2, -0.75);
  auto bytes = br::encode_response(resp);
  REQUIRE(bytes.size() == 7 + 4 * 16 + 4 * 8);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 3);
  CHECK(bytes[6] == 0);
  CHECK(binio::get<double>(&bytes[7 + 8]) == 0.25);
  CHECK(binio::get<double>(&bytes[7 + 64]) == -0.75);

  resp.op = br::Op::score1;
  CHECK(br::encode_response(resp).size() == 7 + 4 * 16);
  resp.op = br::Op::score2;
  CHECK(br::encode_response(resp).size() == 7 + 4 * 8);
  resp.status = br::Status::bad_tau;
  CHECK(br::encode_response(resp).size() == 7);
}

TEST_CASE("frames decode back to their content") {
  Rng rng(1);
  auto p = socket_pipe();
  br::Request req;
  req.op = br::Op::score1;
  req.tau = 3.25;
  req.h = random_batch(4, 2, 3, rng);
  p.client->write_all(br::encode_request(req));
  const auto got = br::read_request(*p.server);
  REQUIRE(got.has_value());
  CHECK(got->op == br::Op::score1);
  CHECK(got->tau == 3.25);
  CHECK(got->h == req.h);

  p.client.reset();
  CHECK_FALSE(br::read_request(*p.server).has_value());
}

TEST_CASE("handle reports domain and capability errors") {
  Rng rng(2);
  br::Request req;
  req.h = random_batch(2, 2, 2, rng);
  req.tau = 5.0;
  req.op = br::Op::score1;
  CHECK(br::handle(req, NarrowScore{}).status == br::Status::bad_tau);
  req.tau = std::nan("");
  CHECK(br::handle(req, *gaussian_score(1.0)).status == br::Status::bad_tau);
  req.tau = 0.5;
  CHECK(br::handle(req, NarrowScore{}).status == br::Status::ok);
  req.op = br::Op::score2;
  CHECK(br::handle(req, NarrowScore{}).status == br::Status::shape_error);

  req.op = br::Op::both;
  req.h = CTensor3(0, 4, 2);
  const auto empty = br::handle(req, *gaussian_score(1.0));
  CHECK(empty.status == br::Status::ok);
  CHECK(br::encode_response(empty).size() == 7);
}

TEST_CASE("bridge-backed scores equal in-process scores bit for bit") {
  Rng rng(3);
  auto model = gaussian_score(0.8);
  LocalServer srv(model);
  br::BridgeScore remote(std::move(srv.client));
  for (int rep = 0; rep < 100; ++rep) {
    const auto h = random_batch(1 + rep % 7, 1 + rep % 3, 1 + rep % 4, rng);
    const double tau = 0.01 * (rep + 1);
    CTensor3 a1, b1;
    RTensor3 a2, b2;
    remote.evaluate(h, tau, &a1, &a2);
    model->evaluate(h, tau, &b1, &b2);
    CHECK(a1 == b1);
    CHECK(a2 == b2);
    CHECK(remote.score1(h, tau) == b1);
    CHECK(remote.score2_diag(h, tau) == b2);
  }
}

TEST_CASE("bridge denoiser over a child process equals the in-process denoiser") {
  Rng rng(4);
  for (bool normalize : {false, true}) {
    auto remote = std::make_shared<br::BridgeScore>(br::connect("exec:" + kStub + " gaussian 1.5"));
    ScoreDenoiser via_bridge(remote, {normalize, 1e-12});
    ScoreDenoiser local(gaussian_score(1.5), {normalize, 1e-12});
    for (int rep = 0; rep < 20; ++rep) {
      const auto h = random_batch(30, 4, 2, rng);
      const std::vector<double> tau{0.1 + rep * 0.05, 0.2};
      const auto a = via_bridge.denoise(h, tau);
      const auto b = local.denoise(h, tau);
      CHECK(a.h_post == b.h_post);
      CHECK(a.tau_post == b.tau_post);
    }
  }
}

TEST_CASE("mixture stub matches the in-process mixture") {
  Rng rng(5);
  br::BridgeScore remote(br::connect("exec:" + kStub + " gm '0.25:1:0:0.5;0.75:-1:0.5:0.25'"));
  auto local = gm_score({{0.25, cplx(1, 0), 0.5}, {0.75, cplx(-1, 0.5), 0.25}});
  const auto h = random_batch(5, 3, 2, rng);
  CHECK(remote.score1(h, 0.3) == local->score1(h, 0.3));
  CHECK(remote.score2_diag(h, 0.3) == local->score2_diag(h, 0.3));
}

TEST_CASE("TCP transport") {
  Rng rng(6);
  br::TcpListener listener;
  REQUIRE(listener.port() != 0);
  auto model = gaussian_score(2.0);
  std::thread server([&] {
    for (int i = 0; i < 2; ++i) {
      auto conn = listener.accept();
      br::serve(*conn, *model);
    }
  });
  const auto h = random_batch(3, 2, 2, rng);
  {
    br::BridgeScore remote(br::connect("127.0.0.1:" + std::to_string(listener.port())));
    CHECK(remote.score1(h, 0.5) == model->score1(h, 0.5));
  }
  {
    br::BridgeScore remote(br::connect("tcp://127.0.0.1:" + std::to_string(listener.port())));
    CHECK(remote.score2_diag(h, 0.5) == model->score2_diag(h, 0.5));
  }
  server.join();
}

TEST_CASE("non-zero status aborts with BridgeError") {
  Rng rng(7);
  const auto h = random_batch(2, 2, 2, rng);
  auto remote = std::make_shared<br::BridgeScore>(br::connect("exec:" + kStub + " status 1"));
  try {
    remote->score1(h, 0.5);
    FAIL("status 1 accepted");
  } catch (const BridgeError& e) {
    CHECK(e.status() == 1);
  }
  ScoreDenoiser d(remote, {false, 1e-12});
  try {
    d.denoise(h, std::vector<double>{0.5, 0.5});
    FAIL("status 1 accepted");
  } catch (const BridgeError& e) {
    CHECK(e.status() == 1);
    CHECK(std::string(e.what()).find("batch of 2 devices") != std::string::npos);
  }
}

TEST_CASE("broken transports raise BridgeError") {
  Rng rng(8);
  const auto h = random_batch(2, 2, 2, rng);
  {
    br::BridgeScore remote(br::connect("exec:" + kStub + " hangup"));
    CHECK_THROWS_AS(remote.score1(h, 0.5), BridgeError);
  }
  {
    br::BridgeScore remote(br::connect("exec:true"));
    CHECK_THROWS_AS(remote.score1(h, 0.5), BridgeError);
  }
  CHECK_THROWS_AS(br::connect("nonsense"), BridgeError);
  CHECK_THROWS_AS(br::connect("127.0.0.1:notaport"), BridgeError);
  CHECK_THROWS_AS(br::connect("127.0.0.1:99999"), BridgeError);

  br::TcpListener listener;
  const auto port = listener.port();
  std::thread closer([&] { listener.accept(); });
  br::BridgeScore remote(br::connect("127.0.0.1:" + std::to_string(port)));
  closer.join();
  CHECK_THROWS_AS(remote.score1(h, 0.5), BridgeError);
}

TEST_CASE("malformed frames close the connection without crashing") {
  Rng rng(9);
  auto model = gaussian_score(1.0);
  br::Request good;
  good.op = br::Op::both;
  good.tau = 0.5;
  good.h = random_batch(2, 2, 2, rng);
  const auto valid = br::encode_request(good);

  std::uniform_int_distribution<int> byte(0, 255);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<std::uint8_t> frame;
    switch (rep % 5) {
      case 0:  // random garbage
        frame.resize(1 + rep % 60);
        for (auto& b : frame) b = std::uint8_t(byte(rng));
        break;
      case 1:  // one corrupted header byte
        frame = valid;
        frame[std::size_t(rep) % 8] ^= std::uint8_t(1 + byte(rng) % 255);
        break;
      case 2:  // truncated payload
        frame.assign(valid.begin(), valid.begin() + std::ptrdiff_t(28 + rep % 100));
        break;
      case 3: {  // absurd batch size
        frame = valid;
        const std::uint32_t big = 0x7fffffffu;
        std::memcpy(&frame[8], &big, 4);
        break;
      }
      default:  // valid frame followed by garbage
        frame = valid;
        for (int i = 0; i < 10; ++i) frame.push_back(std::uint8_t(byte(rng)));
        break;
    }
    auto p = socket_pipe();
    std::size_t served = 99;
    std::thread server([&] { served = br::serve(*p.server, *model); });
    p.client->write_all(frame);
    p.client.reset();
    server.join();
    CHECK(served <= 1);
  }

  auto p = socket_pipe();
  std::size_t served = 0;
  std::thread server([&] { served = br::serve(*p.server, *model); });
  {
    br::BridgeScore remote(std::move(p.client));
    CHECK(remote.score1(good.h, 0.5) == model->score1(good.h, 0.5));
    CHECK(remote.call(good).status == br::Status::ok);
  }
  server.join();
  CHECK(served == 2);
}
