// Score bridge server over stdin/stdout for tests.
//
//   bridge_stub gaussian <sigma2>        analytic Gaussian score
//   bridge_stub gm <w:re:im:var;...>     analytic mixture score
//   bridge_stub status <code>            answers every request with that status
//   bridge_stub hangup                   reads one request, then exits silently

#include <cstdlib>
#include <iostream>
#include <string>
#include <unistd.h>

#include "stmp/bridge.hpp"
#include "stmp/config_file.hpp"
#include "stmp/errors.hpp"

using namespace stmp;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: bridge_stub gaussian <sigma2> | gm <components> | status <code> | hangup\n";
    return 2;
  }
  const std::string mode = argv[1];
  bridge::FdStream io(STDIN_FILENO, STDOUT_FILENO, false);
  try {
    if (mode == "gaussian" && argc == 3) {
      bridge::serve(io, *gaussian_score(std::stod(argv[2])));
      return 0;
    }
    if (mode == "gm" && argc == 3) {
      Settings s;
      apply_setting(s, "denoiser.gm_components", argv[2]);
      bridge::serve(io, *gm_score(s.denoiser.gm_components));
      return 0;
    }
    if (mode == "status" && argc == 3) {
      const int code = std::atoi(argv[2]);
      while (auto req = bridge::read_request(io)) {
        bridge::Response resp;
        resp.op = req->op;
        resp.status = static_cast<bridge::Status>(code);
        io.write_all(bridge::encode_response(resp));
      }
      return 0;
    }
    if (mode == "hangup") {
      (void)bridge::read_request(io);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "bridge_stub: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "bridge_stub: unknown mode " << mode << '\n';
  return 2;
}
