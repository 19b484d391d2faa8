// stmp: simulate grant-free access sweeps, check configs, exercise denoisers.
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 bridge failure.
// Diagnostics go to stderr; machine output goes to --out files (or stdout
// when --out is absent).

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "stmp/bridge.hpp"
#include "stmp/config_file.hpp"
#include "stmp/errors.hpp"
#include "stmp/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitBridge = 3;

std::vector<double> parse_values(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw stmp::InvalidConfig(field, "bad number '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

unsigned default_workers() {
  if (const char* env = std::getenv("STMP_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return static_cast<unsigned>(w);
    } catch (const std::exception&) {
    }
    throw stmp::InvalidConfig("STMP_WORKERS", "expected a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <class F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw stmp::Error("cannot open " + path + " for writing");
  write(os);
  if (!os) throw stmp::Error("write failed: " + path);
}

stmp::Settings load_with_overrides(const std::string& config, const std::vector<std::string>& sets) {
  stmp::Settings s = config.empty() ? stmp::Settings{} : stmp::load_settings(config);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw stmp::InvalidConfig(kv, "--set expects key=value");
    stmp::apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return s;
}

int cmd_validate(const std::string& config, const std::vector<std::string>& sets) {
  const auto s = load_with_overrides(config, sets);
  stmp::validate(s);
  std::cerr << config << ": ok\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> sweeps;
  std::string out;
  std::uint32_t trials = 0;
  unsigned workers = 0;
  bool timing = false;
  std::string trace_dir;
  std::string dump_channels;
  std::string dump_pilot;
};

int cmd_simulate(const SimulateArgs& a) {
  stmp::ExperimentSpec spec;
  spec.base = load_with_overrides(a.config, a.sets);
  if (a.trials > 0) spec.base.trials = a.trials;
  for (const auto& sw : a.sweeps) {  // last one wins
    const auto eq = sw.find('=');
    if (eq == std::string::npos) throw stmp::InvalidConfig("sweep", "expected axis=v1,v2,...");
    spec.axis = stmp::parse_sweep_axis(sw.substr(0, eq));
    spec.values = parse_values("sweep", sw.substr(eq + 1));
  }
  spec.workers = a.workers > 0 ? a.workers : default_workers();
  spec.timing = a.timing;
  spec.trace_dir = a.trace_dir;
  spec.dump_channels = a.dump_channels;
  spec.dump_pilot = a.dump_pilot;
  stmp::validate(spec.base);

  std::cerr << "simulate: " << stmp::point_count(spec) << " point(s) x " << spec.base.trials
            << " trial(s), " << spec.workers << " worker(s), denoiser "
            << stmp::to_string(spec.base.engine.denoiser) << '\n';
  const auto result = stmp::run_experiment(spec);
  for (const auto& p : result.points) {
    std::cerr << "  " << stmp::to_string(result.axis) << '=' << p.value << "  nmse " << std::fixed
              << std::setprecision(2) << p.nmse_db_mean << " dB  pe " << std::scientific
              << std::setprecision(2) << p.pe_mean << std::defaultfloat << "  iters " << p.iters_mean;
    if (p.failures) std::cerr << "  failed " << p.failures;
    std::cerr << '\n';
  }
  with_output(a.out, [&](std::ostream& os) { stmp::write_results_csv(os, result); });
  return kExitOk;
}

struct DenoiseArgs {
  std::string backend = "gaussian";
  std::string addr;
  double sigma2 = 1.0;
  std::string gm = "0.5:1:0:0.25;0.5:-1:0:0.25";
  std::string snr = "-10,0,10,20,30";
  std::uint32_t devices = 100, n = 8, m = 4;
  std::uint64_t seed = 1;
  bool normalize = false;
  std::string out;
};

int cmd_denoise_test(const DenoiseArgs& a) {
  stmp::Settings s;
  s.engine.denoiser = stmp::parse_denoiser_kind(a.backend);
  s.denoiser.sigma2 = a.sigma2;
  if (a.normalize) s.denoiser.normalize = true;
  s.denoiser.bridge_addr = a.addr;
  stmp::apply_setting(s, "denoiser.gm_components", a.gm);

  stmp::DenoiseTestOptions opts;
  opts.snr_db = parse_values("snr", a.snr);
  opts.devices = a.devices;
  opts.n = a.n;
  opts.m = a.m;
  opts.seed = a.seed;
  switch (s.engine.denoiser) {
    case stmp::DenoiserKind::gaussian:
    case stmp::DenoiserKind::bridge:
      opts.data_prior = {{1.0, stmp::cplx{}, a.sigma2}};
      opts.gaussian_sigma2 = a.sigma2;
      break;
    case stmp::DenoiserKind::gaussian_mixture:
      opts.data_prior = s.denoiser.gm_components;
      if (!a.normalize) opts.oracle_prior = s.denoiser.gm_components;
      break;
  }
  stmp::validate(s);
  const auto denoiser = stmp::make_denoiser(s);
  const auto rows = stmp::denoise_test(*denoiser, opts);

  std::cerr << "denoise-test: backend " << a.backend << '\n';
  for (const auto& r : rows) {
    std::cerr << "  snr " << std::setw(6) << r.snr_db << " dB  nmse " << std::fixed << std::setprecision(3)
              << r.nmse_db << " dB";
    if (opts.gaussian_sigma2) std::cerr << "  closed form " << r.expected_db << " dB";
    if (opts.oracle_prior) std::cerr << "  oracle gap " << std::scientific << r.oracle_gap;
    std::cerr << std::defaultfloat << '\n';
  }
  with_output(a.out, [&](std::ostream& os) { stmp::write_denoise_csv(os, rows); });
  return kExitOk;
}

int cmd_bridge_check(const std::string& addr, double tau) {
  namespace br = stmp::bridge;
  br::BridgeScore remote(br::connect(addr), addr);
  br::Request req;
  req.op = br::Op::both;
  req.tau = tau;
  req.h = stmp::CTensor3(2, 2, 2);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (auto& z : req.h.data()) z = {normal(rng), normal(rng)};

  const auto resp = remote.call(req);
  if (resp.status != br::Status::ok)
    throw stmp::BridgeError("bridge answered with status " + std::to_string(static_cast<int>(resp.status)),
                            static_cast<int>(resp.status));
  for (const auto& z : resp.score1.data())
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw stmp::BridgeError("bridge returned a non-finite score");
  for (double v : resp.score2.data())
    if (!std::isfinite(v)) throw stmp::BridgeError("bridge returned a non-finite second-order score");
  std::cerr << "bridge-check: " << addr << " ok (protocol version " << static_cast<int>(resp.version) << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint activity detection and channel estimation by turbo message passing"};
  app.require_subcommand(1);

  std::string validate_config;
  std::vector<std::string> validate_sets;
  auto* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("config", validate_config, "key = value config file")->required();
  validate->add_option("--set", validate_sets, "override key=value (repeatable)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo sweep");
  simulate->add_option("config", sim.config, "key = value config file")->required();
  simulate->add_option("--set", sim.sets, "override key=value (repeatable)");
  simulate->add_option("--sweep", sim.sweeps, "axis=v1,v2,... over snr.db, system.k, system.lambda, system.t");
  simulate->add_option("--out", sim.out, "results CSV (stdout when absent)");
  simulate->add_option("--trials", sim.trials, "trials per sweep point");
  simulate->add_option("--workers", sim.workers, "worker threads (default STMP_WORKERS or all cores)");
  simulate->add_flag("--timing", sim.timing, "fill the wall-time columns");
  simulate->add_option("--trace-dir", sim.trace_dir, "write one iteration trace CSV per trial");
  simulate->add_option("--dump-channels", sim.dump_channels, "write every sampled channel as CHNL");
  simulate->add_option("--dump-pilot", sim.dump_pilot, "write the first trial's pilot as PILT");

  DenoiseArgs den;
  auto* denoise = app.add_subcommand("denoise-test", "standalone AWGN denoising table");
  denoise->add_option("--backend", den.backend, "gaussian, gm or bridge");
  denoise->add_option("--addr", den.addr, "bridge address: host:port or exec:<command>");
  denoise->add_option("--sigma2", den.sigma2, "Gaussian prior variance");
  denoise->add_option("--gm", den.gm, "mixture components w:re:im:var;...");
  denoise->add_option("--snr", den.snr, "comma-separated SNR list in dB (inf allowed)");
  denoise->add_option("--devices", den.devices, "devices per batch");
  denoise->add_option("--n", den.n, "subcarriers");
  denoise->add_option("--m", den.m, "antennas");
  denoise->add_option("--seed", den.seed, "RNG seed");
  denoise->add_flag("--normalize", den.normalize, "use power normalization");
  denoise->add_option("--out", den.out, "CSV output (stdout when absent)");

  std::string check_addr;
  double check_tau = 0.1;
  auto* check = app.add_subcommand("bridge-check", "health-check a score bridge");
  check->add_option("--addr", check_addr, "host:port, tcp://host:port or exec:<command>")->required();
  check->add_option("--tau", check_tau, "noise variance of the probe request");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(validate_config, validate_sets);
    if (*simulate) return cmd_simulate(sim);
    if (*denoise) return cmd_denoise_test(den);
    if (*check) return cmd_bridge_check(check_addr, check_tau);
  } catch (const stmp::InvalidConfig& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const stmp::DegenerateMixture& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const stmp::BridgeError& e) {
    std::cerr << "bridge failure: " << e.what() << '\n';
    return kExitBridge;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
