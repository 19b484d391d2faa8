#include "stmp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <thread>

#include "stmp/bridge.hpp"
#include "stmp/channel.hpp"
#include "stmp/errors.hpp"
#include "stmp/metrics.hpp"
#include "stmp/quadrature.hpp"
#include "stmp/rng.hpp"

namespace stmp {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::uint32_t as_count(std::string_view field, double v) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 4294967295.0)
    throw InvalidConfig(std::string(field), "sweep value must be a positive integer");
  return static_cast<std::uint32_t>(v);
}

void mean_and_stderr(const std::vector<double>& xs, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (xs.empty()) {
    mean = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace

SweepAxis parse_sweep_axis(std::string_view t) {
  if (t == "none" || t.empty()) return SweepAxis::none;
  if (t == "snr.db" || t == "snr_db" || t == "snr") return SweepAxis::snr_db;
  if (t == "system.k" || t == "K" || t == "k") return SweepAxis::k;
  if (t == "system.lambda" || t == "lambda") return SweepAxis::lambda;
  if (t == "system.t" || t == "T" || t == "t") return SweepAxis::t;
  throw InvalidConfig("sweep", "unknown sweep axis '" + std::string(t) + "'");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::snr_db: return "snr_db";
    case SweepAxis::k: return "K";
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::t: return "T";
    case SweepAxis::none: break;
  }
  return "none";
}

std::size_t point_count(const ExperimentSpec& spec) {
  return spec.axis == SweepAxis::none ? 1 : spec.values.size();
}

Settings settings_for_point(const ExperimentSpec& spec, std::size_t point) {
  Settings s = spec.base;
  if (spec.axis == SweepAxis::none) return s;
  if (point >= spec.values.size()) throw InvalidConfig("sweep", "point index out of range");
  const double v = spec.values[point];
  switch (spec.axis) {
    case SweepAxis::snr_db: s.snr_db = v; break;
    case SweepAxis::k: s.system.k = as_count("system.k", v); break;
    case SweepAxis::lambda: s.system.activity = v; break;
    case SweepAxis::t: s.system.t = as_count("system.t", v); break;
    case SweepAxis::none: break;
  }
  return s;
}

TrialOutput run_trial(const ExperimentSpec& spec, std::size_t point, std::uint32_t trial,
                      const ChannelDenoiser& denoiser, bool keep_data) {
  Settings s = settings_for_point(spec, point);
  validate(s);
  Rng rng(trial_seed(s.system.seed, point, trial));

  auto real = sample_realization(s.system, s.channel, rng);
  auto pilot = PilotOperator::build(s.system, rng);
  SystemConfig cfg = s.system;
  if (s.snr_db) cfg.noise_var = noise_for_snr(*s.snr_db, cfg.power, real.gain);
  const auto y = observe(real, pilot, cfg.noise_var, rng);

  double mean_gain = 0.0;
  for (double g : real.gain) mean_gain += g;
  mean_gain /= static_cast<double>(real.gain.size());

  const CTensor3 truth = real.effective();
  RunOptions opts;
  opts.init_power = mean_gain;
  opts.truth = &truth;
  opts.record_time = spec.timing;

  const auto t0 = std::chrono::steady_clock::now();
  auto res = run(cfg, s.engine, pilot, y, denoiser, opts);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  TrialOutput out;
  auto& r = out.result;
  r.ok = true;
  r.active = static_cast<std::uint32_t>(real.active_count());
  if (r.active > 0) {
    r.has_nmse = true;
    r.nmse = nmse(truth, res.x_post.mean);
    r.nmse_db_first = res.trace.rows.front().nmse_db;
  }
  const auto det = detection_error(real.active, res.active);
  r.missed = det.missed;
  r.false_alarms = det.false_alarms;
  r.pe = det.pe;
  r.iterations = res.iterations;
  r.converged = res.converged;
  r.ms = spec.timing ? ms : 0.0;
  out.trace = std::move(res.trace);
  if (keep_data) {
    out.channels = std::move(real.h);
    out.pilot = std::move(pilot);
  }
  return out;
}

PointSummary summarize(double value, const std::vector<TrialResult>& trials) {
  PointSummary p;
  p.value = value;
  std::vector<double> nmse_db, pe;
  double iters = 0.0, ms = 0.0;
  for (const auto& t : trials) {
    if (!t.ok) {
      ++p.failures;
      continue;
    }
    ++p.trials;
    if (t.has_nmse) nmse_db.push_back(to_db(t.nmse));
    pe.push_back(t.pe);
    iters += t.iterations;
    ms += t.ms;
  }
  p.nmse_trials = static_cast<std::uint32_t>(nmse_db.size());
  mean_and_stderr(nmse_db, p.nmse_db_mean, p.nmse_db_stderr);
  mean_and_stderr(pe, p.pe_mean, p.pe_stderr);
  if (p.trials > 0) {
    p.iters_mean = iters / p.trials;
    p.ms_mean = ms / p.trials;
  }
  return p;
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                std::shared_ptr<const ChannelDenoiser> denoiser) {
  if (spec.axis != SweepAxis::none && spec.values.empty())
    throw InvalidConfig("sweep", "sweep needs at least one value");
  const std::size_t points = point_count(spec);
  for (std::size_t p = 0; p < points; ++p) validate(settings_for_point(spec, p));
  if (!denoiser) denoiser = make_denoiser(spec.base);

  const std::uint32_t trials = spec.base.trials;
  const std::size_t total = points * trials;
  const bool keep = !spec.dump_channels.empty() || !spec.dump_pilot.empty();
  if (!spec.trace_dir.empty()) std::filesystem::create_directories(spec.trace_dir);

  ExperimentResult out;
  out.axis = spec.axis;
  out.trials.assign(points, std::vector<TrialResult>(trials));
  std::vector<CTensor3> kept_channels(keep ? total : 0);
  std::optional<PilotOperator> first_pilot;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t p = i / trials;
      const auto t = static_cast<std::uint32_t>(i % trials);
      TrialResult& slot = out.trials[p][t];
      try {
        auto o = run_trial(spec, p, t, *denoiser, keep);
        slot = o.result;
        if (!spec.trace_dir.empty()) {
          std::ofstream os(spec.trace_dir / ("trace_p" + std::to_string(p) + "_t" + std::to_string(t) + ".csv"));
          o.trace.write_csv(os);
        }
        if (keep) {
          kept_channels[i] = std::move(o.channels);
          if (i == 0) first_pilot = std::move(o.pilot);
        }
      } catch (const InvalidConfig&) {
        throw;
      } catch (const BridgeError& e) {
        slot = TrialResult{};
        slot.error = e.what();
        slot.bridge_failure = true;
      } catch (const std::exception& e) {
        slot = TrialResult{};
        slot.error = e.what();
      }
    }
  };

  const unsigned n_workers = std::max(1u, std::min<unsigned>(spec.workers, static_cast<unsigned>(total)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_workers);
    for (unsigned w = 0; w < n_workers; ++w)
      pool.emplace_back([&, w] {
        try {
          worker();
        } catch (...) {
          errors[w] = std::current_exception();
          next = total;
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t p = 0; p < points; ++p) {
    const double value = spec.axis == SweepAxis::none ? 0.0 : spec.values[p];
    auto summary = summarize(value, out.trials[p]);
    if (summary.failures * 10 > trials) {
      std::string first_error;
      bool bridge_failure = false;
      for (const auto& t : out.trials[p])
        if (!t.ok) {
          if (first_error.empty()) first_error = t.error;
          bridge_failure = bridge_failure || t.bridge_failure;
        }
      const std::string msg = "sweep point " + std::to_string(p) + ": " + std::to_string(summary.failures) +
                              " of " + std::to_string(trials) + " trials failed (" + first_error + ")";
      if (bridge_failure) throw BridgeError(msg);
      throw Error(msg);
    }
    out.points.push_back(summary);
  }

  if (!spec.dump_channels.empty()) {
    std::size_t devices = 0;
    std::size_t n = 0, m = 0;
    for (const auto& c : kept_channels) {
      devices += c.dim0();
      if (!c.empty()) {
        n = c.dim1();
        m = c.dim2();
      }
    }
    CTensor3 all(devices, n, m);
    std::size_t offset = 0;
    for (const auto& c : kept_channels) {
      std::copy(c.data().begin(), c.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>(offset));
      offset += c.size();
    }
    write_channel_dump(spec.dump_channels, all);
  }
  if (!spec.dump_pilot.empty() && first_pilot) write_pilot_file(spec.dump_pilot, *first_pilot);
  return out;
}

void write_results_csv(std::ostream& os, const ExperimentResult& result) {
  os << "axis,value,trials,nmse_db_mean,nmse_db_stderr,pe_mean,pe_stderr,iters_mean,ms_mean\n";
  for (const auto& p : result.points) {
    os << to_string(result.axis) << ',' << num(p.value) << ',' << p.trials << ','
       << num(p.nmse_db_mean) << ',' << num(p.nmse_db_stderr) << ',' << num(p.pe_mean) << ','
       << num(p.pe_stderr) << ',' << num(p.iters_mean) << ',' << num(p.ms_mean) << '\n';
  }
}

std::vector<DenoiseTestRow> denoise_test(const ChannelDenoiser& denoiser, const DenoiseTestOptions& o) {
  if (o.devices < 1 || o.n < 1 || o.m < 1) throw InvalidConfig("denoise-test", "empty batch");
  (void)gm_score(o.data_prior);
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& c : o.data_prior) cdf.push_back(acc += c.weight);

  std::vector<DenoiseTestRow> rows;
  for (std::size_t p = 0; p < o.snr_db.size(); ++p) {
    Rng rng(trial_seed(o.seed, p, 0));
    std::uniform_real_distribution<double> pick(0.0, acc);
    CTensor3 h(o.devices, o.n, o.m), obs(o.devices, o.n, o.m);
    const double snr = o.snr_db[p];
    const double tau = std::isinf(snr) && snr > 0 ? 0.0 : std::pow(10.0, -snr / 10.0);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double u = pick(rng);
      std::size_t c = 0;
      while (c + 1 < cdf.size() && u > cdf[c]) ++c;
      const auto& comp = o.data_prior[c];
      h.data()[i] = comp.mean + complex_normal(rng, comp.var);
      obs.data()[i] = h.data()[i] + (tau > 0.0 ? complex_normal(rng, tau) : cplx{});
    }
    const auto out = denoiser.denoise(obs, std::vector<double>(o.m, tau));

    DenoiseTestRow row;
    row.snr_db = snr;
    row.tau = tau;
    row.nmse_db = to_db(nmse(h, out.h_post));
    row.expected_db = o.gaussian_sigma2 ? to_db(tau / (*o.gaussian_sigma2 + tau))
                                        : std::numeric_limits<double>::quiet_NaN();
    row.oracle_gap = std::numeric_limits<double>::quiet_NaN();
    if (o.oracle_prior && tau > 0.0) {
      const PriorSpec prior{*o.oracle_prior};
      double gap = 0.0;
      const std::size_t count = std::min(o.oracle_entries, obs.size());
      for (std::size_t i = 0; i < count; ++i) {
        const cplx z = obs.data()[i];
        const auto ref = brute_force_mmse(prior, std::span<const cplx>(&z, 1), tau);
        gap = std::max(gap, std::abs(ref.mean[0] - out.h_post.data()[i]));
      }
      row.oracle_gap = gap;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_denoise_csv(std::ostream& os, const std::vector<DenoiseTestRow>& rows) {
  os << "snr_db,tau,nmse_db,expected_db,oracle_gap\n";
  for (const auto& r : rows)
    os << num(r.snr_db) << ',' << num(r.tau) << ',' << num(r.nmse_db) << ',' << num(r.expected_db) << ','
       << num(r.oracle_gap) << '\n';
}

std::shared_ptr<const ChannelDenoiser> make_denoiser(const Settings& s) {
  ScoreDenoiser::Options opts;
  opts.normalize = normalize_enabled(s.denoiser, s.engine.denoiser);
  opts.var_floor = s.engine.var_floor;
  switch (s.engine.denoiser) {
    case DenoiserKind::gaussian:
      return std::make_shared<ScoreDenoiser>(gaussian_score(s.denoiser.sigma2), opts);
    case DenoiserKind::gaussian_mixture: {
      auto comps = s.denoiser.gm_components;
      if (comps.empty()) comps.push_back({1.0, cplx{}, s.denoiser.sigma2});
      return std::make_shared<ScoreDenoiser>(gm_score(std::move(comps)), opts);
    }
    case DenoiserKind::bridge: {
      if (s.denoiser.bridge_addr.empty())
        throw InvalidConfig("denoiser.bridge_addr", "bridge denoiser needs an address");
      auto model = std::make_shared<bridge::BridgeScore>(bridge::connect(s.denoiser.bridge_addr),
                                                         s.denoiser.bridge_addr);
      return std::make_shared<ScoreDenoiser>(std::move(model), opts);
    }
  }
  throw InvalidConfig("denoiser.kind", "unsupported denoiser");
}

}  // namespace stmp
