// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "stmp/channel.hpp"
#include "stmp/denoiser.hpp"
#include "stmp/engine.hpp"
#include "stmp/errors.hpp"
#include "stmp/harness.hpp"
#include "stmp/metrics.hpp"
#include "stmp/pilot.hpp"
#include "stmp/quadrature.hpp"
#include "stmp/rng.hpp"
#include "stmp/score.hpp"

using namespace stmp;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects the worst observed value of a check next to its bound.
struct Gauge {
  const char* label;
  double bound;
  double worst = 0.0;
  bool upper = true;  ///< pass when worst <= bound, else worst >= bound
  void see(double v) { worst = upper ? std::max(worst, v) : std::min(worst, v); }
  bool ok() const { return upper ? worst <= bound : worst >= bound; }
  std::string str() const {
    std::ostringstream os;
    os << label << '=' << worst << (upper ? "<=" : ">=") << bound;
    return os.str();
  }
};

void add(Outcome& o, const Gauge& g) {
  o.pass = o.pass && g.ok();
  if (!o.detail.empty()) o.detail += ' ';
  o.detail += g.str();
}

void add(Outcome& o, const char* label, bool cond) {
  o.pass = o.pass && cond;
  if (!o.detail.empty()) o.detail += ' ';
  o.detail += std::string(label) + (cond ? "=ok" : "=violated");
}

CTensor3 random_batch(std::size_t k, std::size_t n, std::size_t m, Rng& rng, double var = 1.0) {
  CTensor3 h(k, n, m);
  for (auto& z : h.data()) z = complex_normal(rng, var);
  return h;
}

std::vector<cplx> random_vec(std::size_t len, Rng& rng) {
  std::vector<cplx> v(len);
  for (auto& z : v) z = complex_normal(rng);
  return v;
}

SystemConfig dims(std::uint32_t k, std::uint32_t n, std::uint32_t m, std::uint32_t t) {
  SystemConfig c;
  c.k = k;
  c.n = n;
  c.m = m;
  c.t = t;
  return c;
}

ScoreDenoiser plain(std::shared_ptr<const ScoreModel> model) { return ScoreDenoiser(std::move(model), {false, 1e-12}); }

Outcome ac1() {
  Outcome o;
  Rng rng(101);
  Gauge mean{"max_mean_err", 1e-10}, var{"max_var_err", 1e-10};
  for (double sigma2 : {0.25, 1.0, 4.0})
    for (double tau : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) {
      const auto d = plain(gaussian_score(sigma2));
      const auto h = random_batch(50, 8, 4, rng, sigma2 + tau);
      const auto out = d.denoise(h, std::vector<double>(4, tau));
      const double shrink = sigma2 / (sigma2 + tau);
      for (std::size_t i = 0; i < h.size(); ++i)
        mean.see(std::abs(out.h_post.data()[i] - shrink * h.data()[i]) / std::max(1.0, std::abs(h.data()[i])));
      for (double v : out.tau_post) var.see(std::abs(v - tau * sigma2 / (sigma2 + tau)));
    }
  add(o, mean);
  add(o, var);
  return o;
}

Outcome ac2() {
  Outcome o;
  Rng rng(202);
  std::uniform_real_distribution<double> w(0.1, 1.0), c(-2.0, 2.0), lt(std::log(0.01), std::log(10.0));
  Gauge mean{"max_mean_err", 1e-5}, var{"max_var_err", 1e-5}, out_var{"max_clamped_var_err", 1e-5};
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<MixtureComponent> comps(2 + rep % 3);
    double total = 0.0;
    for (auto& comp : comps) {
      comp = {w(rng), cplx(c(rng), c(rng)), w(rng) * w(rng)};
      total += comp.weight;
    }
    for (auto& comp : comps) comp.weight /= total;
    const double tau = std::exp(lt(rng));
    const cplx z = comps[rep % comps.size()].mean + complex_normal(rng, comps[rep % comps.size()].var + tau);
    CTensor3 h(1, 1, 1);
    h.data()[0] = z;

    const auto model = gm_score(comps);
    const auto ref = brute_force_mmse(PriorSpec{comps}, std::span<const cplx>(&z, 1), tau);
    const auto post = plain(model).denoise(h, std::vector<double>{tau});
    // raw second-order Tweedie variance, before the [floor, tau] clamp
    const double raw = tau + tau * tau * model->score2_diag(h, tau).data()[0];
    mean.see(std::abs(post.h_post.data()[0] - ref.mean[0]));
    var.see(std::abs(raw - ref.var[0]));
    out_var.see(std::abs(post.tau_post[0] - std::min(ref.var[0], tau)));
  }
  add(o, mean);
  add(o, var);
  add(o, out_var);
  return o;
}

Outcome ac3() {
  Outcome o;
  Gauge rel{"max_rel_err", 1e-6}, iters{"max_iters", 30};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = dims(8, 2, 1, 8);
    cfg.activity = 1.0;
    cfg.noise_var = 0.1;
    Rng rng(seed);
    ChannelParams params;
    params.gain = GainMode::compensated;
    const auto real = sample_realization(cfg, params, rng);
    const auto pilot = PilotOperator::build(cfg, rng);
    const auto y = observe(real, pilot, cfg.noise_var, rng);
    EngineConfig eng;
    eng.tol = 1e-12;
    const auto res = run(cfg, eng, pilot, y, plain(gaussian_score(1.0)));
    iters.see(res.iterations);

    const auto want = oracle::lmmse(oracle::pilot_matrix(pilot), oracle::column(y, 0), Eigen::VectorXcd::Zero(16), 1.0,
                                    cfg.noise_var);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 16; ++i) {
      num = std::max(num, std::abs(res.x_post.mean.data()[i] - want(i)));
      den = std::max(den, std::abs(want(i)));
    }
    rel.see(num / den);
  }
  add(o, rel);
  add(o, iters);
  return o;
}

Outcome ac4() {
  Outcome o;
  Rng rng(404);
  Gauge orth{"max_orth_err", 1e-9}, fast{"max_fast_err", 1e-12}, adj{"max_adjoint_err", 1e-10};
  for (std::uint32_t k = 1; k <= 64; ++k) {
    const std::uint32_t t = 1 + static_cast<std::uint32_t>(rng() % k);
    const std::uint32_t n = 1 + k % 4;
    auto cfg = dims(k, n, 1, t);
    cfg.power = 0.5 + (k % 3);
    const auto op = PilotOperator::build(cfg, rng);
    const auto q = op.dense();
    const Eigen::Index rows = q.rows();
    orth.see((q * q.adjoint() - k * cfg.power * Eigen::MatrixXcd::Identity(rows, rows)).cwiseAbs().maxCoeff());

    const auto x = random_vec(std::size_t(k) * n, rng);
    const auto y = random_vec(std::size_t(t) * n, rng);
    const Eigen::VectorXcd qx = q * Eigen::Map<const Eigen::VectorXcd>(x.data(), Eigen::Index(x.size()));
    const Eigen::VectorXcd qy = q.adjoint() * Eigen::Map<const Eigen::VectorXcd>(y.data(), Eigen::Index(y.size()));
    const auto fx = op.apply(x);
    const auto fy = op.adjoint(y);
    for (std::size_t i = 0; i < fx.size(); ++i) fast.see(std::abs(fx[i] - qx(Eigen::Index(i))) / std::max(1.0, std::abs(qx(Eigen::Index(i)))));
    for (std::size_t i = 0; i < fy.size(); ++i) fast.see(std::abs(fy[i] - qy(Eigen::Index(i))) / std::max(1.0, std::abs(qy(Eigen::Index(i)))));

    cplx lhs{}, rhs{};
    for (std::size_t i = 0; i < fx.size(); ++i) lhs += std::conj(fx[i]) * y[i];
    for (std::size_t i = 0; i < fy.size(); ++i) rhs += std::conj(x[i]) * fy[i];
    adj.see(std::abs(lhs - rhs) / std::sqrt(squared_norm(x) * squared_norm(y)));
  }
  add(o, orth);
  add(o, fast);
  add(o, adj);
  return o;
}

Outcome ac5() {
  Outcome o;
  Rng rng(505);
  std::uniform_real_distribution<double> e(-6, 6), frac(0.001, 0.999), u(0.0, 1.0), wide(-12, 6);
  Gauge ident{"max_precision_err", 1e-12};
  std::vector<cplx> post{cplx(1, 2)}, pri{cplx(-1, 0.5)}, ext(1);
  std::size_t unclamped = 0;
  for (int i = 0; i < 10000; ++i) {
    const double v_pri = std::pow(10.0, e(rng));
    const double v_post = v_pri * frac(rng);
    const auto r = gaussian_ext(post, v_post, pri, v_pri, ext);
    if (r.clamped) continue;
    ++unclamped;
    ident.see(std::abs((1.0 / r.var + 1.0 / v_pri) * v_post - 1.0));
  }
  add(o, ident);
  add(o, "unclamped_cases>=9000", unclamped >= 9000);

  Gauge neg{"min_project_var", 0.0, 0.0, false};
  for (int i = 0; i < 10000; ++i) {
    GaussianMessageSet combined{CTensor3(2, 2, 2), {std::pow(10.0, wide(rng)), std::pow(10.0, wide(rng))}};
    for (auto& z : combined.mean.data()) z = complex_normal(rng, std::pow(10.0, wide(rng)));
    std::vector<double> lam{i % 7 == 0 ? 1.0 - 1e-17 : u(rng), u(rng)};
    const auto p = x_project(lam, combined, VarianceLimits{0.0, 1e6});
    for (double v : p.var) neg.see(v);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t m = 0; m < 2; ++m) {
        double s = 0.0;
        for (std::size_t n = 0; n < 2; ++n)
          s = std::min(s, bernoulli_gaussian_variance(lam[k], combined.mean(k, n, m), combined.var[m]));
        neg.see(s);
      }
  }
  add(o, neg);
  return o;
}

Settings desk_settings() {
  Settings s;
  s.system = dims(100, 8, 4, 30);
  s.system.activity = 0.1;
  s.system.seed = 2024;
  s.engine.damping = 0.8;
  s.engine.max_iters = 30;
  s.engine.tol = 1e-4;
  s.engine.denoiser = DenoiserKind::gaussian;
  s.channel.kind = ChannelKind::iid_gaussian;
  s.snr_db = 20.0;
  s.trials = 100;
  return s;
}

unsigned hw_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome ac6() {
  Outcome o;
  ExperimentSpec spec;
  spec.base = desk_settings();
  spec.workers = hw_workers();
  const auto r = run_experiment(spec);
  const auto& p = r.points.at(0);
  double first = 0.0;
  std::size_t converged = 0, with_nmse = 0;
  for (const auto& t : r.trials[0]) {
    if (t.converged) ++converged;
    if (t.has_nmse) {
      first += t.nmse_db_first;
      ++with_nmse;
    }
  }
  first /= static_cast<double>(with_nmse);
  add(o, Gauge{"pe_mean", 1e-2, p.pe_mean});
  add(o, Gauge{"nmse_gain_db", 10.0, first - p.nmse_db_mean, false});
  add(o, Gauge{"converged_fraction", 0.95, double(converged) / r.trials[0].size(), false});
  add(o, "no_failed_trials", p.failures == 0);
  std::ostringstream os;
  os << " nmse_db=" << p.nmse_db_mean << " first_db=" << first << " iters_mean=" << p.iters_mean;
  o.detail += os.str();
  return o;
}

/// Name of the first non-finite quantity, or empty. The NMSE column is
/// undefined (NaN by design) when no device is active.
std::string non_finite(const TrialOutput& out) {
  const auto& r = out.result;
  if (!std::isfinite(r.pe)) return "pe";
  if (r.has_nmse && !std::isfinite(r.nmse)) return "nmse";
  for (const auto& row : out.trace.rows) {
    const std::string at = " at iteration " + std::to_string(row.iter);
    if (!std::isfinite(row.residual)) return "residual" + at;
    if (r.active > 0 && !std::isfinite(row.nmse_db)) return "trace nmse_db" + at;
    if (!std::isfinite(row.v_pri_mean)) return "v_pri_mean" + at;
    if (!std::isfinite(row.v_post_mean)) return "v_post_mean" + at;
    if (!std::isfinite(row.tau_pri)) return "tau_pri" + at;
  }
  return {};
}

Outcome ac7() {
  Outcome o;
  Rng rng(707);
  bool in_range = true;
  for (double v = 1e-12; v <= 1e6 * 1.0001; v *= 10.0)
    for (double tau : {1e-12, 1e-6, 1.0, 1e6})
      for (double lambda : {1e-6, 0.1, 0.5, 0.999}) {
        GaussianMessageSet x{random_batch(10, 8, 4, rng, v), std::vector<double>(4, v)};
        GaussianMessageSet h{random_batch(10, 8, 4, rng), std::vector<double>(4, tau)};
        for (double p : activity_update(x, h, lambda)) in_range = in_range && std::isfinite(p) && p >= 0.0 && p <= 1.0;
      }
  add(o, "activity_finite_in_unit_interval", in_range);

  std::uniform_int_distribution<int> small(1, 12);
  std::uniform_real_distribution<double> lam(0.02, 1.0), snr(-10.0, 40.0);
  std::size_t bad = 0, thrown = 0;
  std::string first_bad;
  for (int trial = 0; trial < 1000; ++trial) {
    ExperimentSpec spec;
    Settings& s = spec.base;
    s.system.k = 2 + small(rng) * 2;
    s.system.t = 1 + static_cast<std::uint32_t>(rng() % s.system.k);
    s.system.n = static_cast<std::uint32_t>(small(rng));
    s.system.m = 1 + static_cast<std::uint32_t>(rng() % 4);
    s.system.activity = lam(rng);
    s.system.seed = rng();
    s.snr_db = snr(rng);
    s.engine.damping = 0.3 + 0.7 * lam(rng);
    s.channel.kind = trial % 2 ? ChannelKind::multipath : ChannelKind::iid_gaussian;
    s.channel.gain = static_cast<GainMode>(trial % 3);
    s.denoiser.sigma2 = 0.5 + lam(rng);
    try {
      const auto d = make_denoiser(s);
      const auto out = run_trial(spec, 0, 0, *d);
      const auto what = non_finite(out);
      if (!what.empty()) {
        ++bad;
        if (first_bad.empty()) first_bad = "non-finite " + what + " in fuzz trial " + std::to_string(trial);
      }
    } catch (const std::exception& e) {
      ++thrown;
      if (first_bad.empty()) first_bad = "fuzz trial " + std::to_string(trial) + ": " + e.what();
    }
  }
  add(o, "fuzz_non_finite=0", bad == 0);
  add(o, "fuzz_exceptions=0", thrown == 0);
  if (!first_bad.empty()) o.detail += " (" + first_bad + ")";
  return o;
}

Outcome ac8() {
  Outcome o;
  ExperimentSpec spec;
  spec.base = desk_settings();
  spec.base.trials = 40;
  spec.axis = SweepAxis::snr_db;
  spec.values = {0, 10, 20};
  std::string reference;
  bool same = true;
  for (unsigned w : {1u, 2u, 5u, std::max(8u, hw_workers())}) {
    spec.workers = w;
    std::ostringstream os;
    write_results_csv(os, run_experiment(spec));
    if (reference.empty()) reference = os.str();
    same = same && os.str() == reference;
  }
  add(o, "csv_identical_across_1_2_5_8_workers", same);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const Criterion criteria[] = {
      {"AC1 Tweedie-LMMSE identity", 1.0, ac1},
      {"AC2 brute-force posterior oracle", 30.0, ac2},
      {"AC3 joint-LMMSE fixed point", 5.0, ac3},
      {"AC4 pilot operator", 0.0, ac4},
      {"AC5 EP algebra", 0.0, ac5},
      {"AC6 end-to-end desk run", 120.0, ac6},
      {"AC7 stability", 0.0, ac7},
      {"AC8 determinism", 0.0, ac8},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) {
      out.pass = false;
      out.detail += " over time budget";
    }
    std::printf("%s %s [%.3fs%s] %s\n", out.pass ? "PASS" : "FAIL", c.id, secs,
                c.budget_s > 0.0 ? (" < " + std::to_string(int(c.budget_s)) + "s").c_str() : "", out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
