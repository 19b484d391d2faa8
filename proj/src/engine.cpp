#include "stmp/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "stmp/errors.hpp"
#include "stmp/metrics.hpp"

namespace stmp {

namespace {

double clamp_var(double v, VarianceLimits limits) { return std::clamp(v, limits.floor, limits.cap); }

bool all_finite(std::span<const cplx> v) {
  return std::all_of(v.begin(), v.end(),
                     [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const GaussianMessageSet& msg, const char* what, std::uint32_t iter) {
  if (!all_finite(msg.mean.data()) || !all_finite(msg.var))
    throw Diverged(std::string("non-finite ") + what + " at iteration " + std::to_string(iter));
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void check_pair(const GaussianMessageSet& a, const GaussianMessageSet& b) {
  if (!a.mean.same_shape(b.mean) || a.var.size() != a.mean.dim2() || b.var.size() != b.mean.dim2())
    throw DimensionMismatch("message sets differ in shape");
}

}  // namespace

LmmseColumn lmmse_update(std::span<const cplx> y_m, const PilotOperator& pilot,
                         std::span<const cplx> x_pri_m, double v_pri, double noise_var) {
  if (!(v_pri > 0.0)) throw NonPositiveVariance("lmmse_update: prior variance must be positive");
  const double kp = static_cast<double>(pilot.k()) * pilot.power();
  const double tp = static_cast<double>(pilot.t()) * pilot.power();
  const double denom = kp * v_pri + noise_var;

  std::vector<cplx> r = pilot.apply(x_pri_m);
  if (r.size() != y_m.size()) throw DimensionMismatch("lmmse_update: observation length");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = y_m[i] - r[i];
  std::vector<cplx> g = pilot.adjoint(r);

  LmmseColumn out;
  out.mean.resize(x_pri_m.size());
  const double gain = v_pri / denom;
  for (std::size_t i = 0; i < g.size(); ++i) out.mean[i] = x_pri_m[i] + gain * g[i];
  // v - TPv^2/(KPv + d) without cancellation when T = K and d << KPv
  out.var = std::min(v_pri, v_pri * ((kp - tp) * v_pri + noise_var) / denom);
  return out;
}

ExtrinsicScalar gaussian_ext(std::span<const cplx> post_mean, double v_post,
                             std::span<const cplx> pri_mean, double v_pri,
                             std::span<cplx> ext_mean, VarianceLimits limits) {
  if (post_mean.size() != pri_mean.size() || ext_mean.size() != post_mean.size())
    throw DimensionMismatch("gaussian_ext: block sizes differ");
  v_post = std::max(v_post, limits.floor);
  v_pri = std::max(v_pri, limits.floor);

  const double precision = 1.0 / v_post - 1.0 / v_pri;
  if (precision <= 1.0 / limits.cap) {
    std::copy(post_mean.begin(), post_mean.end(), ext_mean.begin());
    return {limits.cap, true};
  }
  const double v = 1.0 / precision;
  const double a = v / v_post;
  const double b = v / v_pri;
  for (std::size_t i = 0; i < post_mean.size(); ++i) ext_mean[i] = a * post_mean[i] - b * pri_mean[i];
  const double clamped = clamp_var(v, limits);
  return {clamped, clamped != v};
}

std::size_t gaussian_ext(const GaussianMessageSet& post, const GaussianMessageSet& pri,
                         GaussianMessageSet& ext, VarianceLimits limits) {
  check_pair(post, pri);
  const std::size_t rows = post.mean.dim0() * post.mean.dim1();
  const std::size_t m_count = post.mean.dim2();
  ext.mean = CTensor3(post.mean.dim0(), post.mean.dim1(), m_count);
  ext.var.assign(m_count, 0.0);

  std::vector<cplx> a(rows), b(rows), e(rows);
  std::size_t clamps = 0;
  for (std::size_t m = 0; m < m_count; ++m) {
    gather_column(post.mean, m, a);
    gather_column(pri.mean, m, b);
    const auto r = gaussian_ext(a, post.var[m], b, pri.var[m], e, limits);
    scatter_column(e, m, ext.mean);
    ext.var[m] = r.var;
    clamps += r.clamped ? 1 : 0;
  }
  return clamps;
}

std::vector<double> activity_update(const GaussianMessageSet& x_pri, const GaussianMessageSet& h_ext,
                                    double prior) {
  check_pair(x_pri, h_ext);
  const std::size_t k_count = x_pri.mean.dim0();
  const std::size_t n_count = x_pri.mean.dim1();
  const std::size_t m_count = x_pri.mean.dim2();
  std::vector<double> out(k_count, 1.0);
  if (prior >= 1.0) return out;
  if (prior <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }

  const double nd = static_cast<double>(n_count);
  const double logit = std::log(prior) - std::log1p(-prior);
  std::vector<double> log_ratio_var(m_count);
  for (std::size_t m = 0; m < m_count; ++m)
    log_ratio_var[m] = nd * (std::log(x_pri.var[m]) - std::log(x_pri.var[m] + h_ext.var[m]));

  for (std::size_t k = 0; k < k_count; ++k) {
    double d = logit;
    for (std::size_t m = 0; m < m_count; ++m) {
      const double v = x_pri.var[m];
      const double s = v + h_ext.var[m];
      double diff = 0.0, self = 0.0;
      for (std::size_t n = 0; n < n_count; ++n) {
        diff += std::norm(x_pri.mean(k, n, m) - h_ext.mean(k, n, m));
        self += std::norm(x_pri.mean(k, n, m));
      }
      d += log_ratio_var[m] - diff / s + self / v;
    }
    if (std::isnan(d)) throw Diverged("activity_update: undefined log-ratio");
    out[k] = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  return out;
}

GaussianMessageSet x_combine(const GaussianMessageSet& x_pri, const GaussianMessageSet& h_ext) {
  check_pair(x_pri, h_ext);
  const std::size_t m_count = x_pri.mean.dim2();
  GaussianMessageSet out{CTensor3(x_pri.mean.dim0(), x_pri.mean.dim1(), m_count),
                         std::vector<double>(m_count)};
  std::vector<double> wx(m_count), wh(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double px = 1.0 / x_pri.var[m];
    const double ph = 1.0 / h_ext.var[m];
    out.var[m] = 1.0 / (px + ph);
    wx[m] = out.var[m] * px;
    wh[m] = out.var[m] * ph;
  }
  auto src_x = x_pri.mean.data();
  auto src_h = h_ext.mean.data();
  auto dst = out.mean.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::size_t m = i % m_count;
    dst[i] = wx[m] * src_x[i] + wh[m] * src_h[i];
  }
  return out;
}

GaussianMessageSet x_project(std::span<const double> activity, const GaussianMessageSet& combined,
                             VarianceLimits limits) {
  const std::size_t k_count = combined.mean.dim0();
  const std::size_t n_count = combined.mean.dim1();
  const std::size_t m_count = combined.mean.dim2();
  if (activity.size() != k_count) throw DimensionMismatch("x_project: activity length");

  GaussianMessageSet out{CTensor3(k_count, n_count, m_count), std::vector<double>(m_count, 0.0)};
  for (std::size_t k = 0; k < k_count; ++k) {
    const double lam = activity[k];
    for (std::size_t n = 0; n < n_count; ++n)
      for (std::size_t m = 0; m < m_count; ++m) {
        const cplx xt = combined.mean(k, n, m);
        out.mean(k, n, m) = lam * xt;
        out.var[m] += bernoulli_gaussian_variance(lam, xt, combined.var[m]);
      }
  }
  const double kn = static_cast<double>(k_count * n_count);
  for (auto& v : out.var) v = clamp_var(v / kn, limits);
  return out;
}

GaussianMessageSet damp(const GaussianMessageSet& current, const GaussianMessageSet& previous,
                        double gamma) {
  check_pair(current, previous);
  GaussianMessageSet out = current;
  if (gamma == 1.0) return out;
  auto dst = out.mean.data();
  auto prev = previous.mean.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = gamma * dst[i] + (1.0 - gamma) * prev[i];
  for (std::size_t m = 0; m < out.var.size(); ++m) out.var[m] = damp(out.var[m], previous.var[m], gamma);
  return out;
}

double damp(double current, double previous, double gamma) {
  return gamma * current + (1.0 - gamma) * previous;
}

std::vector<std::uint8_t> decide_activity(std::span<const double> activity, double threshold) {
  std::vector<std::uint8_t> out(activity.size());
  for (std::size_t k = 0; k < activity.size(); ++k) out[k] = activity[k] >= threshold ? 1 : 0;
  return out;
}

std::size_t IterationTrace::total_clamps() const {
  std::size_t s = 0;
  for (const auto& r : rows) s += r.clamps;
  return s;
}

void IterationTrace::write_csv(std::ostream& os) const {
  os << "iter,residual,nmse_db,v_pri_mean,v_post_mean,tau_pri,clamps,ms\n";
  const auto old_precision = os.precision(17);
  for (const auto& r : rows) {
    os << r.iter << ',' << r.residual << ',' << r.nmse_db << ',' << r.v_pri_mean << ','
       << r.v_post_mean << ',' << r.tau_pri << ',' << r.clamps << ',' << r.ms << '\n';
  }
  os.precision(old_precision);
}

RunResult run(const SystemConfig& cfg, const EngineConfig& eng, const PilotOperator& pilot,
              const CTensor3& y, const ChannelDenoiser& denoiser, const RunOptions& options) {
  validate(cfg, eng);
  const std::size_t K = cfg.k, N = cfg.n, M = cfg.m, T = cfg.t;
  if (pilot.k() != K || pilot.n() != N || pilot.t() != T)
    throw DimensionMismatch("run: pilot dimensions do not match the system config");
  if (y.dim0() != T || y.dim1() != N || y.dim2() != M)
    throw DimensionMismatch("run: observation must be (T, N, M)");
  if (options.truth && (options.truth->dim0() != K || options.truth->dim1() != N || options.truth->dim2() != M))
    throw DimensionMismatch("run: truth must be (K, N, M)");
  if (!(options.init_power > 0.0)) throw InvalidConfig("init_power", "must be positive");

  const VarianceLimits limits{eng.var_floor, eng.var_cap};
  using clock = std::chrono::steady_clock;

  GaussianMessageSet a_pri{CTensor3(K, N, M),
                           std::vector<double>(M, clamp_var(cfg.activity * options.init_power, limits))};
  GaussianMessageSet a_post{CTensor3(K, N, M), std::vector<double>(M)};
  GaussianMessageSet b_pri, b_pri_cur, b_ext, h_ext, b_post;
  DenoiserOutput channel;
  std::vector<double> lambda(K, cfg.activity);
  CTensor3 prev_post(K, N, M);

  std::vector<cplx> y_col(T * N), x_col(K * N);
  RunResult result;

  for (std::uint32_t it = 0; it < eng.max_iters; ++it) {
    const auto t0 = clock::now();
    std::uint32_t clamps = 0;

    // module A
    for (std::size_t m = 0; m < M; ++m) {
      gather_column(y, m, y_col);
      gather_column(a_pri.mean, m, x_col);
      auto col = lmmse_update(y_col, pilot, x_col, a_pri.var[m], cfg.noise_var);
      scatter_column(col.mean, m, a_post.mean);
      a_post.var[m] = col.var;
    }
    require_finite(a_post, "module-A posterior", it);
    clamps += static_cast<std::uint32_t>(gaussian_ext(a_post, a_pri, b_pri_cur, limits));
    b_pri = it == 0 ? b_pri_cur : damp(b_pri_cur, b_pri, eng.damping);

    // module B: channel denoiser on the pooled variance
    channel = denoiser.denoise(b_pri.mean, b_pri.var);
    if (!channel.h_post.same_shape(b_pri.mean) || channel.tau_post.size() != M)
      throw DimensionMismatch("run: denoiser output shape");
    const double tau_pri = pool_variance(b_pri.var);
    {
      GaussianMessageSet h_post{channel.h_post, channel.tau_post};
      GaussianMessageSet h_pri{b_pri.mean, std::vector<double>(M, tau_pri)};
      require_finite(h_post, "channel posterior", it);
      clamps += static_cast<std::uint32_t>(gaussian_ext(h_post, h_pri, h_ext, limits));
    }

    lambda = activity_update(b_pri, h_ext, cfg.activity);
    b_post = x_project(lambda, x_combine(b_pri, h_ext), limits);
    require_finite(b_post, "module-B posterior", it);

    clamps += static_cast<std::uint32_t>(gaussian_ext(b_post, b_pri, b_ext, limits));
    GaussianMessageSet a_next = damp(b_ext, a_pri, eng.damping);
    require_finite(a_next, "module-A prior", it);

    double diff = 0.0, norm = 0.0;
    {
      auto cur = b_post.mean.data();
      auto prev = prev_post.data();
      for (std::size_t i = 0; i < cur.size(); ++i) {
        diff += std::norm(cur[i] - prev[i]);
        norm += std::norm(cur[i]);
      }
    }
    // a mean that collapses to zero changed by all of its previous norm
    double residual = 0.0;
    if (norm > 0.0) residual = std::sqrt(diff / norm);
    else if (diff > 0.0) residual = 1.0;

    IterationRecord rec;
    rec.iter = it;
    rec.residual = residual;
    rec.nmse_db = std::numeric_limits<double>::quiet_NaN();
    if (options.truth && squared_norm(options.truth->data()) > 0.0)
      rec.nmse_db = to_db(nmse(*options.truth, b_post.mean));
    rec.v_pri_mean = mean_of(a_pri.var);
    rec.v_post_mean = mean_of(b_post.var);
    rec.tau_pri = tau_pri;
    rec.clamps = clamps;

    if (options.on_iteration)
      options.on_iteration(IterationSnapshot{it, b_pri, channel, lambda, b_post, a_next});

    a_pri = std::move(a_next);
    prev_post = b_post.mean;
    if (options.record_time)
      rec.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    result.trace.rows.push_back(rec);
    result.iterations = it + 1;
    if (residual < eng.tol) {
      result.converged = true;
      break;
    }
  }

  result.h_post = std::move(channel.h_post);
  result.x_post = std::move(b_post);
  result.active = decide_activity(lambda, eng.threshold);
  result.activity = std::move(lambda);
  return result;
}

}  // namespace stmp
