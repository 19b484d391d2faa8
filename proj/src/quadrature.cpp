#include "stmp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "stmp/errors.hpp"

namespace stmp {
namespace {

struct Box {
  double re_lo, re_hi, im_lo, im_hi;
};

double log_prior_entry(const PriorSpec& prior, cplx h) {
  double best = -std::numeric_limits<double>::infinity();
  double terms[64];
  std::size_t n = 0;
  for (const auto& c : prior.components) {
    if (c.weight == 0.0) continue;
    const double l = std::log(c.weight) - std::log(std::numbers::pi * c.var) - std::norm(h - c.mean) / c.var;
    if (n < 64) terms[n++] = l;
    best = std::max(best, l);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(terms[i] - best);
  return best + std::log(acc);
}

// Integration support for one entry: union of +-12 sd boxes around each
// component's posterior, skipping components with negligible evidence.
Box support(const PriorSpec& prior, cplx obs, double tau) {
  std::vector<double> evidence;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : prior.components) {
    const double s = c.var + tau;
    const double e = c.weight > 0.0 ? std::log(c.weight) - std::log(s) - std::norm(obs - c.mean) / s
                                    : -std::numeric_limits<double>::infinity();
    evidence.push_back(e);
    best = std::max(best, e);
  }
  Box box{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < prior.components.size(); ++i) {
    if (evidence[i] < best - 80.0) continue;
    const auto& c = prior.components[i];
    const double s = c.var + tau;
    const cplx m = (c.var * obs + tau * c.mean) / s;
    const double sd = std::sqrt(c.var * tau / s / 2.0);  // per real axis
    const double r = 12.0 * sd;
    box.re_lo = std::min(box.re_lo, m.real() - r);
    box.re_hi = std::max(box.re_hi, m.real() + r);
    box.im_lo = std::min(box.im_lo, m.imag() - r);
    box.im_hi = std::max(box.im_hi, m.imag() + r);
  }
  return box;
}

struct Sums {
  std::vector<cplx> mean;
  std::vector<double> second;  // E|h_i - centre_i|^2
  std::vector<cplx> centre;
};

// Trapezoid sums over an n-point grid per real axis. Tails are ~e^-144 at the
// box edge, so endpoint weights are immaterial; uniform weights are used.
Sums integrate(const PriorSpec& prior, std::span<const cplx> obs, double tau,
               std::span<const Box> boxes, std::size_t n) {
  const std::size_t d = obs.size();
  std::vector<std::vector<cplx>> nodes(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto& b = boxes[i];
    nodes[i].reserve(n * n);
    for (std::size_t a = 0; a < n; ++a) {
      const double re = b.re_lo + (b.re_hi - b.re_lo) * (static_cast<double>(a) + 0.5) / n;
      for (std::size_t c = 0; c < n; ++c) {
        const double im = b.im_lo + (b.im_hi - b.im_lo) * (static_cast<double>(c) + 0.5) / n;
        nodes[i].emplace_back(re, im);
      }
    }
  }
  // Per-entry log integrand; the joint integrand of an i.i.d. prior with
  // diagonal noise is the literal product over entries, evaluated jointly.
  std::vector<std::vector<double>> logf(d);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d; ++i) {
    logf[i].resize(nodes[i].size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nodes[i].size(); ++j) {
      const cplx h = nodes[i][j];
      logf[i][j] = log_prior_entry(prior, h) - std::log(std::numbers::pi * tau) - std::norm(obs[i] - h) / tau;
      best = std::max(best, logf[i][j]);
    }
    shift = (i == 0) ? best : shift + best;
  }

  // Moments are accumulated about the box centre to avoid cancellation in
  // E|h|^2 - |E h|^2 for tight posteriors far from the origin.
  std::vector<cplx> centre(d);
  for (std::size_t i = 0; i < d; ++i)
    centre[i] = {(boxes[i].re_lo + boxes[i].re_hi) / 2.0, (boxes[i].im_lo + boxes[i].im_hi) / 2.0};
  for (std::size_t i = 0; i < d; ++i)
    for (auto& h : nodes[i]) h -= centre[i];

  Sums s{std::vector<cplx>(d), std::vector<double>(d, 0.0), centre};
  double z = 0.0;
  if (d == 1) {
    for (std::size_t j = 0; j < nodes[0].size(); ++j) {
      const double w = std::exp(logf[0][j] - shift);
      z += w;
      s.mean[0] += w * nodes[0][j];
      s.second[0] += w * std::norm(nodes[0][j]);
    }
  } else {
    for (std::size_t j0 = 0; j0 < nodes[0].size(); ++j0) {
      for (std::size_t j1 = 0; j1 < nodes[1].size(); ++j1) {
        const double w = std::exp(logf[0][j0] + logf[1][j1] - shift);
        z += w;
        s.mean[0] += w * nodes[0][j0];
        s.mean[1] += w * nodes[1][j1];
        s.second[0] += w * std::norm(nodes[0][j0]);
        s.second[1] += w * std::norm(nodes[1][j1]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    s.mean[i] /= z;
    s.second[i] /= z;
  }
  return s;
}

}  // namespace

PosteriorMoments brute_force_mmse(const PriorSpec& prior, std::span<const cplx> h_obs, double tau,
                                  const QuadratureOptions& options) {
  if (h_obs.empty() || h_obs.size() > 2)
    throw DimensionMismatch("brute-force MMSE supports one or two complex entries");
  if (!(tau > 0.0)) throw OutOfDomain("brute-force MMSE needs a positive noise variance");
  if (prior.components.empty() || prior.components.size() > 64)
    throw DegenerateMixture("prior needs between 1 and 64 components");

  std::vector<Box> boxes;
  for (const auto& o : h_obs) boxes.push_back(support(prior, o, tau));
  const std::size_t cap = h_obs.size() == 1 ? options.max_points_1d : options.max_points_2d;

  std::size_t n = std::min(options.initial_points, cap);
  Sums prev = integrate(prior, h_obs, tau, boxes, n);
  double change = std::numeric_limits<double>::infinity();
  while (n * 2 <= cap) {
    n *= 2;
    Sums cur = integrate(prior, h_obs, tau, boxes, n);
    change = 0.0;
    for (std::size_t i = 0; i < h_obs.size(); ++i) {
      const double scale = std::max(std::sqrt(cur.second[i]), 1e-300);
      change = std::max(change, std::abs(cur.mean[i] - prev.mean[i]) / scale);
      change = std::max(change, std::abs(cur.second[i] - prev.second[i]) / (scale * scale));
    }
    prev = std::move(cur);
    if (change < options.rel_tol) break;
  }
  if (!(change < options.rel_tol))
    throw GridTooCoarse("quadrature did not converge within the grid cap", change);

  PosteriorMoments out;
  out.estimated_error = change;
  for (std::size_t i = 0; i < h_obs.size(); ++i) {
    out.mean.push_back(prev.centre[i] + prev.mean[i]);
    out.var.push_back(std::max(0.0, prev.second[i] - std::norm(prev.mean[i])));
  }
  return out;
}

}  // namespace stmp
