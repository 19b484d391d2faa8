#include "stmp/score.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stmp/errors.hpp"

namespace stmp {

CTensor3 ScoreModel::score1(const CTensor3& h, double tau) const {
  CTensor3 out;
  evaluate(h, tau, &out, nullptr);
  return out;
}

RTensor3 ScoreModel::score2_diag(const CTensor3& h, double tau) const {
  RTensor3 out;
  evaluate(h, tau, nullptr, &out);
  return out;
}

GaussianScore::GaussianScore(double sigma2) : sigma2_(sigma2) {
  if (!(sigma2 > 0.0)) throw DegenerateMixture("gaussian prior needs positive variance");
}

void GaussianScore::evaluate(const CTensor3& h, double tau, CTensor3* score1,
                             RTensor3* score2) const {
  const double s = sigma2_ + tau;
  if (score1) {
    *score1 = CTensor3(h.dim0(), h.dim1(), h.dim2());
    auto out = score1->data();
    auto in = h.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = -in[i] / s;
  }
  if (score2) *score2 = RTensor3(h.dim0(), h.dim1(), h.dim2(), -1.0 / s);
}

double GaussianScore::log_density(cplx h, double tau) const {
  const double s = sigma2_ + tau;
  return -std::log(std::numbers::pi * s) - std::norm(h) / s;
}

MixtureScore::MixtureScore(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw DegenerateMixture("mixture has no components");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) throw DegenerateMixture("mixture weights must be non-negative");
    if (!(c.var > 0.0)) throw DegenerateMixture("mixture variances must be positive");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DegenerateMixture("mixture weights must sum to one");
}

double MixtureScore::log_density(cplx h, double tau) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    if (c.weight == 0.0) continue;
    const double s = c.var + tau;
    const double l = std::log(c.weight) - std::log(std::numbers::pi * s) - std::norm(h - c.mean) / s;
    terms.push_back(l);
    best = std::max(best, l);
  }
  double acc = 0.0;
  for (double l : terms) acc += std::exp(l - best);
  return best + std::log(acc);
}

std::pair<cplx, double> MixtureScore::entry_scores(cplx h, double tau) const {
  // Responsibilities via log-sum-exp; g_c = -(h - mu_c)/s_c is the score of
  // component c. Second order: sum r_c(-1/s_c) + sum r_c |g_c|^2 - |sum r_c g_c|^2.
  double best = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> logw;
  logw.assign(components_.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    if (comp.weight == 0.0) continue;
    const double s = comp.var + tau;
    logw[c] = std::log(comp.weight) - std::log(s) - std::norm(h - comp.mean) / s;
    best = std::max(best, logw[c]);
  }
  double norm = 0.0;
  for (auto& l : logw) {
    l = std::exp(l - best);
    norm += l;
  }
  cplx g_bar{};
  double curv = 0.0;
  double g_sq = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const double r = logw[c] / norm;
    if (r == 0.0) continue;
    const double s = components_[c].var + tau;
    const cplx g = -(h - components_[c].mean) / s;
    g_bar += r * g;
    curv -= r / s;
    g_sq += r * std::norm(g);
  }
  return {g_bar, curv + g_sq - std::norm(g_bar)};
}

void MixtureScore::evaluate(const CTensor3& h, double tau, CTensor3* score1,
                            RTensor3* score2) const {
  if (score1) *score1 = CTensor3(h.dim0(), h.dim1(), h.dim2());
  if (score2) *score2 = RTensor3(h.dim0(), h.dim1(), h.dim2());
  auto in = h.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto [s1, s2] = entry_scores(in[i], tau);
    if (score1) score1->data()[i] = s1;
    if (score2) score2->data()[i] = s2;
  }
}

std::shared_ptr<const ScoreModel> gaussian_score(double sigma2) {
  return std::make_shared<GaussianScore>(sigma2);
}

std::shared_ptr<const ScoreModel> gm_score(std::vector<MixtureComponent> components) {
  return std::make_shared<MixtureScore>(std::move(components));
}

}  // namespace stmp
