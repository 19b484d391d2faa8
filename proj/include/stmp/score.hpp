#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stmp/tensor.hpp"

namespace stmp {

/// Noise variances a score model accepts.
struct NoiseDomain {
  double min = 0.0;
  double max = std::numeric_limits<double>::infinity();
  bool contains(double tau) const { return tau >= min && tau <= max; }
};

/// Score of the noise-perturbed channel density p~(H) = p * CN(0, tau I).
///
/// Convention: score1 is the conjugate Wirtinger derivative d log p~ / dH*,
/// score2 holds the real diagonal entries d^2 log p~ / dH dH*. With CSCG
/// noise of variance tau this gives, without extra factors of two,
///   E[H | H~]   = H~ + tau * score1
///   Var[h | H~] = tau + tau^2 * score2   (per entry)
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::string name() const = 0;
  virtual bool has_second_order() const = 0;
  virtual NoiseDomain domain() const { return {}; }

  /// Evaluates the requested orders over a (B, N, M) batch. Either output
  /// pointer may be null; non-null outputs are resized to the batch shape.
  virtual void evaluate(const CTensor3& h, double tau, CTensor3* score1,
                        RTensor3* score2) const = 0;

  CTensor3 score1(const CTensor3& h, double tau) const;
  RTensor3 score2_diag(const CTensor3& h, double tau) const;
};

/// Component of a complex scalar mixture CN(mean, var) with weight.
struct MixtureComponent {
  double weight = 1.0;
  cplx mean{};
  double var = 1.0;

  friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

/// Analytic score of an i.i.d. CN(0, sigma2) prior on every entry.
class GaussianScore final : public ScoreModel {
 public:
  explicit GaussianScore(double sigma2);
  std::string name() const override { return "gaussian"; }
  bool has_second_order() const override { return true; }
  void evaluate(const CTensor3& h, double tau, CTensor3* score1, RTensor3* score2) const override;

  double sigma2() const { return sigma2_; }
  /// log p~(h) for one entry.
  double log_density(cplx h, double tau) const;

 private:
  double sigma2_;
};

/// Analytic score of an i.i.d. complex Gaussian mixture prior on every entry.
/// Every component variance is inflated by tau; evaluation is exact for any tau.
class MixtureScore final : public ScoreModel {
 public:
  explicit MixtureScore(std::vector<MixtureComponent> components);
  std::string name() const override { return "gaussian_mixture"; }
  bool has_second_order() const override { return true; }
  void evaluate(const CTensor3& h, double tau, CTensor3* score1, RTensor3* score2) const override;

  const std::vector<MixtureComponent>& components() const { return components_; }
  double log_density(cplx h, double tau) const;
  /// score1 and score2 of a single entry.
  std::pair<cplx, double> entry_scores(cplx h, double tau) const;

 private:
  std::vector<MixtureComponent> components_;
};

std::shared_ptr<const ScoreModel> gaussian_score(double sigma2);
/// Throws DegenerateMixture unless weights are non-negative, sum to one and
/// variances are positive.
std::shared_ptr<const ScoreModel> gm_score(std::vector<MixtureComponent> components);

}  // namespace stmp
