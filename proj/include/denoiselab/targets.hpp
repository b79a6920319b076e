#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "denoiselab/batch.hpp"

namespace dlab {

// Tractable target-distribution families. All of them admit exact samplers
// and exact noised-score oracles (the bump density goes through quadrature).

struct Gaussian1D {
  double tau = 1.0;  // stddev
};

struct DiagonalGaussian {
  Vec taus;  // per-coordinate stddevs
  Vec mean;
};

// N(0, tau^2 I_m) embedded in R^m x {0}^{d-m}.
struct SubspaceGaussian {
  int ambient_dim = 1;
  int intrinsic_dim = 1;
  double tau = 1.0;
};

struct DiracMixture {
  Mat locations;  // one point per row
  Vec weights;
};

struct GaussianMixtureComponent {
  double weight = 1.0;
  Vec mean;
  double tau = 1.0;  // isotropic stddev
};

struct GaussianMixture {
  std::vector<GaussianMixtureComponent> components;
};

// p(x) = exp(-1/(1-x^2)) / Z on (-1, 1): smooth density with compact support.
struct BumpDensity1D {};

using TargetVariant = std::variant<Gaussian1D, DiagonalGaussian, SubspaceGaussian,
                                   DiracMixture, GaussianMixture, BumpDensity1D>;

struct TargetSpec {
  TargetVariant variant;

  int dim() const;
  // True when the target has a full-support Lebesgue density in its ambient
  // space (Gaussian families, Gaussian mixtures, the bump density).
  bool has_density() const;
  std::string label() const;
  void validate() const;  // throws std::invalid_argument on violations
};

// Human-readable key-value config, e.g.
//   target = gaussian_mixture
//   component = 0.5 ; -2 ; 1
//   component = 0.5 ; 2 ; 1
TargetSpec parse_target_config(const std::string& text);
std::string format_target_config(const TargetSpec& spec);

SampleBatch sample_target(const TargetSpec& spec, long n, std::uint64_t seed);
SampleBatch add_noise(const SampleBatch& batch, double sigma, std::uint64_t seed);

// Exact evaluator of the score of X + N(0, sigma^2 I) and of the posterior
// mean E[X | Y = y]. The two are implemented through independent routes so
// that Tweedie's identity is a checkable property, not a definition.
class NoisedScoreOracle {
 public:
  explicit NoisedScoreOracle(TargetSpec spec);

  const TargetSpec& target() const { return spec_; }
  int dim() const { return spec_.dim(); }

  Vec score(const Vec& y, double sigma2) const;
  Vec posterior_mean(const Vec& y, double sigma2) const;
  double log_density(const Vec& y, double sigma2) const;

 private:
  TargetSpec spec_;
};

// Score of the clean density; throws std::domain_error for targets without an
// ambient density and for |x| >= 1 on the bump.
Vec score_of_clean_density(const TargetSpec& spec, const Vec& x);

// Higher log-density derivatives, available for Gaussian1D and BumpDensity1D.
double clean_log_density_hessian_1d(const TargetSpec& spec, double x);
double clean_log_density_third_derivative_1d(const TargetSpec& spec, double x);

// Bump density plumbing (normalizer computed once by quadrature).
double bump_normalizer();
double bump_density(double x);

// Scalar normal CDF and its inverse (accurate to ~1e-15).
double normal_cdf(double x);
double inverse_normal_cdf(double u);

// Quantile functions for one-dimensional targets, used by the common-random-
// number Monte Carlo estimators. clean_quantile inverts the target law;
// noised_cdf / noised_quantile handle the law of X + N(0, sigma^2).
double clean_quantile(const TargetSpec& spec, double u);
double noised_cdf(const TargetSpec& spec, double y, double sigma);
double noised_quantile(const TargetSpec& spec, double u, double sigma);

}  // namespace dlab
