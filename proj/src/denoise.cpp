#include "denoiselab/denoise.hpp"

#include <cmath>
#include <stdexcept>

namespace dlab {

Vec denoise_point(const NoisedScoreOracle& oracle, const Vec& y, double sigma,
                  double alpha) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("denoise_point: sigma must be positive and finite");
  if (!std::isfinite(alpha))
    throw std::invalid_argument("denoise_point: alpha must be finite");
  double s2 = sigma * sigma;
  return y + alpha * s2 * oracle.score(y, s2);
}

SampleBatch denoise_batch(const NoisedScoreOracle& oracle, const SampleBatch& noisy,
                          double sigma, double alpha) {
  noisy.validate();
  if (noisy.dim() != oracle.dim())
    throw std::invalid_argument("denoise_batch: dimension mismatch");
  SampleBatch out = noisy;
  out.label = noisy.label + "+denoised";
  for (long i = 0; i < noisy.n(); ++i) {
    Vec y = noisy.data.row(i).transpose();
    out.data.row(i) = denoise_point(oracle, y, sigma, alpha).transpose();
  }
  return out;
}

double optimal_alpha_gaussian(double tau, double sigma) {
  if (!(tau >= 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("optimal_alpha_gaussian: need tau >= 0 and sigma > 0");
  // Minimizer of |tau - (tau^2 + (1-alpha) sigma^2) / sqrt(tau^2 + sigma^2)|,
  // written with r = tau / sigma to avoid cancellation for tau >> sigma.
  double r = tau / sigma;
  double r2 = r * r;
  return (1.0 + r2) / (1.0 + r2 + r * std::sqrt(1.0 + r2));
}

}  // namespace dlab
