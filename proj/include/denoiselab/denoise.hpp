#pragma once

#include "denoiselab/batch.hpp"
#include "denoiselab/targets.hpp"

namespace dlab {

// Score-based denoiser phi_alpha(y) = y + alpha * sigma^2 * score(y; sigma^2).
// alpha = 0 is the identity, alpha = 1/2 the half step, alpha = 1 recovers the
// posterior mean.
Vec denoise_point(const NoisedScoreOracle& oracle, const Vec& y, double sigma,
                  double alpha);

SampleBatch denoise_batch(const NoisedScoreOracle& oracle, const SampleBatch& noisy,
                          double sigma, double alpha);

// Distance-minimizing alpha for a centered Gaussian target with stddev tau
// under noise level sigma, evaluated in a cancellation-free form.
double optimal_alpha_gaussian(double tau, double sigma);

}  // namespace dlab
