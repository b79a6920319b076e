#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "denoiselab/batch.hpp"

namespace dlab {

// A distance estimate with its method tag. std_error is present only for
// Monte-Carlo-based methods; n is the sample (or node) count.
struct DistanceReport {
  std::string method;
  double value = 0.0;
  std::optional<double> std_error;
  long n = 0;

  std::string csv_row() const;  // method,value,stderr,n
};

// Translation-invariant Gaussian kernel k(x,y) = exp(-|x-y|^2 / (2 l^2)),
// whose spectral measure is N(0, l^-2 I); the moment accessors give the
// even moments of |xi| under that measure.
struct KernelSpec {
  double bandwidth = 1.0;

  double c2(int d) const;  // E |xi|^2 = d / l^2
  double c4(int d) const;  // E |xi|^4 = d (d+2) / l^4
  double c8(int d) const;  // E |xi|^8 = d (d+2) (d+4) (d+6) / l^8
};

// Exact W2 between N(0, tau^2) and the law of phi_alpha(Y), Y = X + N(0, sigma^2):
// |tau - (tau^2 + (1-alpha) sigma^2) / sqrt(tau^2 + sigma^2)|.
double gaussian_w2_alpha(double tau, double sigma, double alpha);

// W2 between two 1D Gaussians: sqrt((mu1-mu2)^2 + (s1-s2)^2).
double gaussian_w2_closed(double mu1, double s1, double mu2, double s2);

// Empirical W_p between two equal-size 1D batches via the sorted coupling;
// stderr by bootstrap over the per-pair costs.
DistanceReport empirical_wp_1d(const SampleBatch& a, const SampleBatch& b, double p,
                               int bootstrap_resamples = 200,
                               std::uint64_t bootstrap_seed = 0);

// Exact empirical W2 in any dimension via optimal assignment (n <= 4096).
DistanceReport empirical_w2_assignment(const SampleBatch& a, const SampleBatch& b);

// Square root of the unbiased MMD^2 U-statistic (clamped at 0 before the
// root); stderr by bootstrap over sample indices using cached Gram matrices.
DistanceReport mmd_ustat(const SampleBatch& a, const SampleBatch& b,
                         const KernelSpec& kernel, int bootstrap_resamples = 200,
                         std::uint64_t bootstrap_seed = 0);

// |char fn of N(0,tau^2) - char fn of phi_alpha(Y)| at frequency xi; both laws
// are Gaussian so this is exact.
double charfn_distance_gaussian(double tau, double sigma, double alpha, double xi);

// |empirical char fn of a - empirical char fn of b| at each frequency row.
std::vector<double> charfn_distance_empirical(const SampleBatch& a,
                                              const SampleBatch& b, const Mat& xis);

// Default 1D frequency grid: 64 points log-spaced in [1e-2, 1e2].
Mat default_frequency_grid_1d();

// W2 between the two-point mixture (1/2)(delta_{-mu} + delta_{mu}) and
// phi_alpha of its noised version, by adaptive quadrature of
// (1/sqrt(2 pi sigma^2)) int (phi_alpha(|y|) - mu)^2 exp(-(y-mu)^2/(2 sigma^2)) dy
// over [mu - 12 sigma, mu + 12 sigma]; absolute tolerance 1e-10 on W2^2.
double dirac_mixture_w2_quadrature(double mu, double sigma, double alpha);

}  // namespace dlab
