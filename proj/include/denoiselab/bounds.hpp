#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "denoiselab/metrics.hpp"
#include "denoiselab/targets.hpp"

namespace dlab {

// Regularity constants of the clean density. An empty optional means the
// constant is infinite (hypothesis violated), which is distinct from "huge"
// and propagates to bound-not-applicable results.
struct BoundConstants {
  std::optional<double> C;   // E |grad log p_X(X)|^2
  std::optional<double> C1;  // E |grad log p_X(X)|^6
  std::optional<double> C2;  // E |hess log p_X(X)|_op^3
  std::optional<double> C3;  // E |grad laplacian log p_X(X)|^2
  int d = 1;
};

struct ConstantEstimate {
  std::optional<double> value;      // empty = infinite
  std::optional<double> std_error;  // present for Monte Carlo estimates
};

// E |grad log p_X(X)|^2: closed form for Gaussian families (sum of 1/tau_i^2),
// Monte Carlo (with stderr) for GaussianMixture and BumpDensity1D, infinite
// for Dirac mixtures.
ConstantEstimate constant_C(const TargetSpec& spec, long n = 1000000,
                            std::uint64_t seed = 0);

// Upper bounds on C1, C2, C3 for X = Z + N(0, tau^2 I) in dimension d, given
// E |Z|^6:
//   C1 <= 243 / tau^12 (2 E|Z|^6 + 15 d tau^6)
//   C2 <= 9 (1 / tau^6 + 2 E|Z|^6 / tau^12)
//   C3 <= 40 E|Z|^6 / tau^12
BoundConstants constants_smoothed(double inner_moment6, double tau, int d);

// W2 <= prop3_prefactor * sigma^2 with prefactor sqrt((1 + 4 alpha^2) C / 2).
double prop3_prefactor(double C, double alpha);

// The bracket 4 C1 + (2 d^2 + 5) C1^{1/3} C2^{2/3} + C3, scaled by 9/4; the
// half-denoising W2 bound prefactor is K = sqrt(C / 12) = sqrt(3)/4 sqrt(bracket).
std::optional<double> lemma4_constant(const BoundConstants& k);
std::optional<double> prop4_prefactor(const BoundConstants& k);

// MMD bound prefactors for the Gaussian kernel:
//   K1 = sqrt(4 alpha^2 C c2 + c4) / sqrt(2)   (general alpha, order sigma^2)
//   K2 = sqrt(C^2 c4 + c8) / (4 sqrt(2))       (alpha = 1/2, order sigma^4)
std::pair<double, double> cor2_prefactors(double C, double alpha,
                                          const KernelSpec& kernel, int d);

// W_p generalizations: ((1 + 2^p |alpha|^p) C / 2)^{1/p} for the order-sigma^2
// bound and 9^{(p-1)/p} / (4 (p+1)^{1/p}) * bracket^{1/p} for the alpha = 1/2
// order-sigma^4 bound; both reduce to the p = 2 evaluators.
std::pair<std::optional<double>, std::optional<double>> prop_p_prefactors(
    std::optional<double> C, double alpha, double p, const BoundConstants& k);

// Exact lift from the intrinsic subspace to the ambient space:
// sqrt(w2_on_subspace^2 + (d - m) (1 - alpha)^2 sigma^2).
double subspace_w2_decomposition(double w2_on_subspace, int d, int m, double sigma,
                                 double alpha);

}  // namespace dlab
