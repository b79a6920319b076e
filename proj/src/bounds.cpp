#include "denoiselab/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace dlab {

ConstantEstimate constant_C(const TargetSpec& spec, long n, std::uint64_t seed) {
  spec.validate();
  ConstantEstimate out;
  if (std::holds_alternative<DiracMixture>(spec.variant)) return out;  // infinite
  if (const auto* g = std::get_if<Gaussian1D>(&spec.variant)) {
    out.value = 1.0 / (g->tau * g->tau);
    return out;
  }
  if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant)) {
    double c = 0.0;
    for (long i = 0; i < g->taus.size(); ++i) c += 1.0 / (g->taus[i] * g->taus[i]);
    out.value = c;
    return out;
  }
  if (const auto* g = std::get_if<SubspaceGaussian>(&spec.variant)) {
    if (g->intrinsic_dim < g->ambient_dim) return out;  // no ambient density
    out.value = g->ambient_dim / (g->tau * g->tau);
    return out;
  }
  // GaussianMixture / BumpDensity1D: Monte Carlo over target draws.
  if (n < 2) throw std::invalid_argument("constant_C: need n >= 2 for Monte Carlo");
  SampleBatch x = sample_target(spec, n, seed);
  double mean = 0.0, m2 = 0.0;
  for (long i = 0; i < n; ++i) {
    double v = score_of_clean_density(spec, x.data.row(i).transpose()).squaredNorm();
    double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  out.value = mean;
  out.std_error = std::sqrt(m2 / (static_cast<double>(n) - 1.0) / static_cast<double>(n));
  return out;
}

BoundConstants constants_smoothed(double inner_moment6, double tau, int d) {
  if (!(tau > 0.0) || !(inner_moment6 >= 0.0) || d < 1)
    throw std::invalid_argument("constants_smoothed: need tau > 0, moment >= 0, d >= 1");
  double t6 = std::pow(tau, 6.0);
  double t12 = t6 * t6;
  BoundConstants k;
  k.d = d;
  k.C1 = 243.0 / t12 * (2.0 * inner_moment6 + 15.0 * d * t6);
  k.C2 = 9.0 * (1.0 / t6 + 2.0 * inner_moment6 / t12);
  k.C3 = 40.0 * inner_moment6 / t12;
  return k;
}

double prop3_prefactor(double C, double alpha) {
  if (!(C >= 0.0)) throw std::invalid_argument("prop3_prefactor: need C >= 0");
  return std::sqrt((1.0 + 4.0 * alpha * alpha) * C / 2.0);
}

namespace {

std::optional<double> lemma4_bracket(const BoundConstants& k) {
  if (!k.C1 || !k.C2 || !k.C3) return std::nullopt;
  double d2 = static_cast<double>(k.d) * k.d;
  return 4.0 * *k.C1 + (2.0 * d2 + 5.0) * std::cbrt(*k.C1) * std::pow(*k.C2, 2.0 / 3.0) +
         *k.C3;
}

}  // namespace

std::optional<double> lemma4_constant(const BoundConstants& k) {
  auto b = lemma4_bracket(k);
  if (!b) return std::nullopt;
  return 9.0 / 4.0 * *b;
}

std::optional<double> prop4_prefactor(const BoundConstants& k) {
  auto b = lemma4_bracket(k);
  if (!b) return std::nullopt;
  return std::sqrt(3.0) / 4.0 * std::sqrt(*b);
}

std::pair<double, double> cor2_prefactors(double C, double alpha,
                                          const KernelSpec& kernel, int d) {
  if (!(C >= 0.0)) throw std::invalid_argument("cor2_prefactors: need C >= 0");
  double c2 = kernel.c2(d), c4 = kernel.c4(d), c8 = kernel.c8(d);
  double k1 = std::sqrt(4.0 * alpha * alpha * C * c2 + c4) / std::sqrt(2.0);
  double k2 = std::sqrt(C * C * c4 + c8) / (4.0 * std::sqrt(2.0));
  return {k1, k2};
}

std::pair<std::optional<double>, std::optional<double>> prop_p_prefactors(
    std::optional<double> C, double alpha, double p, const BoundConstants& k) {
  if (!(p >= 1.0)) throw std::invalid_argument("prop_p_prefactors: need p >= 1");
  std::optional<double> wp;
  if (C) wp = std::pow((1.0 + std::pow(2.0 * std::abs(alpha), p)) * *C / 2.0, 1.0 / p);
  std::optional<double> wp_half;
  if (auto b = lemma4_bracket(k))
    wp_half = std::pow(9.0, (p - 1.0) / p) / (4.0 * std::pow(p + 1.0, 1.0 / p)) *
              std::pow(*b, 1.0 / p);
  return {wp, wp_half};
}

double subspace_w2_decomposition(double w2_on_subspace, int d, int m, double sigma,
                                 double alpha) {
  if (m < 1 || m > d)
    throw std::invalid_argument("subspace_w2_decomposition: need 1 <= m <= d");
  if (!(sigma > 0.0) || !(w2_on_subspace >= 0.0))
    throw std::invalid_argument("subspace_w2_decomposition: need sigma > 0, w2 >= 0");
  double orth = (d - m) * (1.0 - alpha) * (1.0 - alpha) * sigma * sigma;
  return std::sqrt(w2_on_subspace * w2_on_subspace + orth);
}

}  // namespace dlab
