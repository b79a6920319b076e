#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "denoiselab/denoise.hpp"
#include "denoiselab/metrics.hpp"
#include "denoiselab/rng.hpp"

using namespace dlab;

namespace {

TargetSpec gaussian1d(double tau) {
  TargetSpec s;
  s.variant = Gaussian1D{tau};
  return s;
}

Vec v1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

}  // namespace

TEST_CASE("denoise_point closed forms") {
  NoisedScoreOracle g(gaussian1d(1.0));
  CHECK(denoise_point(g, v1(2.0), 1.0, 0.0)[0] == 2.0);
  CHECK(denoise_point(g, v1(2.0), 1.0, 1.0)[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(denoise_point(g, v1(2.0), 1.0, 0.5)[0] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("alpha = 1 equals the posterior mean") {
  TargetSpec gm;
  GaussianMixtureComponent a, b;
  a.weight = 0.3;
  a.mean = v1(-2.0);
  a.tau = 0.5;
  b.weight = 0.7;
  b.mean = v1(1.0);
  b.tau = 1.5;
  gm.variant = GaussianMixture{{a, b}};
  NoisedScoreOracle oracle(gm);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    double y = rng.uniform(-4.0, 4.0);
    double sigma = rng.uniform(0.1, 2.0);
    double full = denoise_point(oracle, v1(y), sigma, 1.0)[0];
    double pm = oracle.posterior_mean(v1(y), sigma * sigma)[0];
    CHECK(std::abs(full - pm) <= 1e-12 * (1.0 + std::abs(y)));
  }
}

TEST_CASE("denoising is affine in alpha") {
  NoisedScoreOracle g(gaussian1d(0.8));
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    double y = rng.uniform(-3.0, 3.0);
    double sigma = rng.uniform(0.05, 1.5);
    double half = denoise_point(g, v1(y), sigma, 0.5)[0];
    double mid = 0.5 * (denoise_point(g, v1(y), sigma, 0.0)[0] +
                        denoise_point(g, v1(y), sigma, 1.0)[0]);
    CHECK(std::abs(half - mid) <= 1e-12 * (1.0 + std::abs(y)));
  }
}

TEST_CASE("denoise_batch applies rowwise, pure, and handles Diracs") {
  TargetSpec dirac;
  DiracMixture m;
  m.locations = Mat::Zero(1, 2);
  m.weights = Vec::Ones(1);
  dirac.variant = m;
  NoisedScoreOracle oracle(dirac);
  SampleBatch noisy;
  noisy.data.resize(8, 2);
  Rng rng(7);
  for (long i = 0; i < 8; ++i)
    for (long j = 0; j < 2; ++j) noisy.data(i, j) = rng.normal();
  auto out1 = denoise_batch(oracle, noisy, 0.7, 1.0);
  auto out2 = denoise_batch(oracle, noisy, 0.7, 1.0);
  CHECK(out1.data == out2.data);
  CHECK(out1.data.cwiseAbs().maxCoeff() <= 1e-12);
  auto ident = denoise_batch(oracle, noisy, 0.7, 0.0);
  CHECK(ident.data == noisy.data);
}

TEST_CASE("full denoising projects subspace targets onto the subspace") {
  TargetSpec sub;
  sub.variant = SubspaceGaussian{6, 2, 1.0};
  NoisedScoreOracle oracle(sub);
  SampleBatch clean = sample_target(sub, 200, 17);
  SampleBatch noisy = add_noise(clean, 0.5, 18);
  SampleBatch den = denoise_batch(oracle, noisy, 0.5, 1.0);
  for (long j = 2; j < 6; ++j)
    CHECK(den.data.col(j).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("optimal alpha closed form") {
  CHECK(optimal_alpha_gaussian(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(optimal_alpha_gaussian(1.0, 1e-3) - 0.5) < 1e-5);
  CHECK(optimal_alpha_gaussian(1.0, 1.0) ==
        doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-13));
  CHECK_THROWS_AS(optimal_alpha_gaussian(-1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(optimal_alpha_gaussian(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("optimal alpha matches golden-section minimization") {
  for (double tau : {0.3, 1.0, 4.0}) {
    for (double sigma : {0.1, 1.0, 3.0}) {
      double lo = -0.5, hi = 1.5;
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int it = 0; it < 200; ++it) {
        double a = hi - gr * (hi - lo);
        double b = lo + gr * (hi - lo);
        if (gaussian_w2_alpha(tau, sigma, a) < gaussian_w2_alpha(tau, sigma, b))
          hi = b;
        else
          lo = a;
      }
      double numeric = 0.5 * (lo + hi);
      CHECK(optimal_alpha_gaussian(tau, sigma) ==
            doctest::Approx(numeric).epsilon(1e-7));
    }
  }
}

TEST_CASE("optimal alpha beats half and full denoising") {
  for (double tau = 0.1; tau <= 10.0; tau *= 2.1539) {
    for (double sigma = 0.1; sigma <= 10.0; sigma *= 2.1539) {
      double star = optimal_alpha_gaussian(tau, sigma);
      double best = gaussian_w2_alpha(tau, sigma, star);
      CHECK(best <= gaussian_w2_alpha(tau, sigma, 0.5) + 1e-12);
      CHECK(best <= gaussian_w2_alpha(tau, sigma, 1.0) + 1e-12);
    }
  }
}

TEST_CASE("denoise rejects bad arguments") {
  NoisedScoreOracle g(gaussian1d(1.0));
  CHECK_THROWS_AS(denoise_point(g, v1(0.0), 0.0, 0.5), std::invalid_argument);
  SampleBatch wrong;
  wrong.data = Mat::Zero(3, 2);
  CHECK_THROWS_AS(denoise_batch(g, wrong, 1.0, 0.5), std::invalid_argument);
}
