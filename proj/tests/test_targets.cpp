#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "denoiselab/quadrature.hpp"
#include "denoiselab/rng.hpp"
#include "denoiselab/targets.hpp"

using namespace dlab;

namespace {

TargetSpec gaussian1d(double tau) {
  TargetSpec s;
  s.variant = Gaussian1D{tau};
  return s;
}

TargetSpec two_diracs(double mu) {
  TargetSpec s;
  DiracMixture m;
  m.locations.resize(2, 1);
  m.locations << -mu, mu;
  m.weights.resize(2);
  m.weights << 0.5, 0.5;
  s.variant = m;
  return s;
}

TargetSpec two_gaussians(double sep, double tau) {
  TargetSpec s;
  GaussianMixture m;
  GaussianMixtureComponent a, b;
  a.weight = b.weight = 0.5;
  a.mean.resize(1);
  a.mean << -sep;
  b.mean.resize(1);
  b.mean << sep;
  a.tau = b.tau = tau;
  m.components = {a, b};
  s.variant = m;
  return s;
}

TargetSpec bump() {
  TargetSpec s;
  s.variant = BumpDensity1D{};
  return s;
}

TargetSpec subspace(int d, int m, double tau) {
  TargetSpec s;
  s.variant = SubspaceGaussian{d, m, tau};
  return s;
}

Vec v1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

}  // namespace

TEST_CASE("gaussian sampler matches declared moments") {
  auto batch = sample_target(gaussian1d(1.0), 1000000, 7);
  double mean = batch.data.col(0).mean();
  double var = (batch.data.col(0).array() - mean).square().mean();
  CHECK(std::abs(mean) < 4.0 / 1000.0);
  CHECK(var == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("dirac sampler only emits the atoms") {
  auto batch = sample_target(two_diracs(1.0), 4, 1);
  for (long i = 0; i < batch.n(); ++i)
    CHECK((batch.data(i, 0) == -1.0 || batch.data(i, 0) == 1.0));
}

TEST_CASE("subspace sampler zeroes the orthogonal block") {
  auto batch = sample_target(subspace(10, 5, 1.0), 100, 3);
  for (long j = 5; j < 10; ++j) CHECK(batch.data.col(j).cwiseAbs().maxCoeff() == 0.0);
  CHECK(batch.data.col(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sampling and noising are deterministic in the seed") {
  auto a = sample_target(two_gaussians(2.0, 1.0), 64, 11);
  auto b = sample_target(two_gaussians(2.0, 1.0), 64, 11);
  CHECK(a.data == b.data);
  auto na = add_noise(a, 0.7, 5);
  auto nb = add_noise(b, 0.7, 5);
  CHECK(na.data == nb.data);
  CHECK(na.data != a.data);
}

TEST_CASE("add_noise variance on a zero batch") {
  SampleBatch zero;
  zero.data = Mat::Zero(1000000, 1);
  auto noised = add_noise(zero, 2.0, 5);
  double var = noised.data.col(0).array().square().mean();
  CHECK(var == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("add_noise is centered") {
  SampleBatch zero;
  zero.data = Mat::Zero(1000000, 3);
  auto noised = add_noise(zero, 1.0, 9);
  Vec mean = noised.data.colwise().mean().transpose();
  CHECK(mean.norm() <= 4.0 * std::sqrt(3.0 / 1000000.0));
}

TEST_CASE("noised score closed forms") {
  NoisedScoreOracle g(gaussian1d(1.0));
  CHECK(g.score(v1(1.0), 1.0)[0] == doctest::Approx(-0.5).epsilon(1e-14));

  NoisedScoreOracle d(two_diracs(1.0));
  CHECK(d.score(v1(0.0), 0.5)[0] == doctest::Approx(0.0).epsilon(1e-14));
  // Two-atom closed form (1/s2)(-y + mu tanh(y mu / s2)), kept as an
  // independent oracle of the general softmax path.
  double s2 = 0.25, y = 0.5;
  double expected = (-y + std::tanh(y / s2)) / s2;
  CHECK(d.score(v1(y), s2)[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("posterior mean closed forms") {
  NoisedScoreOracle g(gaussian1d(1.0));
  CHECK(g.posterior_mean(v1(2.0), 1.0)[0] == doctest::Approx(1.0).epsilon(1e-14));

  NoisedScoreOracle d(two_diracs(1.0));
  CHECK(d.posterior_mean(v1(0.0), 0.3)[0] == doctest::Approx(0.0).epsilon(1e-14));

  TargetSpec single;
  GaussianMixtureComponent c;
  c.weight = 1.0;
  c.mean = Vec::Zero(1);
  c.tau = 2.0;
  single.variant = GaussianMixture{{c}};
  NoisedScoreOracle gm(single);
  CHECK(gm.posterior_mean(v1(5.0), 1.0)[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("Tweedie identity across families") {
  std::vector<TargetSpec> specs = {gaussian1d(1.3), two_diracs(1.0),
                                   two_gaussians(2.0, 0.7), subspace(4, 2, 1.0)};
  {
    TargetSpec diag;
    DiagonalGaussian dg;
    dg.taus.resize(3);
    dg.taus << 0.5, 1.0, 2.0;
    dg.mean.resize(3);
    dg.mean << -1.0, 0.0, 1.0;
    diag.variant = dg;
    specs.push_back(diag);
  }
  specs.push_back(bump());
  Rng rng(42);
  for (const auto& spec : specs) {
    NoisedScoreOracle oracle(spec);
    int probes = std::holds_alternative<BumpDensity1D>(spec.variant) ? 50 : 400;
    for (int i = 0; i < probes; ++i) {
      double sigma2 = std::exp(rng.uniform(std::log(0.01), std::log(4.0)));
      Vec y(spec.dim());
      for (long j = 0; j < y.size(); ++j) y[j] = 3.0 * rng.normal();
      Vec pm = oracle.posterior_mean(y, sigma2);
      Vec via_score = y + sigma2 * oracle.score(y, sigma2);
      CHECK((pm - via_score).norm() <= 1e-12 * (1.0 + y.norm()));
    }
  }
}

TEST_CASE("noised score matches finite differences of the log density") {
  std::vector<std::pair<TargetSpec, double>> cases = {
      {gaussian1d(1.0), 1e-6},
      {two_gaussians(2.0, 1.0), 1e-6},
      {two_diracs(1.0), 1e-6},
      {bump(), 1e-4}};
  Rng rng(5);
  const double h = 1e-5;
  for (const auto& [spec, tol] : cases) {
    NoisedScoreOracle oracle(spec);
    for (int i = 0; i < 15; ++i) {
      double sigma2 = rng.uniform(0.05, 1.0);
      double y = rng.uniform(-2.5, 2.5);
      double fd = (oracle.log_density(v1(y + h), sigma2) -
                   oracle.log_density(v1(y - h), sigma2)) /
                  (2.0 * h);
      double s = oracle.score(v1(y), sigma2)[0];
      CHECK(std::abs(fd - s) <= tol * (1.0 + std::abs(s)));
    }
  }
}

TEST_CASE("single-component mixture reproduces the Gaussian score exactly") {
  TargetSpec single;
  GaussianMixtureComponent c;
  c.weight = 1.0;
  c.mean = Vec::Zero(1);
  c.tau = 1.4;
  single.variant = GaussianMixture{{c}};
  NoisedScoreOracle mix(single);
  NoisedScoreOracle ref(gaussian1d(1.4));
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    double y = rng.uniform(-4.0, 4.0);
    double s2 = rng.uniform(0.01, 2.0);
    CHECK(mix.score(v1(y), s2)[0] ==
          doctest::Approx(ref.score(v1(y), s2)[0]).epsilon(1e-13));
  }
}

TEST_CASE("noising does not increase the mean-square score (mixture)") {
  TargetSpec spec = two_gaussians(2.0, 1.0);
  NoisedScoreOracle oracle(spec);
  const long n = 20000;
  SampleBatch clean = sample_target(spec, n, 21);
  double clean_ms = 0.0;
  for (long i = 0; i < n; ++i)
    clean_ms += score_of_clean_density(spec, clean.data.row(i).transpose()).squaredNorm();
  clean_ms /= static_cast<double>(n);
  for (double sigma : {0.1, 0.5, 1.0}) {
    SampleBatch noisy = add_noise(clean, sigma, 22);
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < n; ++i) {
      double v = oracle.score(noisy.data.row(i).transpose(), sigma * sigma).squaredNorm();
      double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    double se = std::sqrt(m2 / (n - 1.0) / n);
    CHECK(mean <= clean_ms + 3.0 * se);
  }
}

TEST_CASE("mixture scores stay finite deep in the tails") {
  NoisedScoreOracle d(two_diracs(1.0));
  // |y - x|^2 / sigma^2 about 1e6: naive softmax would overflow.
  double s2 = 1e-6;
  double s = d.score(v1(2.0), s2)[0];
  CHECK(std::isfinite(s));
  CHECK(s == doctest::Approx((1.0 - 2.0) / s2).epsilon(1e-9));
  NoisedScoreOracle g(two_gaussians(2.0, 1.0));
  CHECK(std::isfinite(g.score(v1(1000.0), 0.01)[0]));
}

TEST_CASE("clean-density score closed forms") {
  CHECK(score_of_clean_density(bump(), v1(0.0))[0] == 0.0);
  CHECK(score_of_clean_density(gaussian1d(2.0), v1(3.0))[0] ==
        doctest::Approx(-0.75).epsilon(1e-14));
  CHECK(score_of_clean_density(bump(), v1(0.5))[0] ==
        doctest::Approx(-16.0 / 9.0).epsilon(1e-13));
  CHECK_THROWS_AS(score_of_clean_density(two_diracs(1.0), v1(0.0)), std::domain_error);
  CHECK_THROWS_AS(score_of_clean_density(bump(), v1(1.0)), std::domain_error);
}

TEST_CASE("bump log-density derivatives match finite differences") {
  TargetSpec b = bump();
  auto score1 = [&](double x) { return score_of_clean_density(b, v1(x))[0]; };
  const double h = 1e-6;
  for (double x : {-0.7, -0.2, 0.0, 0.3, 0.8}) {
    double fd2 = (score1(x + h) - score1(x - h)) / (2.0 * h);
    CHECK(clean_log_density_hessian_1d(b, x) ==
          doctest::Approx(fd2).epsilon(1e-6));
    double fd3 = (clean_log_density_hessian_1d(b, x + h) -
                  clean_log_density_hessian_1d(b, x - h)) /
                 (2.0 * h);
    CHECK(clean_log_density_third_derivative_1d(b, x) ==
          doctest::Approx(fd3).epsilon(1e-5));
  }
  CHECK(clean_log_density_hessian_1d(gaussian1d(2.0), 0.3) ==
        doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(clean_log_density_third_derivative_1d(gaussian1d(2.0), 0.3) == 0.0);
}

TEST_CASE("bump density normalizes and the sampler matches it") {
  double mass = integrate_adaptive_simpson([](double x) { return bump_density(x); },
                                           -1.0, 1.0, 1e-12, 64);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  auto batch = sample_target(bump(), 200000, 13);
  CHECK(batch.data.col(0).cwiseAbs().maxCoeff() < 1.0);
  CHECK(std::abs(batch.data.col(0).mean()) < 0.005);
  // Compare the sample second moment against quadrature.
  double m2 = integrate_adaptive_simpson(
      [](double x) { return x * x * bump_density(x); }, -1.0, 1.0, 1e-12, 64);
  double sm2 = batch.data.col(0).array().square().mean();
  CHECK(sm2 == doctest::Approx(m2).epsilon(0.02));
}

TEST_CASE("target config round trips") {
  std::vector<TargetSpec> specs = {gaussian1d(1.5), two_diracs(2.0),
                                   two_gaussians(2.0, 0.5), subspace(10, 5, 1.0),
                                   bump()};
  for (const auto& spec : specs) {
    TargetSpec back = parse_target_config(format_target_config(spec));
    CHECK(back.label() == spec.label());
    CHECK(back.dim() == spec.dim());
    CHECK(format_target_config(back) == format_target_config(spec));
  }
}

TEST_CASE("target config parsing accepts comments and rejects junk") {
  TargetSpec s = parse_target_config("# comment\ntarget = gaussian1d\ntau = 2 # inline\n");
  CHECK(std::get<Gaussian1D>(s.variant).tau == 2.0);
  CHECK_THROWS_AS(parse_target_config("tau = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_target_config("target = nope\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_target_config("target = gaussian1d\ntau = -1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_target_config("target = gaussian1d\ntau = 1x\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      parse_target_config("target = dirac_mixture\nlocations = 1 ; 1\nweights = 0.5, 0.5\n"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_target_config("target = dirac_mixture\nlocations = 0 ; 1\nweights = 0.5, 0.6\n"),
      std::invalid_argument);
}

TEST_CASE("validation rejects malformed targets") {
  TargetSpec s;
  s.variant = Gaussian1D{0.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.variant = SubspaceGaussian{3, 4, 1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  DiagonalGaussian dg;
  dg.taus = Vec::Ones(2);
  dg.mean = Vec::Zero(3);
  s.variant = dg;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("normal cdf and quantile invert each other") {
  for (double u : {1e-12, 1e-6, 0.02, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9}) {
    double x = inverse_normal_cdf(u);
    CHECK(normal_cdf(x) == doctest::Approx(u).epsilon(1e-12));
  }
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), std::invalid_argument);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), std::invalid_argument);
}

TEST_CASE("clean and noised quantiles invert the corresponding CDFs") {
  TargetSpec gm = two_gaussians(2.0, 0.7);
  for (double u : {0.01, 0.2, 0.5, 0.8, 0.99}) {
    double x = clean_quantile(gm, u);
    // Clean CDF evaluated directly from the mixture components.
    double cdf = 0.0;
    for (const auto& c : std::get<GaussianMixture>(gm.variant).components)
      cdf += c.weight * normal_cdf((x - c.mean[0]) / c.tau);
    CHECK(cdf == doctest::Approx(u).epsilon(1e-10));

    double y = noised_quantile(gm, u, 0.5);
    CHECK(noised_cdf(gm, y, 0.5) == doctest::Approx(u).epsilon(1e-10));
  }
  TargetSpec dm = two_diracs(1.0);
  CHECK(clean_quantile(dm, 0.25) == -1.0);
  CHECK(clean_quantile(dm, 0.75) == 1.0);
  double y = noised_quantile(dm, 0.37, 0.3);
  CHECK(noised_cdf(dm, y, 0.3) == doctest::Approx(0.37).epsilon(1e-10));
  TargetSpec g = gaussian1d(1.2);
  CHECK(clean_quantile(g, 0.9) == doctest::Approx(1.2 * inverse_normal_cdf(0.9)));
  CHECK(noised_quantile(g, 0.9, 0.5) ==
        doctest::Approx(std::sqrt(1.44 + 0.25) * inverse_normal_cdf(0.9)));
  CHECK_THROWS_AS(clean_quantile(bump(), 0.5), std::domain_error);
}

TEST_CASE("oracle rejects malformed queries") {
  NoisedScoreOracle g(gaussian1d(1.0));
  Vec bad(2);
  bad << 0.0, 0.0;
  CHECK_THROWS_AS(g.score(bad, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(g.score(v1(0.0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(g.score(v1(0.0), -1.0), std::invalid_argument);
}
