// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and seeded, so a FAIL line can be
// reproduced by rerunning the binary.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "denoiselab/bounds.hpp"
#include "denoiselab/denoise.hpp"
#include "denoiselab/flow.hpp"
#include "denoiselab/lab.hpp"
#include "denoiselab/metrics.hpp"
#include "denoiselab/rng.hpp"
#include "denoiselab/targets.hpp"

using namespace dlab;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, double seconds) {
  std::printf("%s  %2d  %s  (%.1f s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <typename Fn>
void criterion(int number, const std::string& name, Fn body) {
  auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  try {
    pass = body();
  } catch (const std::exception& e) {
    std::printf("      exception: %s\n", e.what());
    pass = false;
  }
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(number, name, pass, dt);
}

TargetSpec gaussian1d(double tau) {
  TargetSpec s;
  s.variant = Gaussian1D{tau};
  return s;
}

TargetSpec two_gaussians(double sep, double tau) {
  TargetSpec s;
  GaussianMixtureComponent a, b;
  a.weight = 0.5;
  a.mean = Vec::Constant(1, -sep);
  a.tau = tau;
  b.weight = 0.5;
  b.mean = Vec::Constant(1, sep);
  b.tau = tau;
  s.variant = GaussianMixture{{a, b}};
  return s;
}

TargetSpec two_diracs(double mu) {
  TargetSpec s;
  DiracMixture m;
  m.locations.resize(2, 1);
  m.locations(0, 0) = -mu;
  m.locations(1, 0) = mu;
  m.weights = Vec::Constant(2, 0.5);
  s.variant = m;
  return s;
}

std::vector<TargetSpec> all_families() {
  std::vector<TargetSpec> out;
  out.push_back(gaussian1d(1.3));
  TargetSpec s;
  DiagonalGaussian dg;
  dg.taus = Vec(2);
  dg.taus << 0.7, 2.0;
  dg.mean = Vec(2);
  dg.mean << 1.0, -0.5;
  s.variant = dg;
  out.push_back(s);
  s.variant = SubspaceGaussian{3, 1, 1.0};
  out.push_back(s);
  out.push_back(two_diracs(1.0));
  out.push_back(two_gaussians(1.5, 0.8));
  s.variant = BumpDensity1D{};
  out.push_back(s);
  return out;
}

// --- criterion bodies -------------------------------------------------------

bool crossover() {
  double tau = 1.0, cross = std::sqrt(8.0);
  for (double sigma : geometric_grid(0.01, 10.0, 400)) {
    double half = gaussian_w2_alpha(tau, sigma, 0.5);
    double full = gaussian_w2_alpha(tau, sigma, 1.0);
    if (sigma < cross - 1e-6 && !(half < full)) return false;
    if (sigma > cross + 1e-6 && !(half > full)) return false;
  }
  return std::abs(gaussian_w2_alpha(tau, cross, 0.5) -
                  gaussian_w2_alpha(tau, cross, 1.0)) <= 1e-10;
}

bool scaling_laws() {
  SweepConfig cfg;
  cfg.target = gaussian1d(1.0);
  cfg.alphas = {0.0, 0.5, 1.0};
  cfg.sigma_grid = geometric_grid(1e-3, 1e-2, 12);
  cfg.estimator = "closed_form";
  auto closed = run_sweep(cfg);
  // window padded a hair so the grid endpoints survive float rounding
  double lo = 0.999e-3, hi = 1.001e-2;
  if (std::abs(fit_rate(closed, 0.0, lo, hi).slope - 2.0) > 0.02) return false;
  if (std::abs(fit_rate(closed, 1.0, lo, hi).slope - 2.0) > 0.02) return false;
  if (std::abs(fit_rate(closed, 0.5, lo, hi).slope - 4.0) > 0.05) return false;

  cfg.estimator = "mc_coupled_1d";
  cfg.n = 100000;
  cfg.seed = 20;
  auto mc = run_sweep(cfg);
  if (std::abs(fit_rate(mc, 0.0, lo, hi).slope - 2.0) > 0.2) return false;
  if (std::abs(fit_rate(mc, 1.0, lo, hi).slope - 2.0) > 0.2) return false;
  if (std::abs(fit_rate(mc, 0.5, lo, hi).slope - 4.0) > 0.2) return false;
  return true;
}

bool asymptotic_constants() {
  double tau = 1.0, sigma = 1e-3;
  double r1 = gaussian_w2_alpha(tau, sigma, 1.0) / (sigma * sigma / (2.0 * tau));
  double rh = gaussian_w2_alpha(tau, sigma, 0.5) /
              (std::pow(sigma, 4.0) / (8.0 * tau * tau * tau));
  return r1 >= 0.99 && r1 <= 1.01 && rh >= 0.99 && rh <= 1.01;
}

bool order_two_bound_audit() {
  auto grid = geometric_grid(0.05, 1.0, 8);
  std::vector<double> alphas = {0.0, 0.5, 1.0};
  for (const auto& target : {gaussian1d(1.0), two_gaussians(2.0, 1.0)}) {
    auto audit = audit_bounds(target, alphas, grid, 100000, 40);
    for (const auto& row : audit.rows)
      if (row.holds != "true") return false;
  }
  return true;
}

bool order_four_bound_audit() {
  // the two-component mixture is Z + N(0, tau^2) with Z = +-2, so E|Z|^6 = 64
  TargetSpec target = two_gaussians(2.0, 1.0);
  double K = *prop4_prefactor(constants_smoothed(64.0, 1.0, 1));
  SweepConfig cfg;
  cfg.target = target;
  cfg.alphas = {0.5};
  cfg.sigma_grid = {0.02, 0.05, 0.1};
  cfg.estimator = "mc_coupled_1d";
  cfg.n = 1000000;
  cfg.seed = 50;
  auto table = run_sweep(cfg);
  for (const auto& row : table.rows) {
    double bound = K * std::pow(row.sigma, 4.0);
    if (!(row.report.value <= bound + 3.0 * *row.report.std_error)) return false;
  }
  return true;
}

bool subspace_decomposition() {
  int d = 4, m = 2;
  double tau = 1.0;
  long n = 1024;
  const int reps = 32;
  TargetSpec spec;
  spec.variant = SubspaceGaussian{d, m, tau};
  NoisedScoreOracle oracle(spec);

  // finite-sample transport allowance: the empirical W2 between two
  // independent clean samples bounds (via the triangle inequality) how far an
  // n-point empirical distance can sit from its population value
  double allowance = 0.0;
  for (int r = 0; r < 2; ++r) {
    auto a = sample_target(spec, n, 60 + 2 * static_cast<std::uint64_t>(r));
    auto b = sample_target(spec, n, 61 + 2 * static_cast<std::uint64_t>(r));
    allowance = std::max(allowance, empirical_w2_assignment(a, b).value);
  }
  allowance *= 2.0;

  struct Cell {
    double sigma, alpha;
  };
  for (const Cell& cell : {Cell{1.0, 0.5}, Cell{1.0, 1.0}}) {
    double truth_sub = std::sqrt(static_cast<double>(m)) *
                       gaussian_w2_alpha(tau, cell.sigma, cell.alpha);
    double truth = subspace_w2_decomposition(truth_sub, d, m, cell.sigma, cell.alpha);
    double orth_true = (d - m) * (1.0 - cell.alpha) * (1.0 - cell.alpha) * cell.sigma *
                       cell.sigma;
    double full_mean = 0.0, full_m2 = 0.0, orth_mean = 0.0, orth_m2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::uint64_t s = mix_seed(600, static_cast<std::uint64_t>(r));
      auto clean = sample_target(spec, n, mix_seed(s, 1));
      auto noisy = add_noise(clean, cell.sigma, mix_seed(s, 2));
      auto den = denoise_batch(oracle, noisy, cell.sigma, cell.alpha);
      double full = empirical_w2_assignment(clean, den).value;
      double orth = den.data.rightCols(d - m).squaredNorm() / static_cast<double>(n);
      if (r < 4) {
        // the decomposition is an identity at the empirical level: the
        // orthogonal term is coupling-independent, so the full-space optimal
        // cost splits exactly
        SampleBatch a2, d2;
        a2.data = clean.data.leftCols(m);
        d2.data = den.data.leftCols(m);
        double sub = empirical_w2_assignment(a2, d2).value;
        if (std::abs(full * full - (sub * sub + orth)) > 1e-10) return false;
      }
      double delta = full - full_mean;
      full_mean += delta / (r + 1);
      full_m2 += delta * (full - full_mean);
      delta = orth - orth_mean;
      orth_mean += delta / (r + 1);
      orth_m2 += delta * (orth - orth_mean);
    }
    double full_se = std::sqrt(full_m2 / (reps - 1.0) / reps);
    double orth_se = std::sqrt(orth_m2 / (reps - 1.0) / reps);
    if (std::abs(orth_mean - orth_true) > 3.0 * orth_se + 1e-12) return false;
    if (std::abs(full_mean - truth) > 3.0 * full_se + allowance) return false;
  }

  // Fig 3 qualitative claims via the exact composition
  auto total = [](int dd, int mm, double sigma, double alpha) {
    double sub = std::sqrt(static_cast<double>(mm)) * gaussian_w2_alpha(1.0, sigma, alpha);
    return subspace_w2_decomposition(sub, dd, mm, sigma, alpha);
  };
  bool sweet_spot = false;
  for (double sigma : geometric_grid(0.05, 5.0, 60)) {
    if (total(10, 9, sigma, 0.5) < total(10, 9, sigma, 1.0)) sweet_spot = true;
    if (!(total(10, 5, sigma, 1.0) <= total(10, 5, sigma, 0.5) + 1e-12)) return false;
  }
  return sweet_spot;
}

bool quadrature_vs_monte_carlo() {
  double mu = 1.0;
  TargetSpec spec = two_diracs(mu);
  NoisedScoreOracle oracle(spec);
  long n = 1000000;
  for (double ratio : {0.1, 0.3, 1.0, 3.0}) {
    double sigma = mu * ratio;
    for (double alpha : {0.5, 1.0}) {
      // clean batch coupled with the noised one (same atom draws) so the
      // binomial atom-count mismatch cannot swamp the tiny true distance
      auto clean = sample_target(spec, n, 70);
      auto noisy = add_noise(clean, sigma, 71);
      auto den = denoise_batch(oracle, noisy, sigma, alpha);
      auto rep = empirical_wp_1d(clean, den, 2.0, 100, 72);
      double quad = dirac_mixture_w2_quadrature(mu, sigma, alpha);
      // squared-domain comparison with a small absolute floor, since the
      // quadrature value can sit at its 1e-10 tolerance while the coupled
      // Monte Carlo is exactly 0
      double se_sq = 2.0 * rep.value * *rep.std_error;
      if (std::abs(rep.value * rep.value - quad * quad) >
          3.0 * se_sq + 3.0 / static_cast<double>(n))
        return false;
    }
  }
  return true;
}

bool superpolynomial_decay() {
  std::vector<double> grid = {0.10, 0.15, 0.20, 0.25, 0.30};
  auto full = mixture_decay_check(1.0, grid, 1.0);
  auto half = mixture_decay_check(1.0, grid, 0.5);
  return full.superpolynomial && full.slope < 0.0 && !half.superpolynomial;
}

bool flow_identities() {
  // (a) one Euler step of the flow is half-denoising, every family
  for (const auto& spec : all_families()) {
    NoisedScoreOracle oracle(spec);
    double sigma = 0.4;
    auto noisy = add_noise(sample_target(spec, 32, 80), sigma, 81);
    auto flow = pf_ode_integrate(oracle, noisy, sigma * sigma, 0.0, 1, OdeMethod::Euler);
    auto half = denoise_batch(oracle, noisy, sigma, 0.5);
    if ((flow.data - half.data).cwiseAbs().maxCoeff() > 1e-12) return false;
  }

  // (b) Euler equals DDIM state-for-state when sigma(t) = t
  Schedule lin = parse_schedule_config(
      "count = 64\nt_max = 1\nt_min = 0.01\nspacing = geometric\nsigma_fn = linear_t\n");
  NoisedScoreOracle oracle(two_gaussians(1.0, 0.7));
  Vec xe = Vec::Constant(1, 1.1), xd = xe;
  for (int k = 0; k < lin.steps(); ++k) {
    xe = euler_step(oracle, xe, lin, k);
    xd = ddim_step(oracle, xd, 1.0, 1.0, lin.sigma_node(k), lin.sigma_node(k + 1));
    if (std::abs(xe[0] - xd[0]) > 1e-12) return false;
  }

  // (c) implied alpha schedules
  Schedule geo = geometric_schedule(2.0, 0.02, 32);
  auto ddim = extract_alpha_schedule(geo, StepMethod::Ddim);
  if (ddim.back() != 1.0) return false;
  for (double a : extract_alpha_schedule(geo, StepMethod::Euler))
    if (std::abs(a - 0.5) > 1e-14) return false;
  return true;
}

bool tweedie_and_contraction() {
  for (const auto& spec : all_families()) {
    NoisedScoreOracle oracle(spec);
    long n = 100000;
    auto clean = sample_target(spec, n, 90);
    for (double sigma : {0.1, 0.5, 1.0}) {
      auto noisy = add_noise(clean, sigma, 91);
      double s2 = sigma * sigma;
      double mean_d = 0.0, m2_d = 0.0;
      for (long i = 0; i < n; ++i) {
        Vec y = noisy.data.row(i).transpose();
        Vec pm = oracle.posterior_mean(y, s2);
        Vec via_score = y + s2 * oracle.score(y, s2);
        if ((pm - via_score).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + y.norm()))
          return false;
        // paired sample of |E[X|Y]|^2 - |X|^2, whose mean is <= 0 (posterior
        // means contract second moments)
        double v = pm.squaredNorm() - clean.data.row(i).squaredNorm();
        double delta = v - mean_d;
        mean_d += delta / static_cast<double>(i + 1);
        m2_d += delta * (v - mean_d);
      }
      double se = std::sqrt(m2_d / (static_cast<double>(n) - 1.0) / static_cast<double>(n));
      if (!(mean_d <= 3.0 * se)) return false;
    }
  }
  return true;
}

bool score_derivative_audit() {
  // analytic check: for N(0, tau^2) the derivative along the flow is
  // x / (2 (tau^2 + t)^2)
  NoisedScoreOracle gauss(gaussian1d(1.0));
  for (double t : {0.01, 0.1, 1.0}) {
    for (double x0 : {-2.0, 0.5, 1.5}) {
      Vec x = Vec::Constant(1, x0);
      double fd = score_time_derivative_fd(gauss, x, t)[0];
      double exact = x0 / (2.0 * std::pow(1.0 + t, 2.0));
      if (std::abs(fd - exact) > 1e-4 * std::abs(exact)) return false;
    }
  }
  auto report = lemma4_fd_check(two_gaussians(2.0, 1.0), {0.01, 0.1}, 1000, 95);
  for (const auto& row : report.rows) {
    if (row.holds != "true") return false;
    if (!(*row.bound >= 10.0 * row.empirical)) return false;  // >= 10x slack
  }
  return true;
}

}  // namespace

int main() {
  criterion(1, "Gaussian half/full crossover at sigma/tau = sqrt(8)", crossover);
  criterion(2, "sigma^2 and sigma^4 scaling laws (closed form and Monte Carlo)",
            scaling_laws);
  criterion(3, "small-noise asymptotic constants 1/(2 tau) and 1/(8 tau^3)",
            asymptotic_constants);
  criterion(4, "order-sigma^2 W2 bound audit (Gaussian and mixture)",
            order_two_bound_audit);
  criterion(5, "order-sigma^4 half-denoising bound with smoothed constants",
            order_four_bound_audit);
  criterion(6, "exact subspace W2 decomposition and sweet-spot claims",
            subspace_decomposition);
  criterion(7, "two-Dirac quadrature agrees with coupled Monte Carlo",
            quadrature_vs_monte_carlo);
  criterion(8, "super-polynomial decay for full denoising only", superpolynomial_decay);
  criterion(9, "flow / half-denoising / DDIM identities", flow_identities);
  criterion(10, "posterior-mean consistency and contraction on all families",
            tweedie_and_contraction);
  criterion(11, "score time-derivative audit (analytic and mixture bound)",
            score_derivative_audit);
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all 11 criteria passed\n");
  return 0;
}
