#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "denoiselab/bounds.hpp"
#include "denoiselab/metrics.hpp"
#include "denoiselab/targets.hpp"

namespace dlab {

// Geometric grid of `count` points from lo to hi inclusive.
std::vector<double> geometric_grid(double lo, double hi, int count);

struct SweepConfig {
  TargetSpec target;
  std::vector<double> alphas;
  std::vector<double> sigma_grid;  // strictly increasing, positive
  // closed_form (Gaussian1D only), mc_coupled_1d (quantile-coupled Monte
  // Carlo, 1D targets), mc_assignment (exact assignment W2, any dimension,
  // n <= 4096).
  std::string estimator = "closed_form";
  long n = 100000;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct CurveRow {
  std::string target_label;
  double alpha = 0.0;
  double sigma = 0.0;
  DistanceReport report;
};

struct CurveTable {
  std::vector<CurveRow> rows;
};

// One row per (sigma, alpha), sorted by sigma then alpha. Monte Carlo cells
// share random numbers across alpha at fixed sigma, and each sigma cell
// derives its seed from the base seed and the sigma index, so the result is
// bitwise identical for any worker count.
CurveTable run_sweep(const SweepConfig& config);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<std::pair<double, double>> points;  // (log sigma, log distance)
};

// OLS of log distance on log sigma over grid points of the given alpha with
// sigma in [sigma_lo, sigma_hi]; needs >= 4 points, all distances positive.
SlopeFit fit_rate(const CurveTable& curve, double alpha, double sigma_lo,
                  double sigma_hi);

struct AuditRow {
  std::string target_label;
  double sigma = 0.0;
  double alpha = 0.0;
  double empirical = 0.0;
  std::optional<double> empirical_stderr;
  std::optional<double> bound;  // empty when the hypotheses fail
  std::string holds;            // "true" | "false" | "na"
};

struct AuditTable {
  std::vector<AuditRow> rows;
  std::string to_csv() const;  // target,sigma,alpha,empirical,bound,holds
};

// Per (sigma, alpha): Monte Carlo W2 vs the order-sigma^2 bound
// prop3_prefactor(C, alpha) sigma^2, with C from constant_C (inflated by
// 3 stderr when Monte Carlo). Rows are marked "na" when C is infinite.
AuditTable audit_bounds(const TargetSpec& target, const std::vector<double>& alphas,
                        const std::vector<double>& sigma_grid, long n,
                        std::uint64_t seed);

struct DecayRow {
  double sigma = 0.0;
  double w2 = 0.0;
  bool floored = false;  // below the quadrature floor, excluded from the fit
};

struct DecayReport {
  std::vector<DecayRow> rows;
  double slope = 0.0;  // of log W2 against 1 / sigma^2
  bool superpolynomial = false;
  static constexpr double kFloorRel = 1e-13;  // floor at kFloorRel * mu
};

// Prop-6-style decay diagnostic for the two-point mixture at +-mu: fits
// log W2 (from dirac_mixture_w2_quadrature) against 1/sigma^2 and checks
// W2(s1)/W2(s2) < (s1/s2)^6 for every grid pair s1 < s2.
DecayReport mixture_decay_check(double mu, const std::vector<double>& sigma_grid,
                                double alpha = 1.0);

// Central finite difference in t of the noised score along the flow: the
// state is advanced from t to t +- h (h = rel_step * t) by one RK4 step of
// the probability-flow ODE before each score evaluation.
Vec score_time_derivative_fd(const NoisedScoreOracle& oracle, const Vec& x, double t,
                             double rel_step = 1e-4);

struct Lemma4Row {
  double t = 0.0;
  double empirical = 0.0;  // mean squared norm of the finite difference
  double empirical_stderr = 0.0;
  std::optional<double> bound;
  std::string holds;  // "true" | "false" | "na"
};

struct Lemma4Report {
  std::vector<Lemma4Row> rows;
};

// Monte Carlo audit of the mean-square time derivative of the noised score
// against the smoothed-constant bound. The target must be a GaussianMixture
// with a common component stddev (so it is a discrete mixture plus Gaussian
// smoothing and the smoothed constants apply). Needs n >= 100.
Lemma4Report lemma4_fd_check(const TargetSpec& target, const std::vector<double>& t_grid,
                             long n, std::uint64_t seed);

// CSV persistence; header target,alpha,sigma,method,value,stderr,n; values
// round-trip at 17 significant digits. Writes are atomic (temp + rename).
void persist_curves(const CurveTable& table, const std::string& path);
CurveTable load_curves(const std::string& path);

}  // namespace dlab
