#include "denoiselab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>

#include "denoiselab/assignment.hpp"
#include "denoiselab/denoise.hpp"
#include "denoiselab/quadrature.hpp"
#include "denoiselab/rng.hpp"
#include "denoiselab/targets.hpp"

namespace dlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> sorted_column(const SampleBatch& b) {
  std::vector<double> v(b.data.col(0).data(), b.data.col(0).data() + b.n());
  std::sort(v.begin(), v.end());
  return v;
}

// Half-spread of the central 68% of the bootstrap distribution.
double percentile_stderr(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    double pos = q * (static_cast<double>(values.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  return 0.5 * (at(0.84) - at(0.16));
}

}  // namespace

std::string DistanceReport::csv_row() const {
  char buf[160];
  if (std_error)
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%ld", method.c_str(), value,
                  *std_error, n);
  else
    std::snprintf(buf, sizeof(buf), "%s,%.17g,,%ld", method.c_str(), value, n);
  return buf;
}

double KernelSpec::c2(int d) const {
  double l2 = bandwidth * bandwidth;
  return d / l2;
}

double KernelSpec::c4(int d) const {
  double l2 = bandwidth * bandwidth;
  return static_cast<double>(d) * (d + 2) / (l2 * l2);
}

double KernelSpec::c8(int d) const {
  double l2 = bandwidth * bandwidth;
  double l8 = l2 * l2 * l2 * l2;
  return static_cast<double>(d) * (d + 2) * (d + 4) * (d + 6) / l8;
}

double gaussian_w2_alpha(double tau, double sigma, double alpha) {
  if (!(tau >= 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("gaussian_w2_alpha: need tau >= 0 and sigma > 0");
  double s2 = sigma * sigma;
  double t2 = tau * tau;
  // |tau - (tau^2 + (1-alpha) sigma^2) / r| with r = sqrt(tau^2 + sigma^2),
  // rewritten as sigma^2 |(alpha - 1/2) - sigma^2 / (2 (r+tau)^2)| / r so the
  // small-sigma regime (where the direct form cancels to noise) stays exact.
  double r = std::sqrt(t2 + s2);
  double rt = r + tau;
  return s2 * std::abs((alpha - 0.5) - s2 / (2.0 * rt * rt)) / r;
}

double gaussian_w2_closed(double mu1, double s1, double mu2, double s2) {
  if (!(s1 >= 0.0) || !(s2 >= 0.0))
    throw std::invalid_argument("gaussian_w2_closed: stddevs must be >= 0");
  return std::hypot(mu1 - mu2, s1 - s2);
}

DistanceReport empirical_wp_1d(const SampleBatch& a, const SampleBatch& b, double p,
                               int bootstrap_resamples, std::uint64_t bootstrap_seed) {
  a.validate();
  b.validate();
  if (a.dim() != 1 || b.dim() != 1)
    throw std::invalid_argument("empirical_wp_1d: batches must be one-dimensional");
  if (a.n() != b.n())
    throw std::invalid_argument("empirical_wp_1d: batches must have equal n");
  if (!(p >= 1.0)) throw std::invalid_argument("empirical_wp_1d: need p >= 1");

  auto xs = sorted_column(a);
  auto ys = sorted_column(b);
  long n = a.n();
  std::vector<double> costs(static_cast<std::size_t>(n));
  double mean = 0.0;
  for (long i = 0; i < n; ++i) {
    double c = std::pow(std::abs(xs[static_cast<std::size_t>(i)] -
                                 ys[static_cast<std::size_t>(i)]),
                        p);
    costs[static_cast<std::size_t>(i)] = c;
    mean += c;
  }
  mean /= static_cast<double>(n);

  DistanceReport rep;
  rep.method = "empirical_1d_sorted";
  rep.value = std::pow(mean, 1.0 / p);
  rep.n = n;

  if (bootstrap_resamples > 0) {
    std::vector<double> boot(static_cast<std::size_t>(bootstrap_resamples));
    for (int r = 0; r < bootstrap_resamples; ++r) {
      Rng rng(mix_seed(bootstrap_seed, static_cast<std::uint64_t>(r) + 1));
      double m = 0.0;
      for (long i = 0; i < n; ++i) m += costs[rng.index(static_cast<std::size_t>(n))];
      boot[static_cast<std::size_t>(r)] = std::pow(m / static_cast<double>(n), 1.0 / p);
    }
    rep.std_error = percentile_stderr(std::move(boot));
  }
  return rep;
}

DistanceReport empirical_w2_assignment(const SampleBatch& a, const SampleBatch& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim())
    throw std::invalid_argument("empirical_w2_assignment: dimension mismatch");
  if (a.n() != b.n())
    throw std::invalid_argument("empirical_w2_assignment: batches must have equal n");
  if (a.n() > 4096)
    throw std::invalid_argument("empirical_w2_assignment: n capped at 4096");
  long n = a.n();
  Mat cost(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      cost(i, j) = (a.data.row(i) - b.data.row(j)).squaredNorm();
  double total = solve_assignment_min_cost(cost);
  DistanceReport rep;
  rep.method = "empirical_assignment";
  rep.value = std::sqrt(std::max(0.0, total / static_cast<double>(n)));
  rep.n = n;
  return rep;
}

DistanceReport mmd_ustat(const SampleBatch& a, const SampleBatch& b,
                         const KernelSpec& kernel, int bootstrap_resamples,
                         std::uint64_t bootstrap_seed) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) throw std::invalid_argument("mmd_ustat: dimension mismatch");
  if (a.n() < 2 || b.n() < 2)
    throw std::invalid_argument("mmd_ustat: need at least 2 samples per batch");
  if (!(kernel.bandwidth > 0.0))
    throw std::invalid_argument("mmd_ustat: bandwidth must be positive");

  const long m = a.n(), n = b.n();
  const double inv2l2 = 1.0 / (2.0 * kernel.bandwidth * kernel.bandwidth);
  auto gram = [&](const Mat& x, const Mat& y) {
    Mat g(x.rows(), y.rows());
    for (long i = 0; i < x.rows(); ++i)
      for (long j = 0; j < y.rows(); ++j)
        g(i, j) = std::exp(-(x.row(i) - y.row(j)).squaredNorm() * inv2l2);
    return g;
  };
  Mat kaa = gram(a.data, a.data);
  Mat kbb = gram(b.data, b.data);
  Mat kab = gram(a.data, b.data);

  auto mmd2_on = [&](const std::vector<long>& ia, const std::vector<long>& ib) {
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    long ma = static_cast<long>(ia.size()), nb = static_cast<long>(ib.size());
    for (long i = 0; i < ma; ++i)
      for (long j = 0; j < ma; ++j)
        if (i != j) saa += kaa(ia[static_cast<std::size_t>(i)], ia[static_cast<std::size_t>(j)]);
    for (long i = 0; i < nb; ++i)
      for (long j = 0; j < nb; ++j)
        if (i != j) sbb += kbb(ib[static_cast<std::size_t>(i)], ib[static_cast<std::size_t>(j)]);
    for (long i = 0; i < ma; ++i)
      for (long j = 0; j < nb; ++j)
        sab += kab(ia[static_cast<std::size_t>(i)], ib[static_cast<std::size_t>(j)]);
    return saa / (static_cast<double>(ma) * (ma - 1)) +
           sbb / (static_cast<double>(nb) * (nb - 1)) -
           2.0 * sab / (static_cast<double>(ma) * nb);
  };

  std::vector<long> ia(static_cast<std::size_t>(m)), ib(static_cast<std::size_t>(n));
  for (long i = 0; i < m; ++i) ia[static_cast<std::size_t>(i)] = i;
  for (long i = 0; i < n; ++i) ib[static_cast<std::size_t>(i)] = i;

  DistanceReport rep;
  rep.method = "mmd_ustat";
  rep.value = std::sqrt(std::max(0.0, mmd2_on(ia, ib)));
  rep.n = std::min(m, n);

  if (bootstrap_resamples > 0) {
    std::vector<double> boot(static_cast<std::size_t>(bootstrap_resamples));
    for (int r = 0; r < bootstrap_resamples; ++r) {
      Rng rng(mix_seed(bootstrap_seed, static_cast<std::uint64_t>(r) + 1));
      std::vector<long> ra(static_cast<std::size_t>(m)), rb(static_cast<std::size_t>(n));
      for (long i = 0; i < m; ++i)
        ra[static_cast<std::size_t>(i)] =
            static_cast<long>(rng.index(static_cast<std::size_t>(m)));
      for (long i = 0; i < n; ++i)
        rb[static_cast<std::size_t>(i)] =
            static_cast<long>(rng.index(static_cast<std::size_t>(n)));
      boot[static_cast<std::size_t>(r)] = std::sqrt(std::max(0.0, mmd2_on(ra, rb)));
    }
    rep.std_error = percentile_stderr(std::move(boot));
  }
  return rep;
}

double charfn_distance_gaussian(double tau, double sigma, double alpha, double xi) {
  if (!(tau >= 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("charfn_distance_gaussian: need tau >= 0, sigma > 0");
  double s2 = sigma * sigma;
  double t2 = tau * tau;
  // phi_alpha(Y) is the centered Gaussian with stddev
  // (tau^2 + (1-alpha) sigma^2) / sqrt(tau^2 + sigma^2).
  double sd = (t2 + (1.0 - alpha) * s2) / std::sqrt(t2 + s2);
  double x2 = xi * xi;
  return std::abs(std::exp(-0.5 * t2 * x2) - std::exp(-0.5 * sd * sd * x2));
}

std::vector<double> charfn_distance_empirical(const SampleBatch& a,
                                              const SampleBatch& b, const Mat& xis) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim())
    throw std::invalid_argument("charfn_distance_empirical: dimension mismatch");
  if (xis.rows() < 1 || xis.cols() != a.dim())
    throw std::invalid_argument("charfn_distance_empirical: bad frequency grid");
  std::vector<double> out(static_cast<std::size_t>(xis.rows()));
  for (long k = 0; k < xis.rows(); ++k) {
    std::complex<double> ca(0.0, 0.0), cb(0.0, 0.0);
    for (long i = 0; i < a.n(); ++i) {
      double t = xis.row(k).dot(a.data.row(i));
      ca += std::complex<double>(std::cos(t), std::sin(t));
    }
    for (long i = 0; i < b.n(); ++i) {
      double t = xis.row(k).dot(b.data.row(i));
      cb += std::complex<double>(std::cos(t), std::sin(t));
    }
    ca /= static_cast<double>(a.n());
    cb /= static_cast<double>(b.n());
    out[static_cast<std::size_t>(k)] = std::abs(ca - cb);
  }
  return out;
}

Mat default_frequency_grid_1d() {
  const int kPoints = 64;
  Mat grid(kPoints, 1);
  double lo = std::log(1e-2), hi = std::log(1e2);
  for (int i = 0; i < kPoints; ++i)
    grid(i, 0) = std::exp(lo + (hi - lo) * i / (kPoints - 1));
  return grid;
}

double dirac_mixture_w2_quadrature(double mu, double sigma, double alpha) {
  if (!(mu > 0.0) || !(sigma > 0.0))
    throw std::invalid_argument("dirac_mixture_w2_quadrature: need mu, sigma > 0");
  TargetSpec spec;
  DiracMixture mix;
  mix.locations.resize(2, 1);
  mix.locations << -mu, mu;
  mix.weights.resize(2);
  mix.weights << 0.5, 0.5;
  spec.variant = mix;
  NoisedScoreOracle oracle(spec);
  auto integrand = [&](double y) {
    Vec q(1);
    q[0] = std::abs(y);
    double phi = denoise_point(oracle, q, sigma, alpha)[0];
    double z = (y - mu) / sigma;
    double w = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
    return (phi - mu) * (phi - mu) * w;
  };
  double w2sq = integrate_adaptive_simpson(integrand, mu - 12.0 * sigma,
                                           mu + 12.0 * sigma, 1e-10, 128);
  return std::sqrt(std::max(0.0, w2sq));
}

}  // namespace dlab
