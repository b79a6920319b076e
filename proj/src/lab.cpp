#include "denoiselab/lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "denoiselab/denoise.hpp"
#include "denoiselab/flow.hpp"
#include "denoiselab/rng.hpp"

namespace dlab {

namespace {

double percentile_halfspread(std::vector<double> values) {
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

// Runs fn(i) for i in [0, count) on up to `workers` threads. The work is
// index-addressed, so results are placement-deterministic.
void parallel_for(long count, int workers, const std::function<void(long)>& fn) {
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = static_cast<int>(std::min<long>(workers, count));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next(0);
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&]() {
    for (;;) {
      long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

bool quantile_supported(const TargetSpec& spec) {
  return spec.dim() == 1 &&
         (std::holds_alternative<Gaussian1D>(spec.variant) ||
          std::holds_alternative<DiagonalGaussian>(spec.variant) ||
          std::holds_alternative<DiracMixture>(spec.variant) ||
          std::holds_alternative<GaussianMixture>(spec.variant));
}

// Quantile-coupled W2 estimate in 1D: shared uniforms give one exact-marginal
// draw of the clean law and one of the noised law; the noised draw is
// denoised per alpha and both sides are sorted. Sharing the uniforms across
// alphas (and with the clean side) removes almost all of the two-sample
// noise, which is what lets sigma^2 / sigma^4 scaling show through at
// moderate n.
struct Coupled1dCell {
  std::vector<double> clean_sorted;
  std::vector<double> noisy;  // unsorted, in draw order
};

Coupled1dCell coupled_cell(const TargetSpec& spec, double sigma, long n,
                           std::uint64_t cell_seed) {
  Coupled1dCell cell;
  cell.clean_sorted.resize(static_cast<std::size_t>(n));
  cell.noisy.resize(static_cast<std::size_t>(n));
  Rng rng(cell_seed);
  for (long i = 0; i < n; ++i) {
    double u = rng.uniform();
    cell.clean_sorted[static_cast<std::size_t>(i)] = clean_quantile(spec, u);
    cell.noisy[static_cast<std::size_t>(i)] = noised_quantile(spec, u, sigma);
  }
  std::sort(cell.clean_sorted.begin(), cell.clean_sorted.end());
  return cell;
}

DistanceReport coupled_w2_report(const Coupled1dCell& cell,
                                 const NoisedScoreOracle& oracle, double sigma,
                                 double alpha, std::uint64_t boot_seed) {
  long n = static_cast<long>(cell.noisy.size());
  double s2 = sigma * sigma;
  std::vector<double> denoised(cell.noisy.size());
  Vec y(1);
  for (std::size_t i = 0; i < cell.noisy.size(); ++i) {
    y[0] = cell.noisy[i];
    denoised[i] = cell.noisy[i] + alpha * s2 * oracle.score(y, s2)[0];
  }
  std::sort(denoised.begin(), denoised.end());
  std::vector<double> costs(cell.noisy.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    double d = cell.clean_sorted[i] - denoised[i];
    costs[i] = d * d;
    mean += costs[i];
  }
  mean /= static_cast<double>(n);

  const int kResamples = 200;
  std::vector<double> boot(kResamples);
  for (int r = 0; r < kResamples; ++r) {
    Rng rng(mix_seed(boot_seed, static_cast<std::uint64_t>(r) + 1));
    double m = 0.0;
    for (long i = 0; i < n; ++i) m += costs[rng.index(costs.size())];
    boot[static_cast<std::size_t>(r)] = std::sqrt(std::max(0.0, m / static_cast<double>(n)));
  }

  DistanceReport rep;
  rep.method = "empirical_1d_sorted";
  rep.value = std::sqrt(std::max(0.0, mean));
  rep.std_error = percentile_halfspread(std::move(boot));
  rep.n = n;
  return rep;
}

}  // namespace

std::vector<double> geometric_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2)
    throw std::invalid_argument("geometric_grid: need 0 < lo < hi and count >= 2");
  std::vector<double> g(static_cast<std::size_t>(count));
  double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i)
    g[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * i / (count - 1));
  return g;
}

void SweepConfig::validate() const {
  target.validate();
  if (alphas.empty()) throw std::invalid_argument("sweep: need at least one alpha");
  if (sigma_grid.empty()) throw std::invalid_argument("sweep: need a sigma grid");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > 0.0))
      throw std::invalid_argument("sweep: sigmas must be positive");
    if (i > 0 && !(sigma_grid[i] > sigma_grid[i - 1]))
      throw std::invalid_argument("sweep: sigma grid must be strictly increasing");
  }
  if (n < 2) throw std::invalid_argument("sweep: need n >= 2");
  if (estimator != "closed_form" && estimator != "mc_coupled_1d" &&
      estimator != "mc_assignment")
    throw std::invalid_argument("sweep: unknown estimator '" + estimator + "'");
  if (estimator == "closed_form" &&
      !std::holds_alternative<Gaussian1D>(target.variant))
    throw std::invalid_argument("sweep: closed_form estimator needs a Gaussian1D target");
  if (estimator == "mc_coupled_1d" && !quantile_supported(target))
    throw std::invalid_argument(
        "sweep: mc_coupled_1d needs a one-dimensional target with quantiles");
  if (estimator == "mc_assignment" && n > 4096)
    throw std::invalid_argument("sweep: mc_assignment caps n at 4096");
}

CurveTable run_sweep(const SweepConfig& config) {
  config.validate();
  const long cells = static_cast<long>(config.sigma_grid.size());
  std::vector<std::vector<CurveRow>> per_cell(static_cast<std::size_t>(cells));
  NoisedScoreOracle oracle(config.target);
  const std::string label = config.target.label();

  auto run_cell = [&](long i) {
    double sigma = config.sigma_grid[static_cast<std::size_t>(i)];
    std::uint64_t cell_seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
    std::vector<CurveRow>& out = per_cell[static_cast<std::size_t>(i)];
    if (config.estimator == "closed_form") {
      double tau = std::get<Gaussian1D>(config.target.variant).tau;
      for (double alpha : config.alphas) {
        CurveRow row;
        row.target_label = label;
        row.alpha = alpha;
        row.sigma = sigma;
        row.report.method = "gaussian_closed_form";
        row.report.value = gaussian_w2_alpha(tau, sigma, alpha);
        row.report.n = 0;
        out.push_back(std::move(row));
      }
    } else if (config.estimator == "mc_coupled_1d") {
      Coupled1dCell cell = coupled_cell(config.target, sigma, config.n, cell_seed);
      for (std::size_t a = 0; a < config.alphas.size(); ++a) {
        CurveRow row;
        row.target_label = label;
        row.alpha = config.alphas[a];
        row.sigma = sigma;
        row.report = coupled_w2_report(cell, oracle, sigma, config.alphas[a],
                                       mix_seed(cell_seed, 1000 + a));
        out.push_back(std::move(row));
      }
    } else {  // mc_assignment
      SampleBatch ref = sample_target(config.target, config.n, mix_seed(cell_seed, 1));
      SampleBatch clean2 = sample_target(config.target, config.n, mix_seed(cell_seed, 2));
      SampleBatch noisy = add_noise(clean2, sigma, mix_seed(cell_seed, 3));
      for (double alpha : config.alphas) {
        SampleBatch den = denoise_batch(oracle, noisy, sigma, alpha);
        CurveRow row;
        row.target_label = label;
        row.alpha = alpha;
        row.sigma = sigma;
        row.report = empirical_w2_assignment(ref, den);
        out.push_back(std::move(row));
      }
    }
  };
  parallel_for(cells, config.workers, run_cell);

  CurveTable table;
  for (auto& cell : per_cell)
    for (auto& row : cell) table.rows.push_back(std::move(row));
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const CurveRow& a, const CurveRow& b) {
                     if (a.sigma != b.sigma) return a.sigma < b.sigma;
                     return a.alpha < b.alpha;
                   });
  return table;
}

SlopeFit fit_rate(const CurveTable& curve, double alpha, double sigma_lo,
                  double sigma_hi) {
  SlopeFit fit;
  for (const auto& row : curve.rows) {
    if (std::abs(row.alpha - alpha) > 1e-12) continue;
    if (row.sigma < sigma_lo || row.sigma > sigma_hi) continue;
    if (!(row.report.value > 0.0))
      throw std::invalid_argument("fit_rate: nonpositive distance in window");
    fit.points.emplace_back(std::log(row.sigma), std::log(row.report.value));
  }
  if (fit.points.size() < 4)
    throw std::invalid_argument("fit_rate: need at least 4 points in the window");
  double n = static_cast<double>(fit.points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : fit.points) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  double vxx = sxx - sx * sx / n;
  double vxy = sxy - sx * sy / n;
  double vyy = syy - sy * sy / n;
  if (!(vxx > 0.0)) throw std::invalid_argument("fit_rate: degenerate sigma window");
  fit.slope = vxy / vxx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r2 = vyy > 0.0 ? std::min(1.0, (vxy * vxy) / (vxx * vyy)) : 1.0;
  return fit;
}

std::string AuditTable::to_csv() const {
  std::string out = "target,sigma,alpha,empirical,bound,holds\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.bound)
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%s\n",
                    r.target_label.c_str(), r.sigma, r.alpha, r.empirical, *r.bound,
                    r.holds.c_str());
    else
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,,%s\n",
                    r.target_label.c_str(), r.sigma, r.alpha, r.empirical,
                    r.holds.c_str());
    out += buf;
  }
  return out;
}

AuditTable audit_bounds(const TargetSpec& target, const std::vector<double>& alphas,
                        const std::vector<double>& sigma_grid, long n,
                        std::uint64_t seed) {
  target.validate();
  if (alphas.empty() || sigma_grid.empty())
    throw std::invalid_argument("audit_bounds: empty alpha or sigma grid");
  ConstantEstimate c = constant_C(target, 1000000, mix_seed(seed, 0xC0u));
  // Monte Carlo constants get a 3-stderr inflation so the audited envelope is
  // itself conservative.
  std::optional<double> c_upper;
  if (c.value) c_upper = *c.value + (c.std_error ? 3.0 * *c.std_error : 0.0);

  NoisedScoreOracle oracle(target);
  const bool one_d = quantile_supported(target);
  if (!one_d && n > 4096)
    throw std::invalid_argument(
        "audit_bounds: multi-dimensional targets cap n at 4096 (assignment W2)");

  AuditTable table;
  std::vector<std::vector<AuditRow>> per_cell(sigma_grid.size());
  parallel_for(static_cast<long>(sigma_grid.size()), 0, [&](long i) {
    double sigma = sigma_grid[static_cast<std::size_t>(i)];
    std::uint64_t cell_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    Coupled1dCell cell;
    SampleBatch ref, noisy;
    if (one_d) {
      cell = coupled_cell(target, sigma, n, cell_seed);
    } else {
      ref = sample_target(target, n, mix_seed(cell_seed, 1));
      SampleBatch clean2 = sample_target(target, n, mix_seed(cell_seed, 2));
      noisy = add_noise(clean2, sigma, mix_seed(cell_seed, 3));
    }
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      double alpha = alphas[a];
      AuditRow row;
      row.target_label = target.label();
      row.sigma = sigma;
      row.alpha = alpha;
      DistanceReport rep;
      if (one_d)
        rep = coupled_w2_report(cell, oracle, sigma, alpha, mix_seed(cell_seed, 1000 + a));
      else
        rep = empirical_w2_assignment(ref, denoise_batch(oracle, noisy, sigma, alpha));
      row.empirical = rep.value;
      row.empirical_stderr = rep.std_error;
      if (c_upper) {
        row.bound = prop3_prefactor(*c_upper, alpha) * sigma * sigma;
        double margin = rep.std_error ? 3.0 * *rep.std_error : 0.0;
        row.holds = row.empirical <= *row.bound + margin ? "true" : "false";
      } else {
        row.holds = "na";
      }
      per_cell[static_cast<std::size_t>(i)].push_back(std::move(row));
    }
  });
  for (auto& cell : per_cell)
    for (auto& row : cell) table.rows.push_back(std::move(row));
  return table;
}

DecayReport mixture_decay_check(double mu, const std::vector<double>& sigma_grid,
                                double alpha) {
  if (!(mu > 0.0)) throw std::invalid_argument("mixture_decay_check: need mu > 0");
  if (sigma_grid.size() < 2)
    throw std::invalid_argument("mixture_decay_check: need >= 2 sigmas");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > 0.0) || !(sigma_grid[i] <= mu / 2.0))
      throw std::invalid_argument("mixture_decay_check: sigmas must lie in (0, mu/2]");
    if (i > 0 && !(sigma_grid[i] > sigma_grid[i - 1]))
      throw std::invalid_argument("mixture_decay_check: sigma grid must increase");
  }
  DecayReport rep;
  double floor = DecayReport::kFloorRel * mu;
  for (double sigma : sigma_grid) {
    DecayRow row;
    row.sigma = sigma;
    row.w2 = dirac_mixture_w2_quadrature(mu, sigma, alpha);
    row.floored = row.w2 < floor;
    rep.rows.push_back(row);
  }

  // Slope of log W2 against 1/sigma^2 over the un-floored rows.
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& row : rep.rows) {
    if (row.floored) continue;
    double x = 1.0 / (row.sigma * row.sigma);
    double y = std::log(row.w2);
    n += 1.0;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  if (n >= 2.0 && sxx - sx * sx / n > 0.0)
    rep.slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);

  rep.superpolynomial = true;
  for (std::size_t i = 0; i < rep.rows.size() && rep.superpolynomial; ++i) {
    for (std::size_t j = i + 1; j < rep.rows.size(); ++j) {
      double w1 = rep.rows[i].w2, w2 = rep.rows[j].w2;
      double ratio_bound = std::pow(rep.rows[i].sigma / rep.rows[j].sigma, 6.0);
      if (w1 <= 0.0) continue;  // underflowed: decays faster than any power
      if (!(w1 < ratio_bound * w2)) {
        rep.superpolynomial = false;
        break;
      }
    }
  }
  return rep;
}

Vec score_time_derivative_fd(const NoisedScoreOracle& oracle, const Vec& x, double t,
                             double rel_step) {
  if (!(t > 0.0)) throw std::invalid_argument("score_time_derivative_fd: need t > 0");
  double h = rel_step * t;
  if (!(h > 0.0) || t - h <= 0.0)
    throw std::invalid_argument("score_time_derivative_fd: step underflow");
  auto rk4 = [&](const Vec& x0, double t0, double dt) {
    auto f = [&](const Vec& z, double s) { return Vec(-0.5 * oracle.score(z, s)); };
    Vec k1 = f(x0, t0);
    Vec k2 = f(x0 + 0.5 * dt * k1, t0 + 0.5 * dt);
    Vec k3 = f(x0 + 0.5 * dt * k2, t0 + 0.5 * dt);
    Vec k4 = f(x0 + dt * k3, t0 + dt);
    return Vec(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };
  Vec x_plus = rk4(x, t, h);
  Vec x_minus = rk4(x, t, -h);
  return (oracle.score(x_plus, t + h) - oracle.score(x_minus, t - h)) / (2.0 * h);
}

Lemma4Report lemma4_fd_check(const TargetSpec& target, const std::vector<double>& t_grid,
                             long n, std::uint64_t seed) {
  target.validate();
  const auto* gm = std::get_if<GaussianMixture>(&target.variant);
  if (!gm)
    throw std::invalid_argument("lemma4_fd_check: target must be a GaussianMixture");
  if (n < 100) throw std::invalid_argument("lemma4_fd_check: need n >= 100");
  if (t_grid.empty()) throw std::invalid_argument("lemma4_fd_check: empty t grid");
  double tau = gm->components[0].tau;
  for (const auto& comp : gm->components)
    if (std::abs(comp.tau - tau) > 1e-12 * tau)
      throw std::invalid_argument(
          "lemma4_fd_check: components must share a common stddev");
  double moment6 = 0.0;
  for (const auto& comp : gm->components)
    moment6 += comp.weight * std::pow(comp.mean.norm(), 6.0);
  int d = target.dim();
  auto bound = lemma4_constant(constants_smoothed(moment6, tau, d));

  NoisedScoreOracle oracle(target);
  Lemma4Report report;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    double t = t_grid[ti];
    if (!(t > 0.0)) throw std::invalid_argument("lemma4_fd_check: need t > 0");
    std::uint64_t cell_seed = mix_seed(seed, ti);
    SampleBatch clean = sample_target(target, n, mix_seed(cell_seed, 1));
    SampleBatch at_t = add_noise(clean, std::sqrt(t), mix_seed(cell_seed, 2));
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < n; ++i) {
      Vec x = at_t.data.row(i).transpose();
      double v = score_time_derivative_fd(oracle, x, t).squaredNorm();
      double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    Lemma4Row row;
    row.t = t;
    row.empirical = mean;
    row.empirical_stderr =
        std::sqrt(m2 / (static_cast<double>(n) - 1.0) / static_cast<double>(n));
    row.bound = bound;
    if (bound)
      row.holds = mean <= *bound + 3.0 * row.empirical_stderr ? "true" : "false";
    else
      row.holds = "na";
    report.rows.push_back(std::move(row));
  }
  return report;
}

void persist_curves(const CurveTable& table, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("persist_curves: cannot open '" + tmp + "'");
    out << "target,alpha,sigma,method,value,stderr,n\n";
    char buf[320];
    for (const auto& row : table.rows) {
      if (row.report.std_error)
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%s,%.17g,%.17g,%ld\n",
                      row.target_label.c_str(), row.alpha, row.sigma,
                      row.report.method.c_str(), row.report.value,
                      *row.report.std_error, row.report.n);
      else
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%s,%.17g,,%ld\n",
                      row.target_label.c_str(), row.alpha, row.sigma,
                      row.report.method.c_str(), row.report.value, row.report.n);
      out << buf;
    }
    out.flush();
    if (!out) throw std::runtime_error("persist_curves: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("persist_curves: cannot rename into '" + path + "'");
  }
}

CurveTable load_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_curves: cannot open '" + path + "'");
  CurveTable table;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_curves: empty file '" + path + "'");
  if (line != "target,alpha,sigma,method,value,stderr,n")
    throw std::runtime_error("load_curves: unexpected header in '" + path + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ls(line);
    while (std::getline(ls, cur, ',')) fields.push_back(cur);
    if (line.back() == ',') fields.push_back("");
    if (fields.size() != 7)
      throw std::runtime_error("load_curves: malformed row '" + line + "'");
    CurveRow row;
    row.target_label = fields[0];
    row.alpha = std::stod(fields[1]);
    row.sigma = std::stod(fields[2]);
    row.report.method = fields[3];
    row.report.value = std::stod(fields[4]);
    if (!fields[5].empty()) row.report.std_error = std::stod(fields[5]);
    row.report.n = std::stol(fields[6]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dlab
