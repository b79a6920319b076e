#include "denoiselab/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "denoiselab/quadrature.hpp"
#include "denoiselab/rng.hpp"

namespace dlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const char* what) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("target config: bad number for ") + what +
                                ": '" + s + "'");
  }
  if (trim(s.substr(pos)) != "")
    throw std::invalid_argument(std::string("target config: trailing junk in ") + what +
                                ": '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::stringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.push_back("");
  return parts;
}

Vec parse_vec(const std::string& s, const char* what) {
  auto parts = split(s, ',');
  if (parts.empty())
    throw std::invalid_argument(std::string("target config: empty vector for ") + what);
  Vec v(static_cast<long>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    v[static_cast<long>(i)] = parse_double(parts[i], what);
  return v;
}

std::string format_vec(const Vec& v) {
  std::string out;
  for (long i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(v[i]);
  }
  return out;
}

void check_weights(const Vec& w, const char* family) {
  for (long i = 0; i < w.size(); ++i)
    if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
      throw std::invalid_argument(std::string(family) + ": weights must be nonnegative");
  if (std::abs(w.sum() - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(family) + ": weights must sum to 1");
}

}  // namespace

int TargetSpec::dim() const {
  return std::visit(
      [](const auto& t) -> int {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) return 1;
        if constexpr (std::is_same_v<T, DiagonalGaussian>)
          return static_cast<int>(t.taus.size());
        if constexpr (std::is_same_v<T, SubspaceGaussian>) return t.ambient_dim;
        if constexpr (std::is_same_v<T, DiracMixture>)
          return static_cast<int>(t.locations.cols());
        if constexpr (std::is_same_v<T, GaussianMixture>)
          return t.components.empty() ? 0 : static_cast<int>(t.components[0].mean.size());
        if constexpr (std::is_same_v<T, BumpDensity1D>) return 1;
      },
      variant);
}

bool TargetSpec::has_density() const {
  return std::visit(
      [](const auto& t) -> bool {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, SubspaceGaussian>)
          return t.intrinsic_dim == t.ambient_dim;
        else
          return !std::is_same_v<T, DiracMixture>;
      },
      variant);
}

std::string TargetSpec::label() const {
  return std::visit(
      [](const auto& t) -> std::string {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) return "gaussian1d";
        if constexpr (std::is_same_v<T, DiagonalGaussian>) return "diagonal_gaussian";
        if constexpr (std::is_same_v<T, SubspaceGaussian>) return "subspace_gaussian";
        if constexpr (std::is_same_v<T, DiracMixture>) return "dirac_mixture";
        if constexpr (std::is_same_v<T, GaussianMixture>) return "gaussian_mixture";
        if constexpr (std::is_same_v<T, BumpDensity1D>) return "bump";
      },
      variant);
}

void TargetSpec::validate() const {
  std::visit(
      [](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          if (!(t.tau > 0.0) || !std::isfinite(t.tau))
            throw std::invalid_argument("gaussian1d: tau must be positive and finite");
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          if (t.taus.size() < 1)
            throw std::invalid_argument("diagonal_gaussian: need at least one coordinate");
          if (t.mean.size() != t.taus.size())
            throw std::invalid_argument("diagonal_gaussian: mean/taus dimension mismatch");
          for (long i = 0; i < t.taus.size(); ++i)
            if (!(t.taus[i] > 0.0) || !std::isfinite(t.taus[i]))
              throw std::invalid_argument("diagonal_gaussian: taus must be positive");
          if (!t.mean.allFinite())
            throw std::invalid_argument("diagonal_gaussian: non-finite mean");
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          if (t.intrinsic_dim < 1 || t.intrinsic_dim > t.ambient_dim)
            throw std::invalid_argument(
                "subspace_gaussian: need 1 <= intrinsic_dim <= ambient_dim");
          if (!(t.tau > 0.0) || !std::isfinite(t.tau))
            throw std::invalid_argument("subspace_gaussian: tau must be positive");
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          if (t.locations.rows() < 1)
            throw std::invalid_argument("dirac_mixture: need at least one atom");
          if (t.weights.size() != t.locations.rows())
            throw std::invalid_argument("dirac_mixture: weights/locations mismatch");
          if (!t.locations.allFinite())
            throw std::invalid_argument("dirac_mixture: non-finite locations");
          for (long i = 0; i < t.locations.rows(); ++i)
            for (long j = i + 1; j < t.locations.rows(); ++j)
              if ((t.locations.row(i) - t.locations.row(j)).norm() == 0.0)
                throw std::invalid_argument("dirac_mixture: duplicate locations");
          check_weights(t.weights, "dirac_mixture");
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          if (t.components.empty())
            throw std::invalid_argument("gaussian_mixture: need at least one component");
          long d = t.components[0].mean.size();
          Vec w(static_cast<long>(t.components.size()));
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            if (c.mean.size() != d || d < 1)
              throw std::invalid_argument("gaussian_mixture: mean dimension mismatch");
            if (!c.mean.allFinite())
              throw std::invalid_argument("gaussian_mixture: non-finite mean");
            if (!(c.tau > 0.0) || !std::isfinite(c.tau))
              throw std::invalid_argument("gaussian_mixture: tau must be positive");
            w[static_cast<long>(i)] = c.weight;
          }
          check_weights(w, "gaussian_mixture");
        }
      },
      variant);
}

TargetSpec parse_target_config(const std::string& text) {
  std::string family;
  std::vector<std::pair<std::string, std::string>> kv;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("target config: expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (key == "target")
      family = val;
    else
      kv.emplace_back(key, val);
  }
  if (family.empty())
    throw std::invalid_argument("target config: missing 'target = <family>' line");

  auto get = [&](const char* key) -> const std::string& {
    for (const auto& [k, v] : kv)
      if (k == key) return v;
    throw std::invalid_argument(std::string("target config: missing key '") + key + "'");
  };
  auto get_all = [&](const char* key) {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv)
      if (k == key) out.push_back(v);
    return out;
  };

  TargetSpec spec;
  if (family == "gaussian1d") {
    spec.variant = Gaussian1D{parse_double(get("tau"), "tau")};
  } else if (family == "diagonal_gaussian") {
    DiagonalGaussian g;
    g.taus = parse_vec(get("taus"), "taus");
    g.mean = Vec::Zero(g.taus.size());
    for (const auto& [k, v] : kv)
      if (k == "mean") g.mean = parse_vec(v, "mean");
    spec.variant = g;
  } else if (family == "subspace_gaussian") {
    SubspaceGaussian g;
    g.ambient_dim = static_cast<int>(parse_double(get("ambient_dim"), "ambient_dim"));
    g.intrinsic_dim = static_cast<int>(parse_double(get("intrinsic_dim"), "intrinsic_dim"));
    g.tau = parse_double(get("tau"), "tau");
    spec.variant = g;
  } else if (family == "dirac_mixture") {
    DiracMixture m;
    auto rows = split(get("locations"), ';');
    if (rows.empty())
      throw std::invalid_argument("target config: dirac_mixture needs locations");
    Vec first = parse_vec(rows[0], "locations");
    m.locations.resize(static_cast<long>(rows.size()), first.size());
    m.locations.row(0) = first.transpose();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      Vec r = parse_vec(rows[i], "locations");
      if (r.size() != first.size())
        throw std::invalid_argument("target config: ragged dirac_mixture locations");
      m.locations.row(static_cast<long>(i)) = r.transpose();
    }
    m.weights = parse_vec(get("weights"), "weights");
    spec.variant = m;
  } else if (family == "gaussian_mixture") {
    GaussianMixture m;
    for (const auto& comp : get_all("component")) {
      auto parts = split(comp, ';');
      if (parts.size() != 3)
        throw std::invalid_argument(
            "target config: component must be 'weight ; mean ; tau'");
      GaussianMixtureComponent c;
      c.weight = parse_double(parts[0], "component weight");
      c.mean = parse_vec(parts[1], "component mean");
      c.tau = parse_double(parts[2], "component tau");
      m.components.push_back(std::move(c));
    }
    if (m.components.empty())
      throw std::invalid_argument("target config: gaussian_mixture needs components");
    spec.variant = m;
  } else if (family == "bump") {
    spec.variant = BumpDensity1D{};
  } else {
    throw std::invalid_argument("target config: unknown family '" + family + "'");
  }
  spec.validate();
  return spec;
}

std::string format_target_config(const TargetSpec& spec) {
  std::string out = "target = " + spec.label() + "\n";
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          out += "tau = " + fmt_double(t.tau) + "\n";
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          out += "taus = " + format_vec(t.taus) + "\n";
          out += "mean = " + format_vec(t.mean) + "\n";
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          out += "ambient_dim = " + std::to_string(t.ambient_dim) + "\n";
          out += "intrinsic_dim = " + std::to_string(t.intrinsic_dim) + "\n";
          out += "tau = " + fmt_double(t.tau) + "\n";
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          std::string locs;
          for (long i = 0; i < t.locations.rows(); ++i) {
            if (i) locs += " ; ";
            locs += format_vec(t.locations.row(i).transpose());
          }
          out += "locations = " + locs + "\n";
          out += "weights = " + format_vec(t.weights) + "\n";
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          for (const auto& c : t.components)
            out += "component = " + fmt_double(c.weight) + " ; " + format_vec(c.mean) +
                   " ; " + fmt_double(c.tau) + "\n";
        }
      },
      spec.variant);
  return out;
}

SampleBatch sample_target(const TargetSpec& spec, long n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample_target: n must be >= 1");
  Rng rng(seed);
  SampleBatch batch;
  batch.seed = seed;
  batch.label = spec.label();
  batch.data.resize(n, spec.dim());
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          for (long i = 0; i < n; ++i) batch.data(i, 0) = t.tau * rng.normal();
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          for (long i = 0; i < n; ++i)
            for (long j = 0; j < t.taus.size(); ++j)
              batch.data(i, j) = t.mean[j] + t.taus[j] * rng.normal();
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          batch.data.setZero();
          for (long i = 0; i < n; ++i)
            for (int j = 0; j < t.intrinsic_dim; ++j)
              batch.data(i, j) = t.tau * rng.normal();
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          for (long i = 0; i < n; ++i) {
            double u = rng.uniform();
            double cum = 0.0;
            long k = t.weights.size() - 1;
            for (long j = 0; j < t.weights.size(); ++j) {
              cum += t.weights[j];
              if (u <= cum) {
                k = j;
                break;
              }
            }
            batch.data.row(i) = t.locations.row(k);
          }
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          for (long i = 0; i < n; ++i) {
            double u = rng.uniform();
            double cum = 0.0;
            std::size_t k = t.components.size() - 1;
            for (std::size_t j = 0; j < t.components.size(); ++j) {
              cum += t.components[j].weight;
              if (u <= cum) {
                k = j;
                break;
              }
            }
            const auto& c = t.components[k];
            for (long j = 0; j < c.mean.size(); ++j)
              batch.data(i, j) = c.mean[j] + c.tau * rng.normal();
          }
        } else if constexpr (std::is_same_v<T, BumpDensity1D>) {
          // Rejection from Uniform(-1, 1) with envelope height exp(-1).
          for (long i = 0; i < n; ++i) {
            for (;;) {
              double x = rng.uniform(-1.0, 1.0);
              double u = rng.uniform();
              if (u * std::exp(-1.0) <= std::exp(-1.0 / (1.0 - x * x))) {
                batch.data(i, 0) = x;
                break;
              }
            }
          }
        }
      },
      spec.variant);
  return batch;
}

SampleBatch add_noise(const SampleBatch& batch, double sigma, std::uint64_t seed) {
  batch.validate();
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("add_noise: sigma must be finite and >= 0");
  SampleBatch out = batch;
  out.seed = seed;
  out.label = batch.label + "+noise";
  Rng rng(seed);
  for (long i = 0; i < out.data.rows(); ++i)
    for (long j = 0; j < out.data.cols(); ++j) out.data(i, j) += sigma * rng.normal();
  return out;
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Posterior responsibilities of mixture components given y, in linear scale.
// log_terms holds the unnormalized log posterior weights.
std::vector<double> responsibilities(const std::vector<double>& log_terms) {
  double m = *std::max_element(log_terms.begin(), log_terms.end());
  std::vector<double> w(log_terms.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_terms[i] - m);
    s += w[i];
  }
  for (double& x : w) x /= s;
  return w;
}

struct BumpIntegrals {
  double log_i0;  // log of the max-shifted mass integral
  double mean;    // posterior mean E[X | Y = y]
  double shift;   // the subtracted maximum M
};

// Integrals over (-1, 1) of exp(g(x) - M) and x exp(g(x) - M) where
// g(x) = -1/(1-x^2) - (y-x)^2 / (2 sigma^2) and M = max g.
BumpIntegrals bump_posterior_integrals(double y, double sigma2) {
  auto g = [&](double x) {
    double one = 1.0 - x * x;
    return -1.0 / one - (y - x) * (y - x) / (2.0 * sigma2);
  };
  // Stabilizing shift: coarse scan for the max of g, then a local ternary
  // refinement around the best grid point (the clamped query is included so
  // narrow small-sigma peaks are never missed).
  const int kGrid = 257;
  double shift = -std::numeric_limits<double>::infinity();
  double best_x = 0.0;
  for (int k = 0; k < kGrid; ++k) {
    double x = -1.0 + 2.0 * (k + 0.5) / kGrid;
    double v = g(x);
    if (v > shift) {
      shift = v;
      best_x = x;
    }
  }
  {
    double xq = std::clamp(y, -1.0 + 1e-9, 1.0 - 1e-9);
    double vq = g(xq);
    if (vq > shift) {
      shift = vq;
      best_x = xq;
    }
    double h = 2.0 / kGrid;
    double lo = std::max(best_x - h, -1.0 + 1e-12);
    double hi = std::min(best_x + h, 1.0 - 1e-12);
    for (int it = 0; it < 60 && hi - lo > 1e-14; ++it) {
      double m1 = lo + (hi - lo) / 3.0;
      double m2 = hi - (hi - lo) / 3.0;
      if (g(m1) < g(m2))
        lo = m1;
      else
        hi = m2;
    }
    shift = std::max(shift, g(0.5 * (lo + hi)));
  }
  auto f0 = [&](double x) {
    double one = 1.0 - x * x;
    if (one <= 0.0) return 0.0;
    return std::exp(g(x) - shift);
  };
  auto f1 = [&](double x) { return x * f0(x); };
  int panels = std::max(64, static_cast<int>(4.0 / std::sqrt(sigma2)));
  panels = std::min(panels, 16384);
  double i0 = integrate_adaptive_simpson(f0, -1.0, 1.0, 1e-10, panels);
  double i1 = integrate_adaptive_simpson(f1, -1.0, 1.0, 1e-10, panels);
  if (!(i0 > 0.0))
    throw std::runtime_error("bump oracle: vanishing posterior mass");
  return {std::log(i0), i1 / i0, shift};
}

void check_query(const TargetSpec& spec, const Vec& y, double sigma2) {
  if (y.size() != spec.dim())
    throw std::invalid_argument("oracle: query dimension mismatch");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("oracle: sigma2 must be positive and finite");
  if (!y.allFinite()) throw std::invalid_argument("oracle: non-finite query");
}

}  // namespace

double bump_normalizer() {
  static const double z = integrate_adaptive_simpson(
      [](double x) {
        double one = 1.0 - x * x;
        return one > 0.0 ? std::exp(-1.0 / one) : 0.0;
      },
      -1.0, 1.0, 1e-14, 64);
  return z;
}

double bump_density(double x) {
  if (std::abs(x) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - x * x)) / bump_normalizer();
}

NoisedScoreOracle::NoisedScoreOracle(TargetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

Vec NoisedScoreOracle::score(const Vec& y, double sigma2) const {
  check_query(spec_, y, sigma2);
  return std::visit(
      [&](const auto& t) -> Vec {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          Vec s(1);
          s[0] = -y[0] / (t.tau * t.tau + sigma2);
          return s;
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          Vec s(y.size());
          for (long j = 0; j < y.size(); ++j)
            s[j] = -(y[j] - t.mean[j]) / (t.taus[j] * t.taus[j] + sigma2);
          return s;
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          Vec s(y.size());
          double v = t.tau * t.tau + sigma2;
          for (long j = 0; j < y.size(); ++j)
            s[j] = j < t.intrinsic_dim ? -y[j] / v : -y[j] / sigma2;
          return s;
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          std::vector<double> lt(static_cast<std::size_t>(t.weights.size()));
          for (long i = 0; i < t.weights.size(); ++i) {
            double d2 = (y - t.locations.row(i).transpose()).squaredNorm();
            lt[static_cast<std::size_t>(i)] = std::log(t.weights[i]) - d2 / (2.0 * sigma2);
          }
          auto w = responsibilities(lt);
          Vec s = Vec::Zero(y.size());
          for (long i = 0; i < t.weights.size(); ++i)
            s += w[static_cast<std::size_t>(i)] *
                 (t.locations.row(i).transpose() - y) / sigma2;
          return s;
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          std::vector<double> lt(t.components.size());
          long d = y.size();
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            double v = c.tau * c.tau + sigma2;
            lt[i] = std::log(c.weight) - 0.5 * d * std::log(v) -
                    (y - c.mean).squaredNorm() / (2.0 * v);
          }
          auto w = responsibilities(lt);
          Vec s = Vec::Zero(d);
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            s += w[i] * (c.mean - y) / (c.tau * c.tau + sigma2);
          }
          return s;
        } else {
          auto bi = bump_posterior_integrals(y[0], sigma2);
          Vec s(1);
          s[0] = (bi.mean - y[0]) / sigma2;
          return s;
        }
      },
      spec_.variant);
}

Vec NoisedScoreOracle::posterior_mean(const Vec& y, double sigma2) const {
  check_query(spec_, y, sigma2);
  return std::visit(
      [&](const auto& t) -> Vec {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          Vec m(1);
          double tau2 = t.tau * t.tau;
          m[0] = tau2 * y[0] / (tau2 + sigma2);
          return m;
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          Vec m(y.size());
          for (long j = 0; j < y.size(); ++j) {
            double tau2 = t.taus[j] * t.taus[j];
            m[j] = t.mean[j] + tau2 * (y[j] - t.mean[j]) / (tau2 + sigma2);
          }
          return m;
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          Vec m = Vec::Zero(y.size());
          double tau2 = t.tau * t.tau;
          for (int j = 0; j < t.intrinsic_dim; ++j)
            m[j] = tau2 * y[j] / (tau2 + sigma2);
          return m;
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          std::vector<double> lt(static_cast<std::size_t>(t.weights.size()));
          for (long i = 0; i < t.weights.size(); ++i) {
            double d2 = (y - t.locations.row(i).transpose()).squaredNorm();
            lt[static_cast<std::size_t>(i)] = std::log(t.weights[i]) - d2 / (2.0 * sigma2);
          }
          auto w = responsibilities(lt);
          Vec m = Vec::Zero(y.size());
          for (long i = 0; i < t.weights.size(); ++i)
            m += w[static_cast<std::size_t>(i)] * t.locations.row(i).transpose();
          return m;
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          std::vector<double> lt(t.components.size());
          long d = y.size();
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            double v = c.tau * c.tau + sigma2;
            lt[i] = std::log(c.weight) - 0.5 * d * std::log(v) -
                    (y - c.mean).squaredNorm() / (2.0 * v);
          }
          auto w = responsibilities(lt);
          Vec m = Vec::Zero(d);
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            double tau2 = c.tau * c.tau;
            m += w[i] * (sigma2 * c.mean + tau2 * y) / (tau2 + sigma2);
          }
          return m;
        } else {
          auto bi = bump_posterior_integrals(y[0], sigma2);
          Vec m(1);
          m[0] = bi.mean;
          return m;
        }
      },
      spec_.variant);
}

double NoisedScoreOracle::log_density(const Vec& y, double sigma2) const {
  check_query(spec_, y, sigma2);
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          double v = t.tau * t.tau + sigma2;
          return -0.5 * std::log(2.0 * kPi * v) - y[0] * y[0] / (2.0 * v);
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          double lp = 0.0;
          for (long j = 0; j < y.size(); ++j) {
            double v = t.taus[j] * t.taus[j] + sigma2;
            double r = y[j] - t.mean[j];
            lp += -0.5 * std::log(2.0 * kPi * v) - r * r / (2.0 * v);
          }
          return lp;
        } else if constexpr (std::is_same_v<T, SubspaceGaussian>) {
          double lp = 0.0;
          double v = t.tau * t.tau + sigma2;
          for (long j = 0; j < y.size(); ++j) {
            double vj = j < t.intrinsic_dim ? v : sigma2;
            lp += -0.5 * std::log(2.0 * kPi * vj) - y[j] * y[j] / (2.0 * vj);
          }
          return lp;
        } else if constexpr (std::is_same_v<T, DiracMixture>) {
          std::vector<double> lt(static_cast<std::size_t>(t.weights.size()));
          long d = y.size();
          for (long i = 0; i < t.weights.size(); ++i) {
            double d2 = (y - t.locations.row(i).transpose()).squaredNorm();
            lt[static_cast<std::size_t>(i)] = std::log(t.weights[i]) - d2 / (2.0 * sigma2);
          }
          return log_sum_exp(lt) - 0.5 * d * std::log(2.0 * kPi * sigma2);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          std::vector<double> lt(t.components.size());
          long d = y.size();
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            double v = c.tau * c.tau + sigma2;
            lt[i] = std::log(c.weight) - 0.5 * d * std::log(2.0 * kPi * v) -
                    (y - c.mean).squaredNorm() / (2.0 * v);
          }
          return log_sum_exp(lt);
        } else {
          auto bi = bump_posterior_integrals(y[0], sigma2);
          return bi.shift + bi.log_i0 - std::log(bump_normalizer()) -
                 0.5 * std::log(2.0 * kPi * sigma2);
        }
      },
      spec_.variant);
}

Vec score_of_clean_density(const TargetSpec& spec, const Vec& x) {
  spec.validate();
  if (x.size() != spec.dim())
    throw std::invalid_argument("score_of_clean_density: dimension mismatch");
  return std::visit(
      [&](const auto& t) -> Vec {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Gaussian1D>) {
          Vec s(1);
          s[0] = -x[0] / (t.tau * t.tau);
          return s;
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          Vec s(x.size());
          for (long j = 0; j < x.size(); ++j)
            s[j] = -(x[j] - t.mean[j]) / (t.taus[j] * t.taus[j]);
          return s;
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          std::vector<double> lt(t.components.size());
          long d = x.size();
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            double v = c.tau * c.tau;
            lt[i] = std::log(c.weight) - 0.5 * d * std::log(v) -
                    (x - c.mean).squaredNorm() / (2.0 * v);
          }
          auto w = responsibilities(lt);
          Vec s = Vec::Zero(d);
          for (std::size_t i = 0; i < t.components.size(); ++i) {
            const auto& c = t.components[i];
            s += w[i] * (c.mean - x) / (c.tau * c.tau);
          }
          return s;
        } else if constexpr (std::is_same_v<T, BumpDensity1D>) {
          double one = 1.0 - x[0] * x[0];
          if (one <= 0.0)
            throw std::domain_error("bump score: point outside the open support (-1, 1)");
          Vec s(1);
          s[0] = -2.0 * x[0] / (one * one);
          return s;
        } else {
          throw std::domain_error(
              "score_of_clean_density: target has no ambient density");
        }
      },
      spec.variant);
}

double clean_log_density_hessian_1d(const TargetSpec& spec, double x) {
  if (std::holds_alternative<Gaussian1D>(spec.variant)) {
    double tau = std::get<Gaussian1D>(spec.variant).tau;
    return -1.0 / (tau * tau);
  }
  if (std::holds_alternative<BumpDensity1D>(spec.variant)) {
    double one = 1.0 - x * x;
    if (one <= 0.0) throw std::domain_error("bump hessian: point outside support");
    return -2.0 * (3.0 * x * x + 1.0) / (one * one * one);
  }
  throw std::domain_error("clean_log_density_hessian_1d: unsupported target");
}

double clean_log_density_third_derivative_1d(const TargetSpec& spec, double x) {
  if (std::holds_alternative<Gaussian1D>(spec.variant)) return 0.0;
  if (std::holds_alternative<BumpDensity1D>(spec.variant)) {
    double one = 1.0 - x * x;
    if (one <= 0.0) throw std::domain_error("bump third derivative: point outside support");
    return -24.0 * x * (x * x + 1.0) / (one * one * one * one);
  }
  throw std::domain_error("clean_log_density_third_derivative_1d: unsupported target");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: u must be in (0, 1)");
  // Acklam's rational approximation followed by one Halley refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (u < plow) {
    double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - plow) {
    double q = u - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    double e = normal_cdf(x) - u;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
    if (pdf <= 0.0) break;
    double step = e / pdf;
    x -= step / (1.0 + 0.5 * x * step);
  }
  return x;
}

namespace {

// Monotone root solve of cdf(x) = u by bisection with a Newton polish.
double invert_cdf(const std::function<double(double)>& cdf,
                  const std::function<double(double)>& pdf, double lo, double hi,
                  double u) {
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi));
       ++it) {
    double mid = 0.5 * (lo + hi);
    if (cdf(mid) < u)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    double p = pdf(x);
    if (!(p > 0.0)) break;
    double xn = x - (cdf(x) - u) / p;
    if (xn < lo || xn > hi) break;
    x = xn;
  }
  return x;
}

}  // namespace

double clean_quantile(const TargetSpec& spec, double u) {
  spec.validate();
  if (spec.dim() != 1)
    throw std::domain_error("clean_quantile: only one-dimensional targets");
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("clean_quantile: u must be in (0, 1)");
  if (const auto* g = std::get_if<Gaussian1D>(&spec.variant))
    return g->tau * inverse_normal_cdf(u);
  if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant))
    return g->mean[0] + g->taus[0] * inverse_normal_cdf(u);
  if (const auto* m = std::get_if<DiracMixture>(&spec.variant)) {
    std::vector<std::pair<double, double>> atoms;
    for (long i = 0; i < m->weights.size(); ++i)
      atoms.emplace_back(m->locations(i, 0), m->weights[i]);
    std::sort(atoms.begin(), atoms.end());
    double cum = 0.0;
    for (const auto& [loc, w] : atoms) {
      cum += w;
      if (u <= cum) return loc;
    }
    return atoms.back().first;
  }
  if (const auto* m = std::get_if<GaussianMixture>(&spec.variant)) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : m->components) {
      lo = std::min(lo, c.mean[0] - 15.0 * c.tau);
      hi = std::max(hi, c.mean[0] + 15.0 * c.tau);
    }
    auto cdf = [&](double x) {
      double s = 0.0;
      for (const auto& c : m->components)
        s += c.weight * normal_cdf((x - c.mean[0]) / c.tau);
      return s;
    };
    auto pdf = [&](double x) {
      double s = 0.0;
      for (const auto& c : m->components) {
        double z = (x - c.mean[0]) / c.tau;
        s += c.weight * std::exp(-0.5 * z * z) / (c.tau * std::sqrt(2.0 * kPi));
      }
      return s;
    };
    return invert_cdf(cdf, pdf, lo, hi, u);
  }
  throw std::domain_error("clean_quantile: unsupported target family");
}

double noised_cdf(const TargetSpec& spec, double y, double sigma) {
  spec.validate();
  if (spec.dim() != 1) throw std::domain_error("noised_cdf: only one-dimensional targets");
  if (!(sigma > 0.0)) throw std::invalid_argument("noised_cdf: sigma must be positive");
  double s2 = sigma * sigma;
  if (const auto* g = std::get_if<Gaussian1D>(&spec.variant))
    return normal_cdf(y / std::sqrt(g->tau * g->tau + s2));
  if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant))
    return normal_cdf((y - g->mean[0]) / std::sqrt(g->taus[0] * g->taus[0] + s2));
  if (const auto* m = std::get_if<DiracMixture>(&spec.variant)) {
    double out = 0.0;
    for (long i = 0; i < m->weights.size(); ++i)
      out += m->weights[i] * normal_cdf((y - m->locations(i, 0)) / sigma);
    return out;
  }
  if (const auto* m = std::get_if<GaussianMixture>(&spec.variant)) {
    double out = 0.0;
    for (const auto& c : m->components)
      out += c.weight * normal_cdf((y - c.mean[0]) / std::sqrt(c.tau * c.tau + s2));
    return out;
  }
  throw std::domain_error("noised_cdf: unsupported target family");
}

double noised_quantile(const TargetSpec& spec, double u, double sigma) {
  spec.validate();
  if (spec.dim() != 1)
    throw std::domain_error("noised_quantile: only one-dimensional targets");
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("noised_quantile: u must be in (0, 1)");
  if (!(sigma > 0.0))
    throw std::invalid_argument("noised_quantile: sigma must be positive");
  double s2 = sigma * sigma;
  if (const auto* g = std::get_if<Gaussian1D>(&spec.variant))
    return std::sqrt(g->tau * g->tau + s2) * inverse_normal_cdf(u);
  if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant))
    return g->mean[0] + std::sqrt(g->taus[0] * g->taus[0] + s2) * inverse_normal_cdf(u);

  // Mixtures: invert the monotone mixture CDF numerically.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::function<double(double)> pdf;
  if (const auto* m = std::get_if<DiracMixture>(&spec.variant)) {
    for (long i = 0; i < m->weights.size(); ++i) {
      lo = std::min(lo, m->locations(i, 0) - 15.0 * sigma);
      hi = std::max(hi, m->locations(i, 0) + 15.0 * sigma);
    }
    pdf = [m, sigma](double y) {
      double out = 0.0;
      for (long i = 0; i < m->weights.size(); ++i) {
        double z = (y - m->locations(i, 0)) / sigma;
        out += m->weights[i] * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
      }
      return out;
    };
  } else if (const auto* m = std::get_if<GaussianMixture>(&spec.variant)) {
    for (const auto& c : m->components) {
      double s = std::sqrt(c.tau * c.tau + s2);
      lo = std::min(lo, c.mean[0] - 15.0 * s);
      hi = std::max(hi, c.mean[0] + 15.0 * s);
    }
    pdf = [m, s2](double y) {
      double out = 0.0;
      for (const auto& c : m->components) {
        double v = c.tau * c.tau + s2;
        double z = (y - c.mean[0]);
        out += c.weight * std::exp(-0.5 * z * z / v) / std::sqrt(2.0 * kPi * v);
      }
      return out;
    };
  } else {
    throw std::domain_error("noised_quantile: unsupported target family");
  }
  auto cdf = [&](double y) { return noised_cdf(spec, y, sigma); };
  return invert_cdf(cdf, pdf, lo, hi, u);
}

}  // namespace dlab
