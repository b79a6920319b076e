#include "denoiselab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "denoiselab/rng.hpp"

namespace dlab {

double Schedule::sigma_node(int k) const {
  double t = times.at(static_cast<std::size_t>(k));
  switch (sigma_kind) {
    case SigmaFnKind::SqrtT:
      return std::sqrt(t);
    case SigmaFnKind::LinearT:
      return t;
    case SigmaFnKind::Table:
      return sigma_table.at(static_cast<std::size_t>(k));
  }
  throw std::logic_error("unreachable");
}

double Schedule::scale_node(int k) const {
  if (scale_kind == ScaleFnKind::Unit) return 1.0;
  return scale_table.at(static_cast<std::size_t>(k));
}

double Schedule::sigma_dot_node(int k) const {
  double t = times.at(static_cast<std::size_t>(k));
  switch (sigma_kind) {
    case SigmaFnKind::SqrtT:
      if (!(t > 0.0))
        throw std::domain_error("schedule: sigma_dot of sqrt_t undefined at t = 0");
      return 0.5 / std::sqrt(t);
    case SigmaFnKind::LinearT:
      return 1.0;
    case SigmaFnKind::Table:
      throw std::domain_error("schedule: table sigma has no analytic derivative");
  }
  throw std::logic_error("unreachable");
}

double Schedule::scale_dot_node(int) const {
  if (scale_kind == ScaleFnKind::Unit) return 0.0;
  throw std::domain_error("schedule: table scale has no analytic derivative");
}

void Schedule::validate() const {
  if (times.size() < 2) throw std::invalid_argument("schedule: need at least 2 nodes");
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    if (!(times[i] > times[i + 1]))
      throw std::invalid_argument("schedule: times must be strictly decreasing");
  if (!(times.back() >= 0.0))
    throw std::invalid_argument("schedule: times must be nonnegative");
  if (sigma_kind == SigmaFnKind::Table && sigma_table.size() != times.size())
    throw std::invalid_argument("schedule: sigma table size mismatch");
  if (scale_kind == ScaleFnKind::Table && scale_table.size() != times.size())
    throw std::invalid_argument("schedule: scale table size mismatch");
  int n = steps();
  for (int k = 0; k <= n; ++k) {
    double s = sigma_node(k);
    if (k < n && !(s > 0.0))
      throw std::invalid_argument("schedule: sigma must be positive before the terminal node");
    if (k == n && !(s >= 0.0))
      throw std::invalid_argument("schedule: terminal sigma must be >= 0");
    if (k > 0 && !(sigma_node(k - 1) > s))
      throw std::invalid_argument("schedule: sigma must be strictly increasing in t");
    if (!(scale_node(k) > 0.0))
      throw std::invalid_argument("schedule: scale must be positive");
  }
}

Schedule geometric_schedule(double sigma_max, double sigma_min, int count) {
  if (!(sigma_max > sigma_min) || !(sigma_min > 0.0))
    throw std::invalid_argument("geometric_schedule: need sigma_max > sigma_min > 0");
  if (count < 2) throw std::invalid_argument("geometric_schedule: need count >= 2");
  Schedule s;
  s.sigma_kind = SigmaFnKind::SqrtT;
  double llo = std::log(sigma_min), lhi = std::log(sigma_max);
  for (int i = 0; i < count; ++i) {
    double sig = std::exp(lhi + (llo - lhi) * i / (count - 1));
    s.times.push_back(sig * sig);
  }
  s.times.push_back(0.0);
  s.validate();
  return s;
}

Schedule parse_schedule_config(const std::string& text) {
  int count = 0;
  double t_max = 0.0, t_min = -1.0;
  std::string spacing = "geometric", sigma_fn = "sqrt_t", scale_fn = "unit";
  std::stringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("schedule config: expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "count")
      count = std::stoi(val);
    else if (key == "t_max")
      t_max = std::stod(val);
    else if (key == "t_min")
      t_min = std::stod(val);
    else if (key == "spacing")
      spacing = val;
    else if (key == "sigma_fn")
      sigma_fn = val;
    else if (key == "scale_fn")
      scale_fn = val;
    else
      throw std::invalid_argument("schedule config: unknown key '" + key + "'");
  }
  if (count < 2 || !(t_max > 0.0))
    throw std::invalid_argument("schedule config: need count >= 2 and t_max > 0");
  if (t_min < 0.0) t_min = t_max * 1e-6;
  if (!(t_min < t_max))
    throw std::invalid_argument("schedule config: need t_min < t_max");
  Schedule s;
  if (sigma_fn == "sqrt_t")
    s.sigma_kind = SigmaFnKind::SqrtT;
  else if (sigma_fn == "linear_t")
    s.sigma_kind = SigmaFnKind::LinearT;
  else
    throw std::invalid_argument("schedule config: unknown sigma_fn '" + sigma_fn + "'");
  if (scale_fn != "unit")
    throw std::invalid_argument("schedule config: unknown scale_fn '" + scale_fn + "'");
  for (int i = 0; i < count; ++i) {
    double t;
    if (spacing == "geometric")
      t = std::exp(std::log(t_max) + (std::log(t_min) - std::log(t_max)) * i / (count - 1));
    else if (spacing == "uniform")
      t = t_max + (t_min - t_max) * i / (count - 1);
    else
      throw std::invalid_argument("schedule config: unknown spacing '" + spacing + "'");
    s.times.push_back(t);
  }
  s.times.push_back(0.0);
  s.validate();
  return s;
}

namespace {

Vec ode_field(const NoisedScoreOracle& oracle, const Vec& x, double t) {
  return -0.5 * oracle.score(x, t);
}

}  // namespace

SampleBatch pf_ode_integrate(const NoisedScoreOracle& oracle, const SampleBatch& start,
                             double t_start, double t_end, int steps, OdeMethod method) {
  start.validate();
  if (start.dim() != oracle.dim())
    throw std::invalid_argument("pf_ode_integrate: dimension mismatch");
  if (!(t_start > t_end) || !(t_end >= 0.0))
    throw std::invalid_argument("pf_ode_integrate: need t_start > t_end >= 0");
  if (steps < 1) throw std::invalid_argument("pf_ode_integrate: need steps >= 1");
  double h = (t_end - t_start) / steps;
  if (!(std::abs(h) > 0.0))
    throw std::invalid_argument("pf_ode_integrate: step size underflow");
  const double t_floor = 1e-12 * t_start;

  SampleBatch out = start;
  out.label = start.label + "+flow";
  for (long i = 0; i < out.n(); ++i) {
    Vec x = out.data.row(i).transpose();
    for (int k = 0; k < steps; ++k) {
      double t = t_start + k * h;
      if (method == OdeMethod::Euler) {
        x += h * ode_field(oracle, x, t);
      } else {
        double tm = std::max(t + 0.5 * h, t_floor);
        double te = std::max(t + h, t_floor);
        Vec k1 = ode_field(oracle, x, t);
        Vec k2 = ode_field(oracle, x + 0.5 * h * k1, tm);
        Vec k3 = ode_field(oracle, x + 0.5 * h * k2, tm);
        Vec k4 = ode_field(oracle, x + h * k3, te);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      if (!x.allFinite())
        throw std::runtime_error("pf_ode_integrate: non-finite state");
    }
    out.data.row(i) = x.transpose();
  }
  return out;
}

Vec ddim_step(const NoisedScoreOracle& oracle, const Vec& x, double s_k, double s_k1,
              double sig_k, double sig_k1) {
  if (!(sig_k > 0.0) || !(sig_k1 >= 0.0))
    throw std::invalid_argument("ddim_step: need sig_k > 0 and sig_k1 >= 0");
  if (!(s_k > 0.0) || !(s_k1 > 0.0))
    throw std::invalid_argument("ddim_step: scales must be positive");
  Vec score = oracle.score(x / s_k, sig_k * sig_k);
  return (s_k1 / s_k) * x + s_k1 * (sig_k * sig_k - sig_k * sig_k1) * score;
}

namespace {

Vec euler_update(const NoisedScoreOracle& oracle, const Vec& x, const Schedule& sched,
                 int k) {
  double tk = sched.times[static_cast<std::size_t>(k)];
  double tk1 = sched.times[static_cast<std::size_t>(k) + 1];
  double sk = sched.scale_node(k);
  double sk1 = sched.scale_node(k + 1);
  double sig = sched.sigma_node(k);
  if (!(sig > 0.0)) throw std::invalid_argument("euler_step: sigma must be positive");
  double sdot = sched.scale_dot_node(k);
  double sigdot = sched.sigma_dot_node(k);
  double dt = tk1 - tk;
  Vec score = oracle.score(x / sk, sig * sig);
  return (1.0 + sdot * dt / sk) * x - sk1 * dt * sigdot * sig * score;
}

}  // namespace

Vec euler_step(const NoisedScoreOracle& oracle, const Vec& x, const Schedule& sched,
               int k) {
  sched.validate();
  if (k < 0 || k >= sched.steps())
    throw std::invalid_argument("euler_step: node index out of range");
  return euler_update(oracle, x, sched, k);
}

std::vector<double> extract_alpha_schedule(const Schedule& sched, StepMethod method) {
  sched.validate();
  std::vector<double> alphas;
  for (int k = 0; k < sched.steps(); ++k) {
    double sig_k = sched.sigma_node(k);
    double sig_k1 = sched.sigma_node(k + 1);
    if (method == StepMethod::Ddim) {
      alphas.push_back(sig_k / (sig_k1 + sig_k));
    } else {
      if (sched.scale_kind != ScaleFnKind::Unit)
        throw std::domain_error(
            "extract_alpha_schedule: euler interpretation needs unit scale");
      double dt = sched.times[static_cast<std::size_t>(k) + 1] -
                  sched.times[static_cast<std::size_t>(k)];
      alphas.push_back(-dt * sched.sigma_dot_node(k) * sig_k /
                       (sig_k * sig_k - sig_k1 * sig_k1));
    }
  }
  return alphas;
}

SampleBatch multistep_sample(const NoisedScoreOracle& oracle, const Schedule& sched,
                             StepMethod method, long n, std::uint64_t seed) {
  sched.validate();
  if (n < 1) throw std::invalid_argument("multistep_sample: need n >= 1");
  long d = oracle.dim();
  SampleBatch out;
  out.seed = seed;
  out.label = oracle.target().label() + "+multistep";
  out.data.resize(n, d);
  double init_sd = sched.scale_node(0) * sched.sigma_node(0);
  for (long i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Vec x(d);
    for (long j = 0; j < d; ++j) x[j] = init_sd * rng.normal();
    for (int k = 0; k < sched.steps(); ++k) {
      if (method == StepMethod::Ddim)
        x = ddim_step(oracle, x, sched.scale_node(k), sched.scale_node(k + 1),
                      sched.sigma_node(k), sched.sigma_node(k + 1));
      else
        x = euler_update(oracle, x, sched, k);
    }
    if (!x.allFinite()) throw std::runtime_error("multistep_sample: non-finite state");
    out.data.row(i) = x.transpose();
  }
  return out;
}

}  // namespace dlab
