#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "denoiselab/denoise.hpp"
#include "denoiselab/flow.hpp"
#include "denoiselab/lab.hpp"
#include "denoiselab/rng.hpp"
#include "denoiselab/targets.hpp"

namespace {

using namespace dlab;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DENOISE_LAB_SEED"))
    return static_cast<std::uint64_t>(std::stoull(env));
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw std::invalid_argument("empty list: '" + text + "'");
  return out;
}

// min:max:count geometric grid spec.
std::vector<double> parse_grid(const std::string& text) {
  auto c1 = text.find(':');
  auto c2 = text.rfind(':');
  if (c1 == std::string::npos || c2 == c1)
    throw std::invalid_argument("grid spec must be min:max:count, got '" + text + "'");
  double lo = std::stod(text.substr(0, c1));
  double hi = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
  int count = std::stoi(text.substr(c2 + 1));
  return geometric_grid(lo, hi, count);
}

std::pair<double, double> parse_window(const std::string& text) {
  auto c = text.find(':');
  if (c == std::string::npos)
    throw std::invalid_argument("window must be lo:hi, got '" + text + "'");
  return {std::stod(text.substr(0, c)), std::stod(text.substr(c + 1))};
}

struct TargetFlags {
  std::string family;
  std::string config_path;
  double tau = 1.0;
  std::string taus, mean;
  int ambient_dim = 1, intrinsic_dim = 1;
  std::string locations, weights;
  std::vector<std::string> components;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--target", family,
                    "target family: gaussian1d | diagonal_gaussian | "
                    "subspace_gaussian | dirac_mixture | gaussian_mixture | bump");
    cmd->add_option("--target-config", config_path,
                    "path to a key-value target config (overrides --target)");
    cmd->add_option("--tau", tau, "stddev (gaussian1d / subspace_gaussian)");
    cmd->add_option("--taus", taus, "comma list of stddevs (diagonal_gaussian)");
    cmd->add_option("--mean", mean, "comma list (diagonal_gaussian mean)");
    cmd->add_option("--ambient-dim", ambient_dim, "ambient dimension (subspace_gaussian)");
    cmd->add_option("--intrinsic-dim", intrinsic_dim,
                    "intrinsic dimension (subspace_gaussian)");
    cmd->add_option("--locations", locations,
                    "semicolon-separated points, coords comma-separated (dirac_mixture)");
    cmd->add_option("--weights", weights, "comma list of weights (dirac_mixture)");
    cmd->add_option("--component", components,
                    "'weight ; mean ; tau' (gaussian_mixture, repeatable)");
  }

  TargetSpec resolve() const {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open target config '" + config_path + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      return parse_target_config(ss.str());
    }
    if (family.empty())
      throw std::runtime_error("no target given (use --target or --target-config)");
    std::string text = "target = " + family + "\n";
    if (family == "gaussian1d" || family == "subspace_gaussian")
      text += "tau = " + std::to_string(tau) + "\n";
    if (family == "subspace_gaussian") {
      text += "ambient_dim = " + std::to_string(ambient_dim) + "\n";
      text += "intrinsic_dim = " + std::to_string(intrinsic_dim) + "\n";
    }
    if (family == "diagonal_gaussian") {
      text += "taus = " + taus + "\n";
      if (!mean.empty()) text += "mean = " + mean + "\n";
    }
    if (family == "dirac_mixture") {
      text += "locations = " + locations + "\n";
      text += "weights = " + weights + "\n";
    }
    if (family == "gaussian_mixture")
      for (const auto& c : components) text += "component = " + c + "\n";
    return parse_target_config(text);
  }
};

void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename into '" + path + "'");
  }
}

std::string batch_csv(const SampleBatch& batch) {
  std::string out;
  for (long j = 0; j < batch.dim(); ++j) {
    if (j) out += ",";
    out += "x" + std::to_string(j);
  }
  out += "\n";
  char buf[40];
  for (long i = 0; i < batch.n(); ++i) {
    for (long j = 0; j < batch.dim(); ++j) {
      if (j) out += ",";
      std::snprintf(buf, sizeof(buf), "%.17g", batch.data(i, j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for score-based alpha-denoising experiments"};
  app.require_subcommand(1);

  // curves
  auto* curves = app.add_subcommand("curves", "sweep W2 distance curves over sigma");
  TargetFlags curves_target;
  curves_target.add_to(curves);
  std::string curves_alphas = "0,0.5,1", curves_sigma = "0.01:10:60";
  std::string curves_estimator = "closed_form", curves_out = "curves.csv";
  long curves_n = 100000;
  std::uint64_t curves_seed = default_seed();
  int curves_workers = 0;
  curves->add_option("--alphas", curves_alphas, "comma list of denoising coefficients");
  curves->add_option("--sigma", curves_sigma, "noise stddev grid, min:max:count (geometric)");
  curves->add_option("--estimator", curves_estimator,
                     "closed_form | mc_coupled_1d | mc_assignment");
  curves->add_option("--n", curves_n, "Monte Carlo samples per grid point");
  curves->add_option("--seed", curves_seed, "base RNG seed");
  curves->add_option("--workers", curves_workers, "thread cap (0 = all cores)");
  curves->add_option("--out", curves_out, "output CSV path");

  // rates
  auto* rates = app.add_subcommand("rates", "fit a log-log convergence rate from a curve CSV");
  std::string rates_in, rates_window = "0.001:0.01";
  double rates_alpha = 0.5;
  rates->add_option("--in", rates_in, "curve CSV from the curves subcommand")->required();
  rates->add_option("--alpha", rates_alpha, "denoising coefficient to select");
  rates->add_option("--window", rates_window, "sigma window lo:hi");

  // bounds
  auto* bounds_cmd = app.add_subcommand("bounds", "audit the order-sigma^2 W2 bound");
  TargetFlags bounds_target;
  bounds_target.add_to(bounds_cmd);
  std::string bounds_alphas = "0,0.5,1", bounds_sigma = "0.05:1:8";
  std::string bounds_out = "bounds.csv";
  long bounds_n = 100000;
  std::uint64_t bounds_seed = default_seed();
  bounds_cmd->add_option("--alphas", bounds_alphas, "comma list of denoising coefficients");
  bounds_cmd->add_option("--sigma", bounds_sigma, "noise stddev grid, min:max:count");
  bounds_cmd->add_option("--n", bounds_n, "Monte Carlo samples per grid point");
  bounds_cmd->add_option("--seed", bounds_seed, "base RNG seed");
  bounds_cmd->add_option("--out", bounds_out, "output CSV path");

  // sample
  auto* sample = app.add_subcommand("sample", "draw target samples (optionally noised)");
  TargetFlags sample_target_flags;
  sample_target_flags.add_to(sample);
  long sample_n = 1000;
  double sample_sigma = 0.0;
  std::uint64_t sample_seed = default_seed();
  std::string sample_out = "samples.csv";
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--sigma", sample_sigma, "noise stddev to add (0 = none)");
  sample->add_option("--seed", sample_seed, "RNG seed");
  sample->add_option("--out", sample_out, "output CSV path");

  // flow
  auto* flow_cmd = app.add_subcommand("flow", "multistep sampling down a noise schedule");
  TargetFlags flow_target;
  flow_target.add_to(flow_cmd);
  double flow_sigma_max = 3.0, flow_sigma_min = 0.01;
  int flow_steps = 64;
  std::string flow_method = "ddim", flow_out = "flow.csv", flow_schedule;
  long flow_n = 1000;
  std::uint64_t flow_seed = default_seed();
  flow_cmd->add_option("--sigma-max", flow_sigma_max, "initial noise stddev");
  flow_cmd->add_option("--sigma-min", flow_sigma_min, "last positive noise stddev");
  flow_cmd->add_option("--steps", flow_steps, "number of positive-noise nodes");
  flow_cmd->add_option("--schedule-config", flow_schedule,
                       "path to a schedule config (overrides the sigma flags)");
  flow_cmd->add_option("--method", flow_method, "ddim | euler");
  flow_cmd->add_option("--n", flow_n, "number of trajectories");
  flow_cmd->add_option("--seed", flow_seed, "RNG seed");
  flow_cmd->add_option("--out", flow_out, "output CSV path");

  // mixture-decay
  auto* decay = app.add_subcommand("mixture-decay",
                                   "super-polynomial decay check for the two-point mixture");
  double decay_mu = 1.0, decay_alpha = 1.0;
  std::string decay_sigma = "0.1:0.3:5", decay_out;
  decay->add_option("--mu", decay_mu, "mixture half-separation");
  decay->add_option("--sigma", decay_sigma, "noise stddev grid, min:max:count");
  decay->add_option("--alpha", decay_alpha, "denoising coefficient");
  decay->add_option("--out", decay_out, "optional CSV output path");

  // lemma4
  auto* lemma4 = app.add_subcommand("lemma4",
                                    "mean-square score time-derivative audit for mixtures");
  TargetFlags lemma4_target;
  lemma4_target.add_to(lemma4);
  std::string lemma4_t = "0.01,0.1";
  long lemma4_n = 1000;
  std::uint64_t lemma4_seed = default_seed();
  lemma4->add_option("--t", lemma4_t, "comma list of noise variances t");
  lemma4->add_option("--n", lemma4_n, "Monte Carlo samples per t");
  lemma4->add_option("--seed", lemma4_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (curves->parsed()) {
      SweepConfig config;
      config.target = curves_target.resolve();
      config.alphas = parse_list(curves_alphas);
      config.sigma_grid = parse_grid(curves_sigma);
      config.estimator = curves_estimator;
      config.n = curves_n;
      config.seed = curves_seed;
      config.workers = curves_workers;
      CurveTable table = run_sweep(config);
      persist_curves(table, curves_out);
      std::printf("wrote %zu rows to %s\n", table.rows.size(), curves_out.c_str());
    } else if (rates->parsed()) {
      CurveTable table = load_curves(rates_in);
      auto [lo, hi] = parse_window(rates_window);
      SlopeFit fit = fit_rate(table, rates_alpha, lo, hi);
      std::printf("slope %.4g  intercept %.4g  r2 %.4g  points %zu\n", fit.slope,
                  fit.intercept, fit.r2, fit.points.size());
    } else if (bounds_cmd->parsed()) {
      AuditTable table = audit_bounds(bounds_target.resolve(), parse_list(bounds_alphas),
                                      parse_grid(bounds_sigma), bounds_n, bounds_seed);
      write_atomic(bounds_out, table.to_csv());
      long violations = 0;
      for (const auto& row : table.rows)
        if (row.holds == "false") ++violations;
      std::printf("wrote %zu rows to %s (%ld violations)\n", table.rows.size(),
                  bounds_out.c_str(), violations);
    } else if (sample->parsed()) {
      SampleBatch batch = sample_target(sample_target_flags.resolve(), sample_n,
                                        sample_seed);
      if (sample_sigma > 0.0)
        batch = add_noise(batch, sample_sigma, mix_seed(sample_seed, 1));
      write_atomic(sample_out, batch_csv(batch));
      std::printf("wrote %ld samples to %s\n", batch.n(), sample_out.c_str());
    } else if (flow_cmd->parsed()) {
      Schedule sched;
      if (!flow_schedule.empty()) {
        std::ifstream in(flow_schedule);
        if (!in)
          throw std::runtime_error("cannot open schedule config '" + flow_schedule + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        sched = parse_schedule_config(ss.str());
      } else {
        sched = geometric_schedule(flow_sigma_max, flow_sigma_min, flow_steps);
      }
      StepMethod method;
      if (flow_method == "ddim")
        method = StepMethod::Ddim;
      else if (flow_method == "euler")
        method = StepMethod::Euler;
      else
        throw std::runtime_error("unknown flow method '" + flow_method + "'");
      NoisedScoreOracle oracle(flow_target.resolve());
      SampleBatch batch = multistep_sample(oracle, sched, method, flow_n, flow_seed);
      write_atomic(flow_out, batch_csv(batch));
      std::printf("wrote %ld samples to %s\n", batch.n(), flow_out.c_str());
    } else if (decay->parsed()) {
      DecayReport rep = mixture_decay_check(decay_mu, parse_grid(decay_sigma), decay_alpha);
      std::printf("slope vs 1/sigma^2: %.4g  superpolynomial: %s\n", rep.slope,
                  rep.superpolynomial ? "yes" : "no");
      for (const auto& row : rep.rows)
        std::printf("  sigma %.4g  w2 %.4g%s\n", row.sigma, row.w2,
                    row.floored ? "  (below quadrature floor)" : "");
      if (!decay_out.empty()) {
        std::string csv = "sigma,w2,floored\n";
        char buf[96];
        for (const auto& row : rep.rows) {
          std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", row.sigma, row.w2,
                        row.floored ? 1 : 0);
          csv += buf;
        }
        write_atomic(decay_out, csv);
      }
    } else if (lemma4->parsed()) {
      Lemma4Report rep = lemma4_fd_check(lemma4_target.resolve(), parse_list(lemma4_t),
                                         lemma4_n, lemma4_seed);
      for (const auto& row : rep.rows) {
        if (row.bound)
          std::printf("t %.4g  mean-square %.4g (stderr %.4g)  bound %.4g  holds %s\n",
                      row.t, row.empirical, row.empirical_stderr, *row.bound,
                      row.holds.c_str());
        else
          std::printf("t %.4g  mean-square %.4g (stderr %.4g)  bound n/a\n", row.t,
                      row.empirical, row.empirical_stderr);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
