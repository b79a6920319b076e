#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denoiselab/batch.hpp"
#include "denoiselab/targets.hpp"

namespace dlab {

enum class SigmaFnKind { SqrtT, LinearT, Table };
enum class ScaleFnKind { Unit, Table };
enum class OdeMethod { Euler, Rk4 };
enum class StepMethod { Ddim, Euler };

// Discretization grid t_0 > t_1 > ... > t_N = 0 with noise schedule sigma(t)
// and scale s(t). sigma is strictly positive and increasing in t everywhere
// except possibly the terminal node, where sigma = 0 is allowed.
struct Schedule {
  std::vector<double> times;
  SigmaFnKind sigma_kind = SigmaFnKind::SqrtT;
  ScaleFnKind scale_kind = ScaleFnKind::Unit;
  std::vector<double> sigma_table;  // per node, for SigmaFnKind::Table
  std::vector<double> scale_table;  // per node, for ScaleFnKind::Table

  int steps() const { return static_cast<int>(times.size()) - 1; }
  double sigma_node(int k) const;
  double scale_node(int k) const;
  // Analytic derivatives at node k; table schedules throw (no analytic form).
  double sigma_dot_node(int k) const;
  double scale_dot_node(int k) const;
  void validate() const;
};

// sigma(t) = sqrt(t) schedule whose noise levels are log-spaced from
// sigma_max down to sigma_min over `count` nodes, plus the terminal t = 0.
Schedule geometric_schedule(double sigma_max, double sigma_min, int count);

// Key-value schedule config: count, t_max, t_min, spacing {geometric |
// uniform}, sigma_fn {sqrt_t | linear_t}, scale_fn {unit}.
Schedule parse_schedule_config(const std::string& text);

// Integrates dx/dt = -1/2 score(x; t) (noise variance t) backward from
// t_start to t_end with fixed substeps. The score is never evaluated at
// t = 0: the final substep uses its left endpoint, and RK4 stage times are
// clamped to >= 1e-12 * t_start.
SampleBatch pf_ode_integrate(const NoisedScoreOracle& oracle, const SampleBatch& start,
                             double t_start, double t_end, int steps, OdeMethod method);

// One DDIM update from (scale s_k, noise sig_k) to (s_k1, sig_k1):
// x' = (s_k1/s_k) x + s_k1 (sig_k^2 - sig_k sig_k1) score(x/s_k; sig_k^2).
Vec ddim_step(const NoisedScoreOracle& oracle, const Vec& x, double s_k, double s_k1,
              double sig_k, double sig_k1);

// One Euler update of the scaled flow between nodes k and k+1, with exact
// sigma-dot and s-dot from the schedule's analytic forms.
Vec euler_step(const NoisedScoreOracle& oracle, const Vec& x, const Schedule& sched,
               int k);

// Per-step denoising coefficient implied by each discrete update:
// ddim: alpha_k = sig_k / (sig_k1 + sig_k);
// euler (unit scale): alpha_k = -(t_k1 - t_k) sigma_dot_k sig_k / (sig_k^2 - sig_k1^2).
std::vector<double> extract_alpha_schedule(const Schedule& sched, StepMethod method);

// Initializes from N(0, s(t_0)^2 sigma(t_0)^2 I) and steps down the grid.
SampleBatch multistep_sample(const NoisedScoreOracle& oracle, const Schedule& sched,
                             StepMethod method, long n, std::uint64_t seed);

}  // namespace dlab
