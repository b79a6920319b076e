#include "denoiselab/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace dlab {
namespace {

double simpson(double h, double fa, double fm, double fb) {
  return (fa + 4.0 * fm + fb) * (h / 6.0);
}

double refine(const std::function<double(double)>& f, double a, double b,
              double fa, double fm, double fb, double whole, double tol,
              int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = f(lm);
  double frm = f(rm);
  double left = simpson(m - a, fa, flm, fm);
  double right = simpson(b - m, fm, frm, fb);
  double err = (left + right - whole) / 15.0;
  if (std::abs(err) <= tol || b - a < 1e-300) return left + right + err;
  if (depth <= 0)
    throw std::runtime_error("adaptive Simpson: depth cap reached before tolerance");
  return refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_adaptive_simpson(const std::function<double(double)>& f,
                                  double a, double b, double tol,
                                  int initial_panels, int max_depth) {
  if (!(b > a)) throw std::invalid_argument("adaptive Simpson: need b > a");
  if (!(tol > 0.0)) throw std::invalid_argument("adaptive Simpson: need tol > 0");
  if (initial_panels < 1) initial_panels = 1;
  double total = 0.0;
  double panel_tol = tol / initial_panels;
  double h = (b - a) / initial_panels;
  for (int i = 0; i < initial_panels; ++i) {
    double pa = a + i * h;
    double pb = (i + 1 == initial_panels) ? b : pa + h;
    double pm = 0.5 * (pa + pb);
    double fa = f(pa), fm = f(pm), fb = f(pb);
    double whole = simpson(pb - pa, fa, fm, fb);
    total += refine(f, pa, pb, fa, fm, fb, whole, panel_tol, max_depth);
  }
  return total;
}

}  // namespace dlab
