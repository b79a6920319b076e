#include "denoiselab/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace dlab {

double solve_assignment_min_cost(const Mat& cost, std::vector<int>* row_to_col) {
  const long n = cost.rows();
  if (n < 1 || cost.cols() != n)
    throw std::invalid_argument("assignment: cost matrix must be square and nonempty");
  if (!cost.allFinite())
    throw std::invalid_argument("assignment: non-finite costs");

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; col_row[j] = row currently matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<long> col_row(n + 1, 0), way(n + 1, 0);
  for (long i = 1; i <= n; ++i) {
    col_row[0] = i;
    long j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      long i0 = col_row[j0], j1 = 0;
      double delta = inf;
      for (long j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (long j = 0; j <= n; ++j) {
        if (used[j]) {
          u[col_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_row[j0] != 0);
    do {
      long j1 = way[j0];
      col_row[j0] = col_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  if (row_to_col) row_to_col->assign(static_cast<std::size_t>(n), -1);
  for (long j = 1; j <= n; ++j) {
    total += cost(col_row[j] - 1, j - 1);
    if (row_to_col)
      (*row_to_col)[static_cast<std::size_t>(col_row[j] - 1)] = static_cast<int>(j - 1);
  }
  return total;
}

}  // namespace dlab
