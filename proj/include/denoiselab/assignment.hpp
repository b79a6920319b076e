#pragma once

#include <vector>

#include "denoiselab/batch.hpp"

namespace dlab {

// Exact minimum-cost perfect matching on a dense n x n cost matrix
// (shortest augmenting paths with potentials, O(n^3)). row_to_col, when
// non-null, receives the optimal column for each row.
double solve_assignment_min_cost(const Mat& cost, std::vector<int>* row_to_col = nullptr);

}  // namespace dlab
