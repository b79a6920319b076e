#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// n x d matrix of samples with provenance metadata.
struct SampleBatch {
  Mat data;            // one sample per row
  std::uint64_t seed = 0;
  std::string label;

  long n() const { return data.rows(); }
  long dim() const { return data.cols(); }

  void validate() const {
    if (data.rows() < 1) throw std::invalid_argument("SampleBatch: n must be >= 1");
    if (!data.allFinite()) throw std::invalid_argument("SampleBatch: non-finite entries");
  }
};

}  // namespace dlab
