#pragma once

#include "carbonshift/lp_core.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

// Reference solvers that share no code with the library's optimization layer.
namespace oracle {

struct VertexResult
{
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t vertices = 0;  ///< feasible vertices visited
};

/// Minimum over the vertices of a small LP: every choice of n linearly
/// independent constraint sides (equalities always included) is solved as a
/// square system and kept when feasible. Assumes the optimum is attained at a
/// vertex, i.e. bounded and pointed.
VertexResult enumerate_vertices(const carbonshift::lp::LinearProgram& lp, double tol = 1e-7);

/// min w'd + gamma |d|^2  s.t.  sum d = 0, lo <= d <= hi, gamma > 0.
/// Water-filling: d_i = clip((nu - w_i) / (2 gamma)) with nu found by bisection.
Eigen::VectorXd waterfill_shift(const Eigen::VectorXd& w, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                double gamma);

/// min w'd  s.t.  sum d = 0, lo <= d <= hi (lo <= 0 <= hi). Greedy: push the
/// cheapest sites up and the dearest down until the moves balance.
Eigen::VectorXd greedy_shift(const Eigen::VectorXd& w, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

}  // namespace oracle
