#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace oracle {

using carbonshift::lp::LinearProgram;

VertexResult enumerate_vertices(const LinearProgram& lp, double tol)
{
  const Eigen::Index n = lp.num_vars();
  const Eigen::MatrixXd E = Eigen::MatrixXd(lp.eq_matrix);
  const Eigen::MatrixXd G = Eigen::MatrixXd(lp.ineq_matrix);

  // Candidate sides a'x = b.
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    if (std::isfinite(lp.ineq_lower[i])) rows.push_back(G.row(i)), rhs.push_back(lp.ineq_lower[i]);
    if (std::isfinite(lp.ineq_upper[i]) && lp.ineq_upper[i] != lp.ineq_lower[i])
      rows.push_back(G.row(i)), rhs.push_back(lp.ineq_upper[i]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e[j] = 1.0;
    if (std::isfinite(lp.var_lower[j])) rows.push_back(e), rhs.push_back(lp.var_lower[j]);
    if (std::isfinite(lp.var_upper[j]) && lp.var_upper[j] != lp.var_lower[j])
      rows.push_back(e), rhs.push_back(lp.var_upper[j]);
  }

  Eigen::FullPivLU<Eigen::MatrixXd> elu(E);
  const Eigen::Index r = E.rows() ? elu.rank() : 0;
  const Eigen::Index need = n - r;

  const auto feasible = [&](const Eigen::VectorXd& x) {
    const auto scale = [&](double b) { return tol * (1.0 + std::abs(b)); };
    for (Eigen::Index i = 0; i < E.rows(); ++i)
      if (std::abs(E.row(i).dot(x) - lp.eq_rhs[i]) > scale(lp.eq_rhs[i])) return false;
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const double v = G.row(i).dot(x);
      if (v < lp.ineq_lower[i] - scale(lp.ineq_lower[i]) || v > lp.ineq_upper[i] + scale(lp.ineq_upper[i]))
        return false;
    }
    for (Eigen::Index j = 0; j < n; ++j)
      if (x[j] < lp.var_lower[j] - scale(lp.var_lower[j]) || x[j] > lp.var_upper[j] + scale(lp.var_upper[j]))
        return false;
    return true;
  };

  VertexResult best;
  if (need < 0 || static_cast<std::size_t>(need) > rows.size()) return best;
  std::vector<std::size_t> pick(static_cast<std::size_t>(need));
  std::iota(pick.begin(), pick.end(), 0);
  Eigen::MatrixXd A(E.rows() + need, n);
  Eigen::VectorXd b(E.rows() + need);
  A.topRows(E.rows()) = E;
  b.head(E.rows()) = lp.eq_rhs;
  while (true) {
    for (Eigen::Index q = 0; q < need; ++q) {
      A.row(E.rows() + q) = rows[pick[static_cast<std::size_t>(q)]];
      b[E.rows() + q] = rhs[pick[static_cast<std::size_t>(q)]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() == n) {
      const Eigen::VectorXd x = qr.solve(b);
      if ((A * x - b).norm() <= 1e-8 * (1.0 + b.norm()) && feasible(x)) {
        ++best.vertices;
        const double obj = lp.objective.dot(x) + lp.objective_offset;
        if (obj < best.objective) {
          best.objective = obj;
          best.x = x;
          best.feasible = true;
        }
      }
    }
    // next combination
    Eigen::Index q = need - 1;
    while (q >= 0 && pick[static_cast<std::size_t>(q)] == rows.size() - static_cast<std::size_t>(need - q)) --q;
    if (q < 0) break;
    ++pick[static_cast<std::size_t>(q)];
    for (Eigen::Index p = q + 1; p < need; ++p)
      pick[static_cast<std::size_t>(p)] = pick[static_cast<std::size_t>(p - 1)] + 1;
  }
  return best;
}

Eigen::VectorXd waterfill_shift(const Eigen::VectorXd& w, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                double gamma)
{
  const auto at = [&](double nu) {
    return ((nu - w.array()) / (2.0 * gamma)).max(lo.array()).min(hi.array()).matrix().eval();
  };
  double a = w.minCoeff() - 2.0 * gamma * hi.cwiseAbs().maxCoeff() - 1.0;
  double z = w.maxCoeff() + 2.0 * gamma * lo.cwiseAbs().maxCoeff() + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + z);
    (at(m).sum() < 0.0 ? a : z) = m;
  }
  return at(0.5 * (a + z));
}

Eigen::VectorXd greedy_shift(const Eigen::VectorXd& w, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
  const auto k = w.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] < w[b]; });
  Eigen::VectorXd d = Eigen::VectorXd::Zero(k);
  // Two pointers: cheapest receives, dearest sends, while it pays.
  std::size_t i = 0, j = static_cast<std::size_t>(k) - 1;
  double room_up = hi[order[i]], room_down = -lo[order[j]];
  while (i < j && w[order[i]] < w[order[j]]) {
    const double m = std::min(room_up, room_down);
    d[order[i]] += m;
    d[order[j]] -= m;
    room_up -= m;
    room_down -= m;
    if (room_up <= 0.0 && ++i < static_cast<std::size_t>(k)) room_up = hi[order[i]];
    if (room_down <= 0.0 && j-- > 0) room_down = -lo[order[j]];
  }
  return d;
}

}  // namespace oracle
