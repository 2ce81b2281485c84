#include "carbonshift/sensitivity.hpp"

#include "carbonshift/csv.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <ostream>

namespace carbonshift {

using Eigen::Index;
using lp::ConstraintKind;

namespace {

int row_group(const lp::ConstraintRef& r)
{
  switch (r.kind) {
    case ConstraintKind::equality: return 0;
    case ConstraintKind::ineq_lower:
    case ConstraintKind::ineq_upper: return 1;
    default: return 2;
  }
}

std::uint64_t hash_basis(const std::vector<lp::ConstraintRef>& rows)
{
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& r : rows) {
    mix(static_cast<std::uint64_t>(r.kind));
    mix(static_cast<std::uint64_t>(r.index));
  }
  return h;
}

// The rows are assembled from the network rather than copied from the LP.
Eigen::MatrixXd assemble_rows(const NetworkCase& net, const std::vector<lp::ConstraintRef>& rows)
{
  const DcopfLayout L(net);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Index>(rows.size()), L.vars());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& ref = rows[r];
    const auto i = static_cast<Index>(r);
    switch (ref.kind) {
      case ConstraintKind::equality:
        if (ref.index == L.reference_row()) {
          A(i, L.theta(static_cast<Index>(net.reference_index()))) = 1.0;
        } else {
          const int bus_id = net.buses()[static_cast<std::size_t>(ref.index)].id;
          for (const auto& line : net.lines()) {
            if (line.from_bus != bus_id && line.to_bus != bus_id) continue;
            const int other = line.from_bus == bus_id ? line.to_bus : line.from_bus;
            A(i, L.theta(ref.index)) += line.susceptance;
            A(i, L.theta(static_cast<Index>(net.bus_index(other)))) -= line.susceptance;
          }
          for (std::size_t g = 0; g < net.num_generators(); ++g)
            if (net.generators()[g].bus == bus_id) A(i, L.pg(static_cast<Index>(g))) = 1.0;
        }
        break;
      case ConstraintKind::ineq_lower:
      case ConstraintKind::ineq_upper: {
        const auto& line = net.lines()[static_cast<std::size_t>(ref.index)];
        A(i, L.theta(static_cast<Index>(net.bus_index(line.from_bus)))) = -line.susceptance;
        A(i, L.theta(static_cast<Index>(net.bus_index(line.to_bus)))) = line.susceptance;
        break;
      }
      case ConstraintKind::var_lower:
      case ConstraintKind::var_upper: A(i, ref.index) = 1.0; break;
    }
  }
  return A;
}

std::vector<std::size_t> dependent_rows(const Eigen::MatrixXd& A, double tol)
{
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  qr.setThreshold(tol);
  std::vector<std::size_t> out;
  const auto& perm = qr.colsPermutation().indices();
  for (Index k = qr.rank(); k < perm.size(); ++k) out.push_back(static_cast<std::size_t>(perm[k]));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SensitivityBundle build_bundle(const DispatchSolution& sol, const NetworkCase& net)
{
  const DcopfLayout L(net);
  const Index n = L.vars();

  SensitivityBundle b;
  b.rows = sol.basis();
  std::stable_sort(b.rows.begin(), b.rows.end(), [](const auto& x, const auto& y) {
    const int gx = row_group(x), gy = row_group(y);
    return gx != gy ? gx < gy : x.index < y.index;
  });
  b.A = assemble_rows(net, b.rows);
  b.basis_id = hash_basis(b.rows);
  b.degenerate = sol.degenerate();
  b.carbon = net.generator_carbon();
  b.cost = net.generator_costs();

  if (static_cast<Index>(b.rows.size()) != n)
    throw SingularBasis("basis has " + std::to_string(b.rows.size()) + " constraints for " + std::to_string(n) +
                            " variables",
                        dependent_rows(b.A, 1e-10));
  for (Index i = 0; i <= L.buses; ++i)
    if (b.rows[static_cast<std::size_t>(i)] != lp::ConstraintRef{ConstraintKind::equality, i})
      throw SingularBasis("basis does not contain every balance and reference row", {});

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(b.A);
  b.rcond = lu.rcond();
  if (!(b.rcond > 1e-14)) throw SingularBasis("active-constraint matrix is singular", dependent_rows(b.A, 1e-10));

  // B = generation rows x balance columns of A^-1
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, L.buses);
  rhs.topRows(L.buses).setIdentity();
  const Eigen::MatrixXd X = lu.solve(rhs);
  b.B = X.bottomRows(L.generators);

  // lambda = w^T B, from A^T z = [0; w] restricted to the balance entries
  auto lambda = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e.tail(L.generators) = w;
    const Eigen::VectorXd z = lu.transpose().solve(e);
    return Eigen::VectorXd(z.head(L.buses));
  };
  b.lambda_co2 = lambda(b.carbon);
  b.lambda_cost = lambda(b.cost);
  return b;
}

PredictedChange predict_changes(const SensitivityBundle& b, const Eigen::VectorXd& delta_pd)
{
  if (delta_pd.size() != b.B.cols())
    throw DimensionError("load change has " + std::to_string(delta_pd.size()) + " entries, expected " +
                         std::to_string(b.B.cols()));
  PredictedChange p;
  p.delta_pg = b.B * delta_pd;
  p.delta_cost = b.cost.dot(p.delta_pg);
  p.delta_co2 = b.carbon.dot(p.delta_pg);
  return p;
}

void write_lmce_csv(std::ostream& out, const SensitivityBundle& b, const DispatchSolution& sol,
                    const NetworkCase& net)
{
  out << "bus,lambda_co2,lambda_cost,lmp,degenerate_flag\n";
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    const auto k = static_cast<Index>(i);
    out << net.buses()[i].id << ',' << csv::format_number(b.lambda_co2[k]) << ','
        << csv::format_number(b.lambda_cost[k]) << ',' << csv::format_number(sol.nodal_prices[k]) << ','
        << (b.degenerate ? 1 : 0) << '\n';
  }
}

}  // namespace carbonshift
