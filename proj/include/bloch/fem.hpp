// Bilinear quadrilateral FEM assembly of the weighted stiffness / mass pencil
// with Bloch-phase identification or Dirichlet elimination per direction.
//
// The pencil entries are
//   K_ij = sum_elements  int a(x) grad(psi_i) . grad(conj(psi_j)) dx
//   M_ij = sum_elements  int psi_i conj(psi_j) dx
// on a tensor grid, 2x2 Gauss quadrature, the coefficient evaluated at the
// quadrature points.  Bloch identification folds the high-side slave nodes
// into the low-side masters with the factor e^{i phase}; Dirichlet rows and
// columns are eliminated.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <ostream>
#include <stdexcept>
#include <variant>
#include <vector>

#include "bloch/coeff.hpp"
#include "bloch/mesh.hpp"

namespace bloch {

using cplx = std::complex<double>;
using SparseC = Eigen::SparseMatrix<cplx>;

struct BlochBC {
  double phase = 0.0;  // u(high) = e^{i phase} u(low)
};
struct DirichletBC {};
using AxisBC = std::variant<BlochBC, DirichletBC>;

struct BoundarySpec {
  AxisBC bc1 = BlochBC{};
  AxisBC bc2 = BlochBC{};
};

struct BlochProblem {
  SparseC K, M;
  StructuredMesh mesh;
  std::vector<std::int32_t> dof_of_node;  // -1 when eliminated
  std::vector<cplx> factor_of_node;       // u_node = factor * u_dof
  bool real_valued = false;               // true when all factors are real

  int dim() const { return static_cast<int>(K.rows()); }
};

namespace detail {

struct AxisFold {
  std::vector<std::int32_t> master;  // node index along axis -> master index or -1
  std::vector<cplx> factor;
  int dofs = 0;
};

inline cplx snapped_phase_factor(double phase) {
  cplx f = std::polar(1.0, phase);
  if (std::abs(f.imag()) < 1e-14) f = cplx(std::round(f.real()), 0.0);
  if (std::abs(f.real()) < 1e-14) f = cplx(0.0, std::round(f.imag()));
  return f;
}

inline AxisFold fold_axis(int n, const AxisBC& bc) {
  AxisFold fold;
  fold.master.assign(n + 1, -1);
  fold.factor.assign(n + 1, cplx(1.0, 0.0));
  if (std::holds_alternative<BlochBC>(bc)) {
    const cplx f = snapped_phase_factor(std::get<BlochBC>(bc).phase);
    for (int i = 0; i < n; ++i) fold.master[i] = i;
    fold.master[n] = 0;
    fold.factor[n] = f;
    fold.dofs = n;
  } else {
    for (int i = 1; i < n; ++i) fold.master[i] = i;
    fold.dofs = n - 1;
  }
  return fold;
}

}  // namespace detail

template <class Coefficient>
BlochProblem assemble(const StructuredMesh& mesh, const Coefficient& coeff,
                      const BoundarySpec& bc) {
  const int n1 = mesh.n1(), n2 = mesh.n2();
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("assemble: empty mesh");

  const detail::AxisFold f1 = detail::fold_axis(n1, bc.bc1);
  const detail::AxisFold f2 = detail::fold_axis(n2, bc.bc2);
  if (f1.dofs < 1 || f2.dofs < 1)
    throw std::invalid_argument("assemble: no degrees of freedom left");

  BlochProblem prob;
  prob.mesh = mesh;
  const std::int64_t n_nodes = mesh.node_count();
  prob.dof_of_node.assign(n_nodes, -1);
  prob.factor_of_node.assign(n_nodes, cplx(0.0, 0.0));
  auto node_id = [n2](int i, int j) {
    return static_cast<std::int64_t>(i) * (n2 + 1) + j;
  };
  // dof index of a master pair (mi, mj); masters are contiguous low-side nodes
  auto dof_id = [&](int mi, int mj) {
    const int row = std::holds_alternative<BlochBC>(bc.bc1) ? mi : mi - 1;
    const int col = std::holds_alternative<BlochBC>(bc.bc2) ? mj : mj - 1;
    return row * f2.dofs + col;
  };
  for (int i = 0; i <= n1; ++i)
    for (int j = 0; j <= n2; ++j) {
      const int mi = f1.master[i], mj = f2.master[j];
      if (mi < 0 || mj < 0) continue;
      prob.dof_of_node[node_id(i, j)] = dof_id(mi, mj);
      prob.factor_of_node[node_id(i, j)] = f1.factor[i] * f2.factor[j];
    }

  const int n_dofs = f1.dofs * f2.dofs;
  std::vector<Eigen::Triplet<cplx>> tk, tm;
  tk.reserve(static_cast<std::size_t>(mesh.element_count()) * 16);
  tm.reserve(static_cast<std::size_t>(mesh.element_count()) * 16);

  const double g = 1.0 / std::sqrt(3.0);  // 2x2 Gauss on [-1,1]
  const double gp[2] = {-g, g};

  for (int ei = 0; ei < n1; ++ei) {
    const double xa = mesh.x1[ei], hx = mesh.x1[ei + 1] - xa;
    for (int ej = 0; ej < n2; ++ej) {
      const double ya = mesh.x2[ej], hy = mesh.x2[ej + 1] - ya;
      const double jac = hx * hy / 4.0;

      double kloc[4][4] = {};
      double mloc[4][4] = {};
      for (double xi : gp)
        for (double eta : gp) {
          const double x = xa + hx * (xi + 1.0) / 2.0;
          const double y = ya + hy * (eta + 1.0) / 2.0;
          const double a = coeff(x, y);
          if (!std::isfinite(a))
            throw std::runtime_error("assemble: non-finite coefficient value");
          // local node order: (0,0) (1,0) (1,1) (0,1) in reference coords
          const double sx[4] = {-1.0, 1.0, 1.0, -1.0};
          const double sy[4] = {-1.0, -1.0, 1.0, 1.0};
          double shp[4], dx[4], dy[4];
          for (int p = 0; p < 4; ++p) {
            shp[p] = 0.25 * (1.0 + sx[p] * xi) * (1.0 + sy[p] * eta);
            dx[p] = 0.25 * sx[p] * (1.0 + sy[p] * eta) * 2.0 / hx;
            dy[p] = 0.25 * sy[p] * (1.0 + sx[p] * xi) * 2.0 / hy;
          }
          for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) {
              kloc[p][q] += jac * a * (dx[p] * dx[q] + dy[p] * dy[q]);
              mloc[p][q] += jac * shp[p] * shp[q];
            }
        }

      const std::int64_t nid[4] = {node_id(ei, ej), node_id(ei + 1, ej),
                                   node_id(ei + 1, ej + 1), node_id(ei, ej + 1)};
      for (int p = 0; p < 4; ++p) {
        const std::int32_t gp_ = prob.dof_of_node[nid[p]];
        if (gp_ < 0) continue;
        const cplx fp = std::conj(prob.factor_of_node[nid[p]]);
        for (int q = 0; q < 4; ++q) {
          const std::int32_t gq = prob.dof_of_node[nid[q]];
          if (gq < 0) continue;
          const cplx w = fp * prob.factor_of_node[nid[q]];
          tk.emplace_back(gp_, gq, w * kloc[p][q]);
          tm.emplace_back(gp_, gq, w * mloc[p][q]);
        }
      }
    }
  }

  prob.K.resize(n_dofs, n_dofs);
  prob.M.resize(n_dofs, n_dofs);
  prob.K.setFromTriplets(tk.begin(), tk.end());
  prob.M.setFromTriplets(tm.begin(), tm.end());
  prob.K.makeCompressed();
  prob.M.makeCompressed();

  prob.real_valued = true;
  for (const cplx& f : prob.factor_of_node)
    if (f.imag() != 0.0) {
      prob.real_valued = false;
      break;
    }
  return prob;
}

// Exact Bloch spectrum of -Laplace on the period cell with a == 1:
// ((phi1 + 2 pi m1) / (2 l1))^2 + ((phi2 + 2 pi m2) / (2 l2))^2.
inline std::vector<double> constant_coefficient_oracle(const Lattice& lat,
                                                       double phi1, double phi2,
                                                       int m) {
  if (m < 1) throw std::invalid_argument("oracle: m >= 1");
  const double pi = 3.14159265358979323846;
  int radius = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m)))) + 2;
  std::vector<double> vals;
  while (true) {
    vals.clear();
    for (int m1 = -radius; m1 <= radius; ++m1)
      for (int m2 = -radius; m2 <= radius; ++m2) {
        const double k1 = (phi1 + 2.0 * pi * m1) / (2.0 * lat.l1);
        const double k2 = (phi2 + 2.0 * pi * m2) / (2.0 * lat.l2);
        vals.push_back(k1 * k1 + k2 * k2);
      }
    std::sort(vals.begin(), vals.end());
    // any index outside the enumerated square exceeds this bound
    const double ring = (2.0 * pi * radius - pi) / (2.0 * std::max(lat.l1, lat.l2));
    if (static_cast<int>(vals.size()) >= m && vals[m - 1] < ring * ring) break;
    radius *= 2;
  }
  vals.resize(m);
  return vals;
}

// Debug dump in coordinate text format: `row col re im` per stored entry.
inline void dump_coordinate(std::ostream& os, const SparseC& A) {
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseC::InnerIterator it(A, k); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' '
         << it.value().imag() << '\n';
}

inline double hermiticity_error(const SparseC& A) {
  const SparseC D = SparseC(A - SparseC(A.adjoint()));
  const double na = A.norm();
  return na > 0.0 ? D.norm() / na : 0.0;
}

}  // namespace bloch
