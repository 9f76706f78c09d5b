// Structured tensor-product meshes aligned with the coefficient geometry.
//
// Grid lines snap to every paving boundary of the field and to the plateau
// boundaries at distance eps and 2*eps from it, so no element straddles the
// frame or the transition layer.  Spacing is capped at target_h globally and
// at eps/3 within distance 2*eps of a paving boundary.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bloch/coeff.hpp"

namespace bloch {

struct Rect {
  double x1_lo, x1_hi;
  double x2_lo, x2_hi;
};

struct StructuredMesh {
  std::vector<double> x1;  // node coordinates, ascending, size n1()+1
  std::vector<double> x2;

  int n1() const { return static_cast<int>(x1.size()) - 1; }
  int n2() const { return static_cast<int>(x2.size()) - 1; }
  std::int64_t element_count() const {
    return static_cast<std::int64_t>(n1()) * n2();
  }
  std::int64_t node_count() const {
    return static_cast<std::int64_t>(x1.size()) * x2.size();
  }
};

namespace detail {

// Paving boundaries of one axis inside [lo, hi]: odd multiples of l for the
// periodic axis, +-(h + l + 2*l*k) when the axis carries an outward shift.
inline std::vector<double> paving_lines(double lo, double hi, double l, double h) {
  std::vector<double> lines;
  if (h == 0.0) {
    const int k_lo = static_cast<int>(std::floor((lo - l) / (2.0 * l))) - 1;
    const int k_hi = static_cast<int>(std::ceil((hi - l) / (2.0 * l))) + 1;
    for (int k = k_lo; k <= k_hi; ++k) {
      const double b = l + 2.0 * l * k;
      if (b >= lo - 1e-12 && b <= hi + 1e-12) lines.push_back(b);
    }
  } else {
    const int k_max = static_cast<int>(std::ceil((hi - h - l) / (2.0 * l))) + 1;
    for (int k = 0; k <= std::max(k_max, 0); ++k) {
      const double b = h + l + 2.0 * l * k;
      if (b >= lo - 1e-12 && b <= hi + 1e-12) lines.push_back(b);
      if (-b >= lo - 1e-12 && -b <= hi + 1e-12) lines.push_back(-b);
    }
    std::sort(lines.begin(), lines.end());
  }
  return lines;
}

inline std::vector<double> build_axis(double lo, double hi, double l, double h,
                                      double eps, double target_h) {
  const std::vector<double> pav = paving_lines(lo, hi, l, h);
  if (pav.empty() || std::abs(pav.front() - lo) > 1e-9 ||
      std::abs(pav.back() - hi) > 1e-9)
    throw std::invalid_argument(
        "mesh: domain sides must be unions of cell widths of the lattice");

  std::vector<double> snaps{lo, hi};
  for (double b : pav)
    for (double off : {-2.0 * eps, -eps, 0.0, eps, 2.0 * eps}) {
      const double s = b + off;
      if (s > lo + 1e-12 && s < hi - 1e-12) snaps.push_back(s);
    }
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end(),
                          [](double a, double b) { return b - a < 1e-12; }),
              snaps.end());

  auto near_frame = [&](double x) {
    double d = std::numeric_limits<double>::infinity();
    for (double b : pav) d = std::min(d, std::abs(x - b));
    return d <= 2.0 * eps * (1.0 + 1e-9);
  };

  std::vector<double> nodes{lo};
  for (std::size_t s = 0; s + 1 < snaps.size(); ++s) {
    const double a = snaps[s], b = snaps[s + 1];
    const double cap = near_frame(0.5 * (a + b))
                           ? std::min(target_h, eps / 3.0)
                           : target_h;
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / cap - 1e-9)));
    for (int i = 1; i <= n; ++i) nodes.push_back(a + (b - a) * i / n);
  }
  nodes.back() = hi;
  return nodes;
}

}  // namespace detail

// Tensor grid satisfying the resolution rule (<= eps/3 next to paving lines)
// and the alignment rule (edges snapped to paving and plateau boundaries).
inline StructuredMesh build_mesh(const Rect& domain, const ContrastField& field,
                                 double target_h) {
  if (!(target_h > 0.0)) throw std::invalid_argument("mesh: target_h must be > 0");
  const Lattice& lat = field.lattice();
  const double eps = field.profile().eps;
  StructuredMesh mesh;
  mesh.x1 = detail::build_axis(domain.x1_lo, domain.x1_hi, lat.l1,
                               field.shift1(), eps, target_h);
  mesh.x2 = detail::build_axis(domain.x2_lo, domain.x2_hi, lat.l2,
                               field.shift2(), eps, target_h);
  if (mesh.element_count() > 10'000'000)
    throw std::invalid_argument("mesh: alignment would require more than 1e7 elements");
  return mesh;
}

// Plain uniform grid, for constant-coefficient (contrast off) runs.
inline StructuredMesh build_uniform_mesh(const Rect& domain, double target_h) {
  if (!(target_h > 0.0)) throw std::invalid_argument("mesh: target_h must be > 0");
  auto axis = [&](double lo, double hi) {
    const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / target_h - 1e-9)));
    std::vector<double> nodes(n + 1);
    for (int i = 0; i <= n; ++i) nodes[i] = lo + (hi - lo) * i / n;
    return nodes;
  };
  StructuredMesh mesh;
  mesh.x1 = axis(domain.x1_lo, domain.x1_hi);
  mesh.x2 = axis(domain.x2_lo, domain.x2_hi);
  if (mesh.element_count() > 10'000'000)
    throw std::invalid_argument("mesh: more than 1e7 elements requested");
  return mesh;
}

}  // namespace bloch
