// Smooth high-contrast coefficient fields on a rectangular period lattice.
//
// The periodic field equals 1 on the hard core of every cell, eps^(2*gamma)
// on the thin soft frame along cell boundaries, and interpolates smoothly in
// the transition layer between them.  The mirrored and cross variants repave
// the plane by shifting each half plane (or quadrant) outward, which enlarges
// the central column / cross cell while keeping the field reflection
// symmetric about the interface axes.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>

namespace bloch {

// Half-dimensions of the period cell Q = (-l1,l1) x (-l2,l2).
struct Lattice {
  double l1 = 0.7;
  double l2 = 0.5;
};

inline void validate(const Lattice& lat) {
  if (!(lat.l2 > 0.0) || !(lat.l1 >= lat.l2))
    throw std::invalid_argument("lattice: need l1 >= l2 > 0");
}

// Frame thickness eps and contrast exponent gamma; the soft frame carries the
// value eps^(2*gamma) in (0,1).
struct ContrastProfile {
  double eps = 0.04;
  double gamma = 0.75;

  double soft_value() const { return std::pow(eps, 2.0 * gamma); }
};

inline void validate(const ContrastProfile& p, const Lattice& lat) {
  if (!(p.eps > 0.0) || !(p.eps < lat.l2))
    throw std::invalid_argument("profile: need 0 < eps < l2");
  if (!(p.gamma > 0.5) || !(p.gamma < 1.0))
    throw std::invalid_argument("profile: need gamma in (1/2, 1)");
}

struct Periodic {};

// Half planes x1 > 0 and x1 < 0 shifted outward by h: the central column of
// cells widens to 2*(l1 + h).
struct Mirrored {
  double h = 0.35;
};

// Both axes shifted outward: an enlarged row, an enlarged column, and the
// enlarged cross cell at their intersection.  h1 = h2 = 0 degenerates to the
// periodic medium (used as a control).
struct XDefect {
  double h1 = 0.5;
  double h2 = 0.45;
};

using FieldVariant = std::variant<Periodic, Mirrored, XDefect>;

// C^2 monotone step: 0 for t <= 1, 1 for t >= 2, quintic smoothstep between.
// sup |S'| = 1.875, attained mid-layer.
inline double transition_profile(double t) {
  if (t <= 1.0) return 0.0;
  if (t >= 2.0) return 1.0;
  const double s = t - 1.0;
  return ((6.0 * s - 15.0) * s + 10.0) * s * s * s;
}

// Distance from a point of the closed reference cell to the cell boundary,
// taken per edge pair: rho(x) = min(l1 - |x1|, l2 - |x2|).
inline double frame_distance(const Lattice& lat, double x1, double x2) {
  const double d = std::min(lat.l1 - std::abs(x1), lat.l2 - std::abs(x2));
  return std::max(d, 0.0);
}

// Immutable, pointwise-evaluable coefficient a(x).  Evaluation is pure and
// thread safe.
class ContrastField {
 public:
  ContrastField(Lattice lat, ContrastProfile prof, FieldVariant var = Periodic{})
      : lat_(lat), prof_(prof), var_(var), soft_(prof.soft_value()) {
    validate(lat_);
    validate(prof_, lat_);
    if (const auto* m = std::get_if<Mirrored>(&var_)) {
      if (!(m->h >= 0.0) || !(m->h < lat_.l1))
        throw std::invalid_argument("mirrored: need 0 <= h < l1");
      if (!(prof_.eps < (lat_.l1 - m->h) / 4.0))
        throw std::invalid_argument(
            "mirrored: need eps < (l1 - h)/4 so shifted frames stay clear of "
            "the interface line");
    } else if (const auto* x = std::get_if<XDefect>(&var_)) {
      if (!(x->h1 >= 0.0) || !(x->h1 < lat_.l1) || !(x->h2 >= 0.0) ||
          !(x->h2 < lat_.l2))
        throw std::invalid_argument("x-defect: need h_j in [0, l_j)");
    }
  }

  const Lattice& lattice() const { return lat_; }
  const ContrastProfile& profile() const { return prof_; }
  const FieldVariant& variant() const { return var_; }

  bool is_periodic() const { return std::holds_alternative<Periodic>(var_); }

  // Outward shift applied on each side of the axis, per coordinate.
  double shift1() const {
    if (const auto* m = std::get_if<Mirrored>(&var_)) return m->h;
    if (const auto* x = std::get_if<XDefect>(&var_)) return x->h1;
    return 0.0;
  }
  double shift2() const {
    if (const auto* x = std::get_if<XDefect>(&var_)) return x->h2;
    return 0.0;
  }

  double operator()(double x1, double x2) const {
    const double u1 = shifted(x1, shift1());
    const double u2 = shifted(x2, shift2());
    return cell_value(fold(u1, lat_.l1), fold(u2, lat_.l2));
  }

 private:
  static double shifted(double x, double h) {
    if (h == 0.0) return x;
    return x >= 0.0 ? x - h : x + h;
  }

  // Reduce to the reference cell [-l, l].
  static double fold(double x, double l) {
    return x - 2.0 * l * std::round(x / (2.0 * l));
  }

  double cell_value(double r1, double r2) const {
    const double rho = frame_distance(lat_, r1, r2);
    const double s = transition_profile(rho / prof_.eps);
    return soft_ + (1.0 - soft_) * s;
  }

  Lattice lat_;
  ContrastProfile prof_;
  FieldVariant var_;
  double soft_;
};

inline double eval_coefficient(const ContrastField& field, double x1, double x2) {
  return field(x1, x2);
}

}  // namespace bloch
