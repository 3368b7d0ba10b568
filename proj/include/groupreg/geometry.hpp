#pragma once

// Rigid 2-D transforms and planar homographies.
//
// Coordinates are metric and image-center based: x to the right, y downward,
// 1 px = 1 m after scale normalization. A rigid transform maps a point p to
// R(gamma) * p + v with R(gamma) = [cos -sin; sin cos].

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace groupreg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle into [0, 2*pi).
inline double normalize_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Signed shortest angular difference a - b in [-pi, pi).
inline double angle_diff(double a, double b) {
  double d = normalize_angle(a - b);
  if (d >= std::numbers::pi) d -= kTwoPi;
  return d;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2, Point2) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline Point2 rotate(double gamma, Point2 p) {
  const double c = std::cos(gamma);
  const double s = std::sin(gamma);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(double vx, double vy, double gamma)
      : vx_(vx), vy_(vy), gamma_(normalize_angle(gamma)) {}

  static RigidTransform identity() { return {}; }

  double vx() const { return vx_; }
  double vy() const { return vy_; }
  double gamma() const { return gamma_; }
  Point2 translation() const { return {vx_, vy_}; }

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;

 private:
  double vx_ = 0.0;
  double vy_ = 0.0;
  double gamma_ = 0.0;
};

inline Point2 apply_rigid(const RigidTransform& t, Point2 p) {
  return rotate(t.gamma(), p) + t.translation();
}

inline RigidTransform invert_rigid(const RigidTransform& t) {
  const Point2 v = rotate(-t.gamma(), t.translation());
  return {-v.x, -v.y, -t.gamma()};
}

/// Returns outer o inner, i.e. the transform p -> outer(inner(p)).
inline RigidTransform compose_rigid(const RigidTransform& outer, const RigidTransform& inner) {
  const Point2 v = rotate(outer.gamma(), inner.translation()) + outer.translation();
  return {v.x, v.y, outer.gamma() + inner.gamma()};
}

/// Given tk: image k -> reference and tl: image l -> reference, returns the
/// transform image k -> image l, i.e. inverse(tl) o tk.
inline RigidTransform compose_via_reference(const RigidTransform& tk, const RigidTransform& tl) {
  const Point2 v = rotate(-tl.gamma(), tk.translation() - tl.translation());
  return {v.x, v.y, tk.gamma() - tl.gamma()};
}

/// Text record `vx vy gamma_deg`.
inline std::string format_rigid(const RigidTransform& t) {
  std::ostringstream os;
  os << std::setprecision(17) << t.vx() << ' ' << t.vy() << ' ' << std::setprecision(15) << rad_to_deg(t.gamma());
  return os.str();
}

inline RigidTransform parse_rigid(std::istream& is) {
  double vx, vy, deg;
  if (!(is >> vx >> vy >> deg)) throw Error("malformed rigid transform record");
  return {vx, vy, deg_to_rad(deg)};
}

inline RigidTransform parse_rigid(const std::string& text) {
  std::istringstream is(text);
  return parse_rigid(is);
}

class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}

  /// Normalizes so that h(2,2) == 1 when it is nonzero; throws if singular.
  explicit Homography(const Eigen::Matrix3d& h) : h_(h) {
    if (std::abs(h_(2, 2)) > 0.0) h_ /= h_(2, 2);
    if (!h_.allFinite() || std::abs(h_.determinant()) <= 1e-12) {
      throw Error("numerically singular homography");
    }
  }

  static Homography identity() { return {}; }

  const Eigen::Matrix3d& matrix() const { return h_; }

  Point2 apply(Point2 p) const {
    const Eigen::Vector3d q = h_ * Eigen::Vector3d(p.x, p.y, 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
  }

  Homography inverse() const { return Homography(h_.inverse()); }

 private:
  Eigen::Matrix3d h_;
};

/// Result maps p to a(b(p)).
inline Homography compose_homography(const Homography& a, const Homography& b) {
  return Homography(a.matrix() * b.matrix());
}

inline Homography rigid_to_homography(const RigidTransform& t) {
  const double c = std::cos(t.gamma());
  const double s = std::sin(t.gamma());
  Eigen::Matrix3d h;
  h << c, -s, t.vx(), s, c, t.vy(), 0.0, 0.0, 1.0;
  return Homography(h);
}

/// Nine row-major numbers separated by spaces.
inline std::string format_homography(const Homography& h) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r || c) os << ' ';
      os << h.matrix()(r, c);
    }
  }
  return os.str();
}

inline Homography parse_homography(std::istream& is) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(is >> m(r, c))) throw Error("malformed homography record");
    }
  }
  return Homography(m);
}

}  // namespace groupreg
