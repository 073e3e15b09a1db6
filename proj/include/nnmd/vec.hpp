#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>

namespace nnmd {

/// Plain 3-vector of doubles. Value type used for positions, velocities,
/// forces and displacements throughout.
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int k) { return k == 0 ? x : (k == 1 ? y : z); }
  double operator[](int k) const { return k == 0 ? x : (k == 1 ? y : z); }

  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double a) { x *= a; y *= a; z *= a; return *this; }

  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }

  friend double dot(const Vec3& a, const Vec3& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
  }
  friend double norm2(const Vec3& a) { return dot(a, a); }
  friend double norm(const Vec3& a) { return std::sqrt(norm2(a)); }

  bool operator==(const Vec3&) const = default;
};

/// Integer periodic-image shift, one entry per axis.
using IVec3 = std::array<int, 3>;

inline constexpr IVec3 kZeroShift{0, 0, 0};

inline IVec3 operator-(const IVec3& a, const IVec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline IVec3 operator-(const IVec3& a) { return {-a[0], -a[1], -a[2]}; }

/// Canonical image displacement along one axis.
///
/// All pair displacements in the code are computed with exactly this
/// expression, so that the minimum-image path and the ghost/halo path
/// produce bitwise-identical values for the same (pair, shift).
inline double image_delta(double rj, double ri, int shift, double length) {
  return (rj - ri) + static_cast<double>(shift) * length;
}

}  // namespace nnmd
