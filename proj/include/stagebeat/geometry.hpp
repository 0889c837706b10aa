#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace stagebeat {

/// Logical session time in milliseconds. Always injected by the caller.
using Millis = std::int64_t;

/// Scene-space vector in meters. The stage plane is y = 0 with y up.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(Vec3 o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
  Vec3 horizontal() const { return {x, 0.0, z}; }
};

inline double distance(Vec3 a, Vec3 b) { return (a - b).norm(); }

/// Axis-aligned box, inclusive on every face.
struct Box {
  Vec3 min;
  Vec3 max;

  bool contains(Vec3 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  Vec3 clamp(Vec3 p) const {
    return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y),
            std::clamp(p.z, min.z, max.z)};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace stagebeat
