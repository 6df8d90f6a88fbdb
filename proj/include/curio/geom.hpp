#pragma once

#include <cmath>
#include <limits>

namespace curio::geom {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
  Vec2 normalized() const;
  Vec2 rotated(double angle) const;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const;
  Vec2 xy() const { return {x, y}; }
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

struct Sphere {
  Vec3 center;
  double radius;
};

// Capped vertical cylinder.
struct CylinderZ {
  Vec2 center;
  double radius;
  double z0, z1;
};

// Vertical circular cone: base circle of the given radius at z_base, apex at
// z_apex. z_apex may be above or below z_base.
struct ConeZ {
  Vec2 center;
  double radius;
  double z_base, z_apex;
};

struct DiskZ {
  Vec2 center;
  double radius;
  double z;
};

struct Capsule {
  Vec3 a, b;
  double radius;
};

// Each returns the smallest hit parameter t >= 0, or kInf on miss.
double intersect(const Ray& r, const Sphere& s);
double intersect(const Ray& r, const CylinderZ& c);
double intersect(const Ray& r, const ConeZ& c);
double intersect(const Ray& r, const DiskZ& d);
double intersect(const Ray& r, const Capsule& c);
// Axis-aligned ground square: plane z = 0 clipped to |x|,|y| <= half_extent.
double intersect_ground(const Ray& r, double half_extent);

// Closest point on segment [a, b] to p; returns the segment parameter in [0, 1].
double closest_point_on_segment(const Vec3& a, const Vec3& b, const Vec3& p, Vec3* closest);

// Closest points between two segments; returns parameters (s, t) in [0, 1].
void closest_segment_segment(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2,
                             double* s, double* t, Vec3* c1, Vec3* c2);

// 2-D overlap between an oriented box (center, heading, half extents) and a
// circle. When hit, mtv is the minimal translation that moves the CIRCLE out
// of the box and contact_local is the contact point in the box frame
// (x forward, y left).
struct Overlap2D {
  bool hit = false;
  Vec2 mtv;
  Vec2 contact_local;
  double depth = 0.0;
};
Overlap2D obb_circle_overlap(const Vec2& box_center, double heading, const Vec2& half_extents,
                             const Vec2& circle_center, double radius);

}  // namespace curio::geom
