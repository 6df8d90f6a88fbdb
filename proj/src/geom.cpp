#include "curio/geom.hpp"

#include <algorithm>

namespace curio::geom {

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Vec2 Vec2::normalized() const {
  const double n = norm();
  return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
}

Vec2 Vec2::rotated(double angle) const {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * x - s * y, s * x + c * y};
}

Vec3 Vec3::normalized() const {
  const double n = norm();
  return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
}

static double smallest_positive_root(double a, double b, double c) {
  // Solves a t^2 + b t + c = 0; returns smallest t >= 0 or kInf.
  if (std::abs(a) < 1e-15) {
    if (std::abs(b) < 1e-15) return kInf;
    const double t = -c / b;
    return t >= 0.0 ? t : kInf;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  const double t1 = (-b + sq) / (2.0 * a);
  const double lo = std::min(t0, t1), hi = std::max(t0, t1);
  if (lo >= 0.0) return lo;
  if (hi >= 0.0) return hi;
  return kInf;
}

double intersect(const Ray& r, const Sphere& s) {
  const Vec3 oc = r.origin - s.center;
  const double b = 2.0 * oc.dot(r.dir);
  const double c = oc.dot(oc) - s.radius * s.radius;
  return smallest_positive_root(1.0, b, c);
}

double intersect(const Ray& r, const DiskZ& d) {
  if (std::abs(r.dir.z) < 1e-15) return kInf;
  const double t = (d.z - r.origin.z) / r.dir.z;
  if (t < 0.0) return kInf;
  const Vec2 p{r.origin.x + t * r.dir.x - d.center.x, r.origin.y + t * r.dir.y - d.center.y};
  return p.norm() <= d.radius ? t : kInf;
}

double intersect(const Ray& r, const CylinderZ& c) {
  double best = kInf;
  // Lateral surface.
  const double ox = r.origin.x - c.center.x, oy = r.origin.y - c.center.y;
  const double a = r.dir.x * r.dir.x + r.dir.y * r.dir.y;
  const double b = 2.0 * (ox * r.dir.x + oy * r.dir.y);
  const double k = ox * ox + oy * oy - c.radius * c.radius;
  if (a > 1e-15) {
    const double disc = b * b - 4.0 * a * k;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t < 0.0 || t >= best) continue;
        const double z = r.origin.z + t * r.dir.z;
        if (z >= c.z0 && z <= c.z1) best = t;
      }
    }
  }
  best = std::min(best, intersect(r, DiskZ{c.center, c.radius, c.z0}));
  best = std::min(best, intersect(r, DiskZ{c.center, c.radius, c.z1}));
  return best;
}

double intersect(const Ray& r, const ConeZ& c) {
  double best = kInf;
  const double height = c.z_base - c.z_apex;
  if (std::abs(height) < 1e-12) return kInf;
  // Lateral surface: (x-cx)^2 + (y-cy)^2 = k^2 (z - z_apex)^2 between apex and base.
  const double k = c.radius / height;
  const double ox = r.origin.x - c.center.x, oy = r.origin.y - c.center.y;
  const double oz = r.origin.z - c.z_apex;
  const double a = r.dir.x * r.dir.x + r.dir.y * r.dir.y - k * k * r.dir.z * r.dir.z;
  const double b = 2.0 * (ox * r.dir.x + oy * r.dir.y - k * k * oz * r.dir.z);
  const double q = ox * ox + oy * oy - k * k * oz * oz;
  const double zlo = std::min(c.z_base, c.z_apex), zhi = std::max(c.z_base, c.z_apex);
  const double disc = b * b - 4.0 * a * q;
  if (std::abs(a) > 1e-15 && disc >= 0.0) {
    const double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
      if (t < 0.0 || t >= best) continue;
      const double z = r.origin.z + t * r.dir.z;
      if (z >= zlo && z <= zhi) best = t;
    }
  }
  best = std::min(best, intersect(r, DiskZ{c.center, c.radius, c.z_base}));
  return best;
}

double intersect(const Ray& r, const Capsule& c) {
  double best = kInf;
  const Vec3 axis = c.b - c.a;
  const double len2 = axis.dot(axis);
  if (len2 < 1e-15) return intersect(r, Sphere{c.a, c.radius});
  // Infinite cylinder around the axis, clipped to the segment span.
  const Vec3 d = r.dir, m = r.origin - c.a;
  const Vec3 n = axis * (1.0 / std::sqrt(len2));
  const Vec3 d_perp = d - n * d.dot(n);
  const Vec3 m_perp = m - n * m.dot(n);
  const double a = d_perp.dot(d_perp);
  const double b = 2.0 * d_perp.dot(m_perp);
  const double q = m_perp.dot(m_perp) - c.radius * c.radius;
  if (a > 1e-15) {
    const double disc = b * b - 4.0 * a * q;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t < 0.0 || t >= best) continue;
        const Vec3 p = r.origin + r.dir * t;
        const double s = (p - c.a).dot(n);
        if (s >= 0.0 && s * s <= len2) best = t;
      }
    }
  }
  best = std::min(best, intersect(r, Sphere{c.a, c.radius}));
  best = std::min(best, intersect(r, Sphere{c.b, c.radius}));
  return best;
}

double intersect_ground(const Ray& r, double half_extent) {
  if (std::abs(r.dir.z) < 1e-15) return kInf;
  const double t = -r.origin.z / r.dir.z;
  if (t < 0.0) return kInf;
  const double x = r.origin.x + t * r.dir.x;
  const double y = r.origin.y + t * r.dir.y;
  return (std::abs(x) <= half_extent && std::abs(y) <= half_extent) ? t : kInf;
}

double closest_point_on_segment(const Vec3& a, const Vec3& b, const Vec3& p, Vec3* closest) {
  const Vec3 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 1e-15 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (closest) *closest = a + ab * t;
  return t;
}

void closest_segment_segment(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2,
                             double* s_out, double* t_out, Vec3* c1, Vec3* c2) {
  // Ericson, Real-Time Collision Detection, 5.1.9.
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.dot(d1), e = d2.dot(d2), f = d2.dot(r);
  double s, t;
  if (a <= 1e-15 && e <= 1e-15) {
    s = t = 0.0;
  } else if (a <= 1e-15) {
    s = 0.0;
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-15) {
      t = 0.0;
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-15 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  if (s_out) *s_out = s;
  if (t_out) *t_out = t;
  if (c1) *c1 = p1 + d1 * s;
  if (c2) *c2 = p2 + d2 * t;
}

Overlap2D obb_circle_overlap(const Vec2& box_center, double heading, const Vec2& half_extents,
                             const Vec2& circle_center, double radius) {
  Overlap2D result;
  const Vec2 local = (circle_center - box_center).rotated(-heading);
  const Vec2 clamped{std::clamp(local.x, -half_extents.x, half_extents.x),
                     std::clamp(local.y, -half_extents.y, half_extents.y)};
  const Vec2 delta = local - clamped;
  const double dist = delta.norm();
  if (dist > 1e-12) {
    if (dist >= radius) return result;
    result.hit = true;
    result.depth = radius - dist;
    result.contact_local = clamped;
    result.mtv = delta.normalized().rotated(heading) * result.depth;
    return result;
  }
  // Circle center inside the box: push out through the nearest face.
  const double dx = half_extents.x - std::abs(local.x);
  const double dy = half_extents.y - std::abs(local.y);
  result.hit = true;
  Vec2 dir_local;
  if (dx <= dy) {
    dir_local = {local.x >= 0.0 ? 1.0 : -1.0, 0.0};
    result.depth = dx + radius;
    result.contact_local = {local.x >= 0.0 ? half_extents.x : -half_extents.x, local.y};
  } else {
    dir_local = {0.0, local.y >= 0.0 ? 1.0 : -1.0};
    result.depth = dy + radius;
    result.contact_local = {local.x, local.y >= 0.0 ? half_extents.y : -half_extents.y};
  }
  result.mtv = dir_local.rotated(heading) * result.depth;
  return result;
}

}  // namespace curio::geom
