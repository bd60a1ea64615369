#include "gripcvae/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gripcvae {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kPi = std::numbers::pi;
}  // namespace

std::string_view geometry_kind(const Geometry& g) {
  return std::visit(overloaded{[](const Box&) { return std::string_view("box"); },
                               [](const Capsule&) { return std::string_view("capsule"); },
                               [](const Cylinder&) { return std::string_view("cylinder"); },
                               [](const Sphere&) { return std::string_view("sphere"); }},
                    g);
}

double surface_area(const Geometry& g) {
  return std::visit(
      overloaded{[](const Box& b) {
                   const Vec3 e = 2.0 * b.half_extents;
                   return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
                 },
                 [](const Capsule& c) {
                   return 2.0 * kPi * c.radius * c.length + 4.0 * kPi * c.radius * c.radius;
                 },
                 [](const Cylinder& c) {
                   return 2.0 * kPi * c.radius * c.length + 2.0 * kPi * c.radius * c.radius;
                 },
                 [](const Sphere& s) { return 4.0 * kPi * s.radius * s.radius; }},
      g);
}

Vec3 aabb_half_extents(const Geometry& g) {
  return std::visit(overloaded{[](const Box& b) -> Vec3 { return b.half_extents; },
                               [](const Capsule& c) -> Vec3 {
                                 return {c.radius, c.radius, 0.5 * c.length + c.radius};
                               },
                               [](const Cylinder& c) -> Vec3 {
                                 return {c.radius, c.radius, 0.5 * c.length};
                               },
                               [](const Sphere& s) -> Vec3 {
                                 return Vec3::Constant(s.radius);
                               }},
                    g);
}

Vec3 aabb_center(const Geometry& g) {
  // Every supported primitive is symmetric about its frame origin, so the box
  // is symmetric too: centre = (min + max) / 2.
  const Vec3 h = aabb_half_extents(g);
  return 0.5 * (h + (-h));
}

double link_radius(const Geometry& g) {
  return std::visit(overloaded{[](const Box& b) { return b.half_extents.minCoeff(); },
                               [](const Capsule& c) { return c.radius; },
                               [](const Cylinder& c) { return c.radius; },
                               [](const Sphere& s) { return s.radius; }},
                    g);
}

double bounding_radius(const Geometry& g) {
  return std::visit(
      overloaded{[](const Box& b) { return b.half_extents.norm(); },
                 [](const Capsule& c) { return 0.5 * c.length + c.radius; },
                 [](const Cylinder& c) { return std::hypot(c.radius, 0.5 * c.length); },
                 [](const Sphere& s) { return s.radius; }},
      g);
}

double surface_distance(const Geometry& g, const Vec3& p) {
  return std::visit(
      overloaded{
          [&](const Box& b) {
            const Vec3 q = p.cwiseAbs() - b.half_extents;
            const double outside = q.cwiseMax(0.0).norm();
            const double inside = std::min(q.maxCoeff(), 0.0);
            return std::abs(outside + inside);
          },
          [&](const Capsule& c) {
            const double h = 0.5 * c.length;
            const Vec3 axis_point(0.0, 0.0, std::clamp(p.z(), -h, h));
            return std::abs((p - axis_point).norm() - c.radius);
          },
          [&](const Cylinder& c) {
            const double h = 0.5 * c.length;
            const double dr = std::hypot(p.x(), p.y()) - c.radius;
            const double dz = std::abs(p.z()) - h;
            const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
            const double inside = std::min(std::max(dr, dz), 0.0);
            return std::abs(outside + inside);
          },
          [&](const Sphere& s) { return std::abs(p.norm() - s.radius); }},
      g);
}

}  // namespace gripcvae
