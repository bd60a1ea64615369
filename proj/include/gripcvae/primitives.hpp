#pragma once

#include <string_view>
#include <variant>

#include "gripcvae/geometry.hpp"

namespace gripcvae {

// All primitives are centred on the origin of their link frame. Capsules and
// cylinders run along the local z axis; `length` is the distance between the
// two cap centres (capsule) or the two flat caps (cylinder).

struct Box {
  Vec3 half_extents;
  bool operator==(const Box&) const = default;
};
struct Capsule {
  double radius;
  double length;
  bool operator==(const Capsule&) const = default;
};
struct Cylinder {
  double radius;
  double length;
  bool operator==(const Cylinder&) const = default;
};
struct Sphere {
  double radius;
  bool operator==(const Sphere&) const = default;
};

using Geometry = std::variant<Box, Capsule, Cylinder, Sphere>;

std::string_view geometry_kind(const Geometry& g);

double surface_area(const Geometry& g);

/// Half extents of the axis-aligned bounding box in the link frame.
Vec3 aabb_half_extents(const Geometry& g);

/// Centre of the axis-aligned bounding box in the link frame.
Vec3 aabb_center(const Geometry& g);

/// Radius of the primitive's thinnest cross-section: the native radius for
/// round primitives, half the smallest bounding-box extent for boxes.
double link_radius(const Geometry& g);

/// Radius of the smallest origin-centred sphere enclosing the primitive.
double bounding_radius(const Geometry& g);

/// Unsigned distance from `p` (link frame) to the primitive's surface.
double surface_distance(const Geometry& g, const Vec3& p);

}  // namespace gripcvae
