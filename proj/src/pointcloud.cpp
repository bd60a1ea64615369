#include "gripcvae/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "gripcvae/errors.hpp"

namespace gripcvae {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 unit_sphere(Rng& rng) {
  const double z = 1.0 - 2.0 * rng.uniform();
  const double phi = kTwoPi * rng.uniform();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

std::vector<std::uint32_t> all_indices(std::size_t n) {
  std::vector<std::uint32_t> out(n);
  std::iota(out.begin(), out.end(), 0u);
  return out;
}

void require_variant(const CloudTemplate& tmpl, Variant v) {
  if (tmpl.spec.variant != v)
    throw ValidationError("template was built for the " + variant_name(tmpl.spec.variant) +
                          " variant, not " + variant_name(v));
}

/// Farthest-point subsampling started from index 0; returns sorted indices.
std::vector<std::uint32_t> farthest_points(std::span<const Vec3> points, std::size_t keep) {
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> chosen;
  chosen.reserve(keep);
  std::uint32_t current = 0;
  for (std::size_t k = 0; k < keep; ++k) {
    chosen.push_back(current);
    std::uint32_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist[i] = std::min(dist[i], (points[i] - points[current]).squaredNorm());
      if (dist[i] > best) {
        best = dist[i];
        next = static_cast<std::uint32_t>(i);
      }
    }
    current = next;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::FullyDense:
      return "dense";
    case Variant::Cluster:
      return "cluster";
    case Variant::Handprint:
      return "handprint";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "dense") return Variant::FullyDense;
  if (name == "cluster") return Variant::Cluster;
  if (name == "handprint") return Variant::Handprint;
  throw ValidationError("unknown variant '" + name + "' (expected dense, cluster or handprint)");
}

void SamplingSpec::validate(const HandModel& model) const {
  if (total_points < model.link_count())
    throw ValidationError("total_points (" + std::to_string(total_points) +
                          ") must be at least the link count (" + std::to_string(model.link_count()) + ")");
  if (!(cluster_radius_fraction > 0.0 && cluster_radius_fraction <= 1.0))
    throw ValidationError("cluster_radius_fraction must be in (0, 1]");
  if (fps_oversample == 0) throw ValidationError("fps_oversample must be at least 1");
  if (model.link_count() > std::numeric_limits<std::uint16_t>::max())
    throw ValidationError("too many links for 16-bit link ids");
}

std::vector<std::size_t> allocate_points(std::span<const double> weights, std::size_t total) {
  const std::size_t n = weights.size();
  if (n == 0) return {};
  if (total < n) throw ValidationError("cannot give every link a point: fewer points than links");
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw ValidationError("zero total surface area");

  std::vector<std::size_t> counts(n);
  std::vector<double> remainder(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % n]];

  // Guarantee one point per link by taking from the largest allocation.
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] > 0) continue;
    const auto donor = static_cast<std::size_t>(
        std::distance(counts.begin(), std::max_element(counts.begin(), counts.end())));
    --counts[donor];
    counts[i] = 1;
  }
  return counts;
}

void sample_surface(const Geometry& geometry, Rng& rng, Vec3& point, Vec3& normal) {
  if (const auto* box = std::get_if<Box>(&geometry)) {
    const Vec3& h = box->half_extents;
    const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
    const double pick = rng.uniform() * (areas[0] + areas[1] + areas[2]);
    const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    point[axis] = sign * h[axis];
    point[u] = rng.uniform(-h[u], h[u]);
    point[v] = rng.uniform(-h[v], h[v]);
    normal = Vec3::Zero();
    normal[axis] = sign;
  } else if (const auto* cap = std::get_if<Capsule>(&geometry)) {
    const double side = kTwoPi * cap->radius * cap->length;
    const double ends = 2.0 * kTwoPi * cap->radius * cap->radius;
    if (rng.uniform() * (side + ends) < side) {
      const double phi = kTwoPi * rng.uniform();
      normal = Vec3(std::cos(phi), std::sin(phi), 0.0);
      point = cap->radius * normal;
      point.z() = rng.uniform(-0.5 * cap->length, 0.5 * cap->length);
    } else {
      normal = unit_sphere(rng);
      point = cap->radius * normal;
      point.z() += (normal.z() >= 0.0 ? 0.5 : -0.5) * cap->length;
    }
  } else if (const auto* cyl = std::get_if<Cylinder>(&geometry)) {
    const double side = kTwoPi * cyl->radius * cyl->length;
    const double ends = kTwoPi * cyl->radius * cyl->radius;
    if (rng.uniform() * (side + ends) < side) {
      const double phi = kTwoPi * rng.uniform();
      normal = Vec3(std::cos(phi), std::sin(phi), 0.0);
      point = cyl->radius * normal;
      point.z() = rng.uniform(-0.5 * cyl->length, 0.5 * cyl->length);
    } else {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double r = cyl->radius * std::sqrt(rng.uniform());
      const double phi = kTwoPi * rng.uniform();
      point = Vec3(r * std::cos(phi), r * std::sin(phi), sign * 0.5 * cyl->length);
      normal = Vec3(0.0, 0.0, sign);
    }
  } else {
    const auto& sphere = std::get<Sphere>(geometry);
    point = sphere.radius * unit_sphere(rng);
    normal = point / point.norm();
  }
}

PointCloud sample_link_surfaces(const HandModel& model, const SamplingSpec& spec) {
  spec.validate(model);
  const std::size_t drawn = spec.total_points * spec.fps_oversample;
  std::vector<double> weights(model.link_count());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = spec.allocation == Allocation::AreaWeighted ? model.links[i].surface_area : 1.0;
    if (!(model.links[i].surface_area > 0.0))
      throw ValidationError("link '" + model.links[i].name + "' has zero surface area");
  }
  const auto counts = allocate_points(weights, drawn);

  PointCloud cloud;
  cloud.variant = spec.variant;
  cloud.points.reserve(drawn);
  cloud.normals.reserve(drawn);
  cloud.link_ids.reserve(drawn);
  for (std::size_t link = 0; link < counts.size(); ++link) {
    Rng rng(mix_seed(spec.seed, link));
    for (std::size_t k = 0; k < counts[link]; ++k) {
      Vec3 p, n;
      sample_surface(model.links[link].geometry, rng, p, n);
      cloud.points.push_back(p);
      cloud.normals.push_back(n);
      cloud.link_ids.push_back(static_cast<std::uint16_t>(link));
    }
  }

  if (spec.fps_oversample > 1) {
    const std::vector<double> zeros(model.joint_count(), 0.0);
    const auto transforms = forward_kinematics_radians(model, zeros);
    std::vector<Vec3> world(cloud.size());
    for (std::size_t i = 0; i < world.size(); ++i)
      world[i] = transforms[cloud.link_ids[i]].apply(cloud.points[i]);
    const auto keep = farthest_points(world, spec.total_points);
    PointCloud sub;
    sub.variant = spec.variant;
    for (auto i : keep) {
      sub.points.push_back(cloud.points[i]);
      sub.normals.push_back(cloud.normals[i]);
      sub.link_ids.push_back(cloud.link_ids[i]);
    }
    cloud = std::move(sub);
  }
  return cloud;
}

std::vector<std::uint32_t> cluster_mask(const HandModel& model, const PointCloud& local,
                                        double radius_fraction) {
  std::vector<std::uint32_t> keep;
  std::vector<std::size_t> per_link(model.link_count(), 0);
  for (std::size_t i = 0; i < local.size(); ++i) {
    const Link& link = model.links[local.link_ids[i]];
    const double radius = radius_fraction * link_radius(link.geometry);
    if ((local.points[i] - link.inner_point).norm() <= radius) {
      keep.push_back(static_cast<std::uint32_t>(i));
      ++per_link[local.link_ids[i]];
    }
  }
  for (std::size_t l = 0; l < per_link.size(); ++l)
    if (per_link[l] == 0)
      throw ValidationError("cluster for link '" + model.links[l].name +
                            "' is empty; increase the point count or the cluster radius");
  return keep;
}

std::vector<std::uint32_t> handprint_mask(const HandModel& model, const PointCloud& local,
                                          double threshold) {
  const std::vector<double> zeros(model.joint_count(), 0.0);
  const auto transforms = forward_kinematics_radians(model, zeros);
  const Vec3 palm_normal = transforms[model.palm_link].rotate(model.palm_normal);
  std::vector<std::uint32_t> keep;
  for (std::size_t i = 0; i < local.size(); ++i) {
    const Vec3 n = transforms[local.link_ids[i]].rotate(local.normals[i]);
    if (n.dot(palm_normal) > threshold) keep.push_back(static_cast<std::uint32_t>(i));
  }
  if (keep.empty()) throw ValidationError("handprint mask is empty");
  return keep;
}

CloudTemplate make_template(const HandModel& model, const SamplingSpec& spec) {
  CloudTemplate tmpl;
  tmpl.spec = spec;
  tmpl.local = sample_link_surfaces(model, spec);
  switch (spec.variant) {
    case Variant::FullyDense:
      tmpl.selection = all_indices(tmpl.local.size());
      break;
    case Variant::Cluster:
      tmpl.selection = cluster_mask(model, tmpl.local, spec.cluster_radius_fraction);
      break;
    case Variant::Handprint:
      tmpl.selection = handprint_mask(model, tmpl.local, spec.handprint_dot_threshold);
      break;
  }
  return tmpl;
}

PointCloud place_template(const CloudTemplate& tmpl, std::span<const RigidTransform> transforms) {
  PointCloud cloud;
  cloud.variant = tmpl.spec.variant;
  const std::size_t n = tmpl.selection.size();
  cloud.points.resize(n);
  cloud.normals.resize(n);
  cloud.link_ids.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t i = tmpl.selection[k];
    const std::uint16_t link = tmpl.local.link_ids[i];
    const RigidTransform& t = transforms[link];
    cloud.points[k] = t.apply(tmpl.local.points[i]);
    cloud.normals[k] = t.rotate(tmpl.local.normals[i]);
    cloud.link_ids[k] = link;
  }
  return cloud;
}

PointCloud build_fully_dense(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl) {
  require_variant(tmpl, Variant::FullyDense);
  return place_template(tmpl, forward_kinematics(model, q));
}

PointCloud build_cluster(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl) {
  require_variant(tmpl, Variant::Cluster);
  return place_template(tmpl, forward_kinematics(model, q));
}

PointCloud build_handprint(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl) {
  require_variant(tmpl, Variant::Handprint);
  return place_template(tmpl, forward_kinematics(model, q));
}

PointCloud build_cloud(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl) {
  return place_template(tmpl, forward_kinematics(model, q));
}

}  // namespace gripcvae
