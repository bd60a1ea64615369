#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gripcvae/hand_model.hpp"
#include "gripcvae/random.hpp"

namespace gripcvae {

enum class Variant : std::uint8_t { FullyDense = 0, Cluster = 1, Handprint = 2 };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

enum class Allocation : std::uint8_t { AreaWeighted, EqualPerLink };

struct SamplingSpec {
  Variant variant = Variant::FullyDense;
  /// Surface samples drawn for the template. Fully Dense clouds keep all of
  /// them; Cluster and Handprint keep a configuration-independent subset.
  std::size_t total_points = 512;
  double cluster_radius_fraction = 0.5;
  double handprint_dot_threshold = 0.0;
  std::uint64_t seed = 0;
  Allocation allocation = Allocation::AreaWeighted;
  /// When > 1, draw total_points * fps_oversample samples and keep
  /// total_points of them by farthest-point subsampling at the nominal pose.
  std::size_t fps_oversample = 1;

  void validate(const HandModel& model) const;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<std::uint16_t> link_ids;
  Variant variant = Variant::FullyDense;

  std::size_t size() const { return points.size(); }
};

/// Largest-remainder allocation of `total` samples proportional to `weights`
/// with at least one sample per entry. Ties go to the lower index.
std::vector<std::size_t> allocate_points(std::span<const double> weights, std::size_t total);

/// Draws one uniform-by-area sample on a primitive surface with its analytic
/// outward normal.
void sample_surface(const Geometry& geometry, Rng& rng, Vec3& point, Vec3& normal);

/// Uniform area-weighted samples on every link, expressed in each link's
/// geometry frame. Points of a link are contiguous and links appear in model order.
PointCloud sample_link_surfaces(const HandModel& model, const SamplingSpec& spec);

/// Link-frame samples plus the indices kept for the spec's variant.
struct CloudTemplate {
  SamplingSpec spec;
  PointCloud local;
  std::vector<std::uint32_t> selection;

  std::size_t output_size() const { return selection.size(); }
};

/// Indices of template points within R = fraction * link_radius of their
/// link's inner point (link frame). Throws if a link ends up empty.
std::vector<std::uint32_t> cluster_mask(const HandModel& model, const PointCloud& local,
                                        double radius_fraction);

/// Indices whose normal, at the all-zero-radian pose, has a dot product with
/// the world palm normal strictly greater than `threshold`.
std::vector<std::uint32_t> handprint_mask(const HandModel& model, const PointCloud& local,
                                          double threshold);

CloudTemplate make_template(const HandModel& model, const SamplingSpec& spec);

PointCloud build_fully_dense(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl);
PointCloud build_cluster(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl);
PointCloud build_handprint(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl);

/// Dispatches on tmpl.spec.variant.
PointCloud build_cloud(const HandModel& model, const JointConfig& q, const CloudTemplate& tmpl);

/// Maps the template's selected points into the world with per-link transforms.
PointCloud place_template(const CloudTemplate& tmpl, std::span<const RigidTransform> transforms);

}  // namespace gripcvae
