#include "gripcvae/hand_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "gripcvae/errors.hpp"

namespace gripcvae {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

constexpr double kUnitTolerance = 1e-9;
constexpr double kSurfaceTolerance = 1e-6;

std::vector<double> parse_numbers(const std::string& text, const std::string& where) {
  std::vector<double> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    const char* tok = p;
    while (p < end && !std::isspace(static_cast<unsigned char>(*p))) ++p;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok, p, v);
    if (ec != std::errc() || ptr != p)
      throw ParseError(where + ": '" + std::string(tok, p) + "' is not a number");
    out.push_back(v);
  }
  return out;
}

double parse_scalar(const std::string& text, const std::string& where) {
  const auto v = parse_numbers(text, where);
  if (v.size() != 1) throw ParseError(where + ": expected one number, got '" + text + "'");
  return v[0];
}

Vec3 parse_vec3(const std::string& text, const std::string& where) {
  const auto v = parse_numbers(text, where);
  if (v.size() != 3) throw ParseError(where + ": expected three numbers, got '" + text + "'");
  return {v[0], v[1], v[2]};
}

const pt::ptree* attributes(const pt::ptree& node) {
  return node.get_child_optional("<xmlattr>").get_ptr();
}

std::string attr(const pt::ptree& node, const std::string& key, const std::string& where) {
  const pt::ptree* a = attributes(node);
  if (a == nullptr || !a->get_child_optional(key))
    throw ParseError(where + ": missing attribute '" + key + "'");
  return a->get<std::string>(key);
}

std::string attr_or(const pt::ptree& node, const std::string& key, const std::string& fallback) {
  const pt::ptree* a = attributes(node);
  if (a == nullptr) return fallback;
  return a->get<std::string>(key, fallback);
}

Pose parse_origin(const pt::ptree& node, const std::string& where) {
  Pose pose;
  pose.xyz = parse_vec3(attr_or(node, "xyz", "0 0 0"), where + " origin xyz");
  pose.rpy = parse_vec3(attr_or(node, "rpy", "0 0 0"), where + " origin rpy");
  return pose;
}

Geometry parse_geometry(const pt::ptree& node, const std::string& where) {
  std::optional<Geometry> geometry;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>") continue;
    if (geometry) throw ParseError(where + ": more than one primitive in <geometry>");
    const std::string here = where + " <" + tag + ">";
    if (tag == "box") {
      const Vec3 size = parse_vec3(attr(child, "size", here), here + " size");
      geometry = Box{0.5 * size};
    } else if (tag == "capsule") {
      geometry = Capsule{parse_scalar(attr(child, "radius", here), here + " radius"),
                         parse_scalar(attr(child, "length", here), here + " length")};
    } else if (tag == "cylinder") {
      geometry = Cylinder{parse_scalar(attr(child, "radius", here), here + " radius"),
                          parse_scalar(attr(child, "length", here), here + " length")};
    } else if (tag == "sphere") {
      geometry = Sphere{parse_scalar(attr(child, "radius", here), here + " radius")};
    } else {
      throw UnsupportedError(where + ": unsupported element <" + tag + ">");
    }
  }
  if (!geometry) throw ParseError(where + ": empty <geometry>");
  return *geometry;
}

struct GeometryBlock {
  Geometry geometry;
  Pose origin;
};

GeometryBlock parse_geometry_block(const pt::ptree& node, const std::string& where) {
  std::optional<Geometry> geometry;
  Pose origin;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>") continue;
    if (tag == "origin") {
      origin = parse_origin(child, where);
    } else if (tag == "geometry") {
      geometry = parse_geometry(child, where);
    } else if (tag == "material") {
      continue;
    } else {
      throw UnsupportedError(where + ": unsupported element <" + tag + ">");
    }
  }
  if (!geometry) throw ParseError(where + ": missing <geometry>");
  return {*geometry, origin};
}

Link parse_link(const pt::ptree& node) {
  Link link;
  link.name = attr(node, "name", "<link>");
  const std::string where = "link '" + link.name + "'";
  std::optional<GeometryBlock> collision;
  std::optional<GeometryBlock> visual;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>" || tag == "inertial") continue;
    if (tag == "collision") {
      if (collision) throw ParseError(where + ": more than one <collision>");
      collision = parse_geometry_block(child, where);
    } else if (tag == "visual") {
      if (visual) throw ParseError(where + ": more than one <visual>");
      visual = parse_geometry_block(child, where);
    } else {
      throw UnsupportedError(where + ": unsupported element <" + tag + ">");
    }
  }
  const auto& block = collision ? collision : visual;
  if (!block) throw ValidationError(where + ": no <collision> or <visual> geometry");
  link.geometry = block->geometry;
  link.local = block->origin;
  return link;
}

struct RawJoint {
  Joint joint;
  std::string parent;
  std::string child;
};

RawJoint parse_joint(const pt::ptree& node) {
  RawJoint raw;
  raw.joint.name = attr(node, "name", "<joint>");
  const std::string where = "joint '" + raw.joint.name + "'";
  const std::string type = attr(node, "type", where);
  if (type != "revolute")
    throw UnsupportedError(where + ": unsupported joint type '" + type +
                           "' (only revolute joints are supported)");
  bool have_limit = false;
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>") continue;
    if (tag == "parent") {
      raw.parent = attr(child, "link", where + " <parent>");
    } else if (tag == "child") {
      raw.child = attr(child, "link", where + " <child>");
    } else if (tag == "origin") {
      raw.joint.origin = parse_origin(child, where);
    } else if (tag == "axis") {
      raw.joint.axis = parse_vec3(attr(child, "xyz", where + " <axis>"), where + " axis");
    } else if (tag == "limit") {
      raw.joint.limit_lo = parse_scalar(attr(child, "lower", where + " <limit>"), where + " lower");
      raw.joint.limit_hi = parse_scalar(attr(child, "upper", where + " <limit>"), where + " upper");
      have_limit = true;
    } else if (tag == "dynamics") {
      continue;
    } else {
      throw UnsupportedError(where + ": unsupported element <" + tag + ">");
    }
  }
  if (raw.parent.empty()) throw ParseError(where + ": missing <parent>");
  if (raw.child.empty()) throw ParseError(where + ": missing <child>");
  if (!have_limit) throw ParseError(where + ": revolute joint without <limit>");
  return raw;
}

Vec3 json_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError(where + ": expected an array of three numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(where + ": expected an array of three numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_vec3(const Vec3& v) {
  return fmt_double(v.x()) + " " + fmt_double(v.y()) + " " + fmt_double(v.z());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// HandModel

std::size_t HandModel::link_index(const std::string& link_name) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].name == link_name) return i;
  throw ValidationError("unknown link '" + link_name + "'");
}

void HandModel::finalize() {
  if (links.empty()) throw ValidationError("hand '" + name + "' has no links");
  if (palm_link >= links.size()) throw ValidationError("palm link index out of range");

  for (std::size_t i = 0; i < links.size(); ++i)
    for (std::size_t k = i + 1; k < links.size(); ++k)
      if (links[i].name == links[k].name)
        throw ValidationError("duplicate link name '" + links[i].name + "'");

  parent_joint_.assign(links.size(), kNoParent);
  for (std::size_t j = 0; j < joints.size(); ++j) {
    Joint& joint = joints[j];
    const std::string where = "joint '" + joint.name + "'";
    if (joint.parent_link >= links.size() || joint.child_link >= links.size())
      throw ValidationError(where + ": references a missing link");
    if (parent_joint_[joint.child_link] != kNoParent)
      throw ValidationError("link '" + links[joint.child_link].name +
                            "' is the child of more than one joint");
    parent_joint_[joint.child_link] = j;
    if (!(joint.limit_lo < joint.limit_hi))
      throw ValidationError(where + ": lower limit must be below upper limit");
    const double n = joint.axis.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError(where + ": zero axis");
    joint.axis /= n;
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < links.size(); ++i)
    if (parent_joint_[i] == kNoParent) roots.push_back(i);
  if (roots.size() != 1 || roots[0] != palm_link) {
    if (parent_joint_[palm_link] != kNoParent)
      throw ValidationError("palm link '" + links[palm_link].name + "' has a parent joint");
    std::string names;
    for (auto r : roots)
      if (r != palm_link) names += (names.empty() ? "" : ", ") + links[r].name;
    throw ValidationError("link graph is disconnected: '" + names +
                          "' not attached to the palm");
  }

  // Breadth-first traversal from the palm; anything left over sits on a cycle.
  order_.clear();
  order_.push_back(palm_link);
  std::vector<bool> seen(links.size(), false);
  seen[palm_link] = true;
  for (std::size_t head = 0; head < order_.size(); ++head) {
    for (std::size_t j = 0; j < joints.size(); ++j) {
      if (joints[j].parent_link != order_[head]) continue;
      const std::size_t child = joints[j].child_link;
      if (seen[child]) throw ValidationError("link graph has a cycle through '" + links[child].name + "'");
      seen[child] = true;
      order_.push_back(child);
    }
  }
  if (order_.size() != links.size()) {
    for (std::size_t i = 0; i < links.size(); ++i)
      if (!seen[i]) throw ValidationError("link graph has a cycle through '" + links[i].name + "'");
  }

  const double pn = palm_normal.norm();
  if (!(pn > 0.0) || !std::isfinite(pn)) throw ValidationError("palm normal is zero");
  palm_normal /= pn;
  if (std::abs(palm_normal.norm() - 1.0) > kUnitTolerance)
    throw ValidationError("palm normal could not be normalized");

  for (Link& link : links) {
    const std::string where = "link '" + link.name + "'";
    link.surface_area = surface_area(link.geometry);
    if (!(link.surface_area > 0.0) || !std::isfinite(link.surface_area))
      throw ValidationError(where + ": geometry has zero surface area");
    link.keypoint = aabb_center(link.geometry);
    const double d = surface_distance(link.geometry, link.inner_point);
    if (d > kSurfaceTolerance)
      throw ValidationError(where + ": inner point is " + fmt_double(d) +
                            " mm away from the surface");
  }
}

std::vector<std::size_t> HandModel::ancestor_joints(std::size_t link) const {
  std::vector<std::size_t> out;
  for (std::size_t j = parent_joint_.at(link); j != kNoParent; j = parent_joint_[joints[j].parent_link])
    out.push_back(j);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> HandModel::subtree_links(std::size_t joint) const {
  std::vector<std::size_t> out;
  for (std::size_t link : order_) {
    for (std::size_t j = parent_joint_[link]; j != kNoParent; j = parent_joint_[joints[j].parent_link]) {
      if (j == joint) {
        out.push_back(link);
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::size_t>> HandModel::chains() const {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> roots;
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (joints[j].parent_link == palm_link) roots.push_back(j);
  for (std::size_t root : roots) {
    const auto sub = subtree_links(root);
    std::vector<std::size_t> chain;
    for (std::size_t j = 0; j < joints.size(); ++j)
      if (std::find(sub.begin(), sub.end(), joints[j].child_link) != sub.end()) chain.push_back(j);
    out.push_back(std::move(chain));
  }
  return out;
}

std::vector<std::string> HandModel::chain_names() const {
  std::vector<std::string> out;
  for (const auto& chain : chains()) out.push_back(links[joints[chain.front()].child_link].name);
  return out;
}

// ---------------------------------------------------------------------------
// JointConfig

double denormalize(const Joint& joint, double normalized) {
  return joint.limit_lo + normalized * (joint.limit_hi - joint.limit_lo);
}

double normalize(const Joint& joint, double radians) {
  return (radians - joint.limit_lo) / (joint.limit_hi - joint.limit_lo);
}

JointConfig::JointConfig(std::vector<double> normalized) : values_(std::move(normalized)) {
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
      throw ValidationError("normalized joint value " + std::to_string(i) + " = " +
                            fmt_double(values_[i]) + " is outside [0, 1]");
}

JointConfig JointConfig::from_radians(const HandModel& model, std::span<const double> radians) {
  if (radians.size() != model.joint_count())
    throw DimensionError("expected " + std::to_string(model.joint_count()) + " joint values, got " +
                         std::to_string(radians.size()));
  std::vector<double> v(radians.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = normalize(model.joints[i], radians[i]);
  return JointConfig(std::move(v));
}

JointConfig JointConfig::nominal(const HandModel& model) {
  const std::vector<double> zeros(model.joint_count(), 0.0);
  return from_radians(model, zeros);
}

std::vector<double> JointConfig::radians(const HandModel& model) const {
  if (values_.size() != model.joint_count())
    throw DimensionError("joint config has " + std::to_string(values_.size()) + " values, hand has " +
                         std::to_string(model.joint_count()) + " joints");
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = denormalize(model.joints[i], values_[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing and serialization

HandModel parse_hand(const std::string& urdf_text, const std::string& annotations_text) {
  pt::ptree tree;
  try {
    std::istringstream in(urdf_text);
    pt::read_xml(in, tree, pt::xml_parser::no_comments | pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("URDF syntax error: " + e.message(), e.line());
  }

  const pt::ptree* robot = nullptr;
  for (const auto& [tag, child] : tree) {
    if (tag == "robot" && robot == nullptr) {
      robot = &child;
    } else {
      throw UnsupportedError("unsupported top-level element <" + tag + ">");
    }
  }
  if (robot == nullptr) throw ParseError("missing <robot> element");

  HandModel model;
  model.name = attr(*robot, "name", "<robot>");
  std::vector<RawJoint> raw_joints;
  for (const auto& [tag, child] : *robot) {
    if (tag == "<xmlattr>") continue;
    if (tag == "link") {
      model.links.push_back(parse_link(child));
    } else if (tag == "joint") {
      raw_joints.push_back(parse_joint(child));
    } else {
      throw UnsupportedError("unsupported element <" + tag + "> in <robot>");
    }
  }

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < model.links.size(); ++i) index[model.links[i].name] = i;
  for (auto& raw : raw_joints) {
    const std::string where = "joint '" + raw.joint.name + "'";
    auto p = index.find(raw.parent);
    if (p == index.end()) throw ValidationError(where + ": unknown parent link '" + raw.parent + "'");
    auto c = index.find(raw.child);
    if (c == index.end()) throw ValidationError(where + ": unknown child link '" + raw.child + "'");
    raw.joint.parent_link = p->second;
    raw.joint.child_link = c->second;
    model.joints.push_back(raw.joint);
  }

  json ann;
  try {
    ann = json::parse(annotations_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("annotation syntax error at byte ") + std::to_string(e.byte) + ": " +
                     e.what());
  }
  if (!ann.is_object()) throw ParseError("annotations must be a JSON object");
  if (!ann.contains("palm_link") || !ann["palm_link"].is_string())
    throw ValidationError("annotations: missing 'palm_link'");
  auto palm = index.find(ann["palm_link"].get<std::string>());
  if (palm == index.end())
    throw ValidationError("annotations: palm link '" + ann["palm_link"].get<std::string>() +
                          "' is not in the URDF");
  model.palm_link = palm->second;
  if (!ann.contains("palm_normal")) throw ValidationError("annotations: missing 'palm_normal'");
  model.palm_normal = json_vec3(ann["palm_normal"], "annotations palm_normal");

  if (!ann.contains("inner_points") || !ann["inner_points"].is_object())
    throw ValidationError("annotations: missing 'inner_points'");
  const json& inner = ann["inner_points"];
  for (auto it = inner.begin(); it != inner.end(); ++it)
    if (index.find(it.key()) == index.end())
      throw ValidationError("annotations: inner point for unknown link '" + it.key() + "'");
  for (Link& link : model.links) {
    if (!inner.contains(link.name))
      throw ValidationError("annotations: missing inner point for link '" + link.name + "'");
    link.inner_point = json_vec3(inner[link.name], "annotations inner_points." + link.name);
  }

  if (ann.contains("root_transform")) {
    const json& root = ann["root_transform"];
    if (!root.contains("rotation") || !root.contains("translation"))
      throw ValidationError("annotations: root_transform needs 'rotation' and 'translation'");
    const json& rot = root["rotation"];
    if (!rot.is_array() || rot.size() != 3) throw ParseError("annotations: rotation must be 3x3");
    for (int r = 0; r < 3; ++r)
      model.root_transform.rotation.row(r) = json_vec3(rot[r], "annotations rotation").transpose();
    model.root_transform.translation = json_vec3(root["translation"], "annotations translation");
    const Mat3& R = model.root_transform.rotation;
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(R.determinant() - 1.0) > 1e-9)
      throw ValidationError("annotations: root rotation is not a proper rotation");
  }

  model.finalize();
  return model;
}

std::string default_annotations_path(const std::string& urdf_path) {
  const std::string suffix = ".urdf";
  if (urdf_path.size() > suffix.size() &&
      urdf_path.compare(urdf_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return urdf_path.substr(0, urdf_path.size() - suffix.size()) + ".hand.json";
  return urdf_path + ".hand.json";
}

HandModel load_hand(const std::string& urdf_path, const std::string& annotations_path) {
  const std::string sidecar =
      annotations_path.empty() ? default_annotations_path(urdf_path) : annotations_path;
  return parse_hand(read_file(urdf_path), read_file(sidecar));
}

std::string to_urdf(const HandModel& model) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n<robot name=\"" << model.name << "\">\n";
  for (const Link& link : model.links) {
    out << "  <link name=\"" << link.name << "\">\n    <collision>\n";
    out << "      <origin xyz=\"" << fmt_vec3(link.local.xyz) << "\" rpy=\"" << fmt_vec3(link.local.rpy)
        << "\"/>\n      <geometry>\n        ";
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, Box>) {
            out << "<box size=\"" << fmt_vec3(2.0 * g.half_extents) << "\"/>";
          } else if constexpr (std::is_same_v<G, Capsule>) {
            out << "<capsule radius=\"" << fmt_double(g.radius) << "\" length=\"" << fmt_double(g.length)
                << "\"/>";
          } else if constexpr (std::is_same_v<G, Cylinder>) {
            out << "<cylinder radius=\"" << fmt_double(g.radius) << "\" length=\"" << fmt_double(g.length)
                << "\"/>";
          } else {
            out << "<sphere radius=\"" << fmt_double(g.radius) << "\"/>";
          }
        },
        link.geometry);
    out << "\n      </geometry>\n    </collision>\n  </link>\n";
  }
  for (const Joint& joint : model.joints) {
    out << "  <joint name=\"" << joint.name << "\" type=\"revolute\">\n";
    out << "    <parent link=\"" << model.links[joint.parent_link].name << "\"/>\n";
    out << "    <child link=\"" << model.links[joint.child_link].name << "\"/>\n";
    out << "    <origin xyz=\"" << fmt_vec3(joint.origin.xyz) << "\" rpy=\"" << fmt_vec3(joint.origin.rpy)
        << "\"/>\n";
    out << "    <axis xyz=\"" << fmt_vec3(joint.axis) << "\"/>\n";
    out << "    <limit lower=\"" << fmt_double(joint.limit_lo) << "\" upper=\"" << fmt_double(joint.limit_hi)
        << "\"/>\n  </joint>\n";
  }
  out << "</robot>\n";
  return out.str();
}

std::string to_annotations_json(const HandModel& model) {
  auto arr = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j;
  j["palm_link"] = model.links[model.palm_link].name;
  j["palm_normal"] = arr(model.palm_normal);
  json inner = json::object();
  for (const Link& link : model.links) inner[link.name] = arr(link.inner_point);
  j["inner_points"] = inner;
  const RigidTransform& root = model.root_transform;
  if (!(root.rotation == Mat3::Identity() && root.translation == Vec3::Zero())) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back(arr(root.rotation.row(r).transpose()));
    j["root_transform"] = {{"rotation", rot}, {"translation", arr(root.translation)}};
  }
  return j.dump(2) + "\n";
}

bool same_structure(const HandModel& a, const HandModel& b) {
  if (a.name != b.name || a.links.size() != b.links.size() || a.joints.size() != b.joints.size() ||
      a.palm_link != b.palm_link || a.palm_normal != b.palm_normal ||
      a.root_transform.rotation != b.root_transform.rotation ||
      a.root_transform.translation != b.root_transform.translation)
    return false;
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    const Link& x = a.links[i];
    const Link& y = b.links[i];
    if (x.name != y.name || !(x.geometry == y.geometry) || !(x.local == y.local) ||
        x.inner_point != y.inner_point || x.keypoint != y.keypoint || x.surface_area != y.surface_area)
      return false;
  }
  for (std::size_t i = 0; i < a.joints.size(); ++i) {
    const Joint& x = a.joints[i];
    const Joint& y = b.joints[i];
    if (x.name != y.name || x.parent_link != y.parent_link || x.child_link != y.child_link ||
        !(x.origin == y.origin) || x.axis != y.axis || x.limit_lo != y.limit_lo || x.limit_hi != y.limit_hi)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Kinematics

std::vector<RigidTransform> forward_kinematics_radians(const HandModel& model,
                                                       std::span<const double> radians) {
  if (radians.size() != model.joint_count())
    throw DimensionError("expected " + std::to_string(model.joint_count()) + " joint values, got " +
                         std::to_string(radians.size()));
  std::vector<RigidTransform> joint_frames(model.link_count());
  std::vector<RigidTransform> out(model.link_count());
  for (std::size_t link : model.topological_order()) {
    const std::size_t j = model.parent_joint(link);
    if (j == kNoParent) {
      joint_frames[link] = model.root_transform;
    } else {
      const Joint& joint = model.joints[j];
      const RigidTransform motion{axis_angle(joint.axis, radians[j]), Vec3::Zero()};
      joint_frames[link] = joint_frames[joint.parent_link] * joint.origin.transform() * motion;
    }
    out[link] = joint_frames[link] * model.links[link].local.transform();
  }
  return out;
}

std::vector<RigidTransform> forward_kinematics(const HandModel& model, const JointConfig& q) {
  return forward_kinematics_radians(model, q.radians(model));
}

std::vector<Vec3> keypoints_from_transforms(const HandModel& model,
                                            std::span<const RigidTransform> transforms) {
  std::vector<Vec3> out(model.link_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = transforms[i].apply(model.links[i].keypoint);
  return out;
}

std::vector<Vec3> link_keypoints(const HandModel& model, const JointConfig& q) {
  const auto transforms = forward_kinematics(model, q);
  return keypoints_from_transforms(model, transforms);
}

}  // namespace gripcvae
