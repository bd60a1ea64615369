#pragma once

// Reference implementations used as test oracles. They share no code with
// the library: the FK oracle reads the URDF with regular expressions and
// composes plain 4x4 arrays, the collision oracle is a literal double loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

using Mat4 = std::array<double, 16>;

inline Mat4 identity4() {
  Mat4 m{};
  m[0] = m[5] = m[10] = m[15] = 1.0;
  return m;
}

inline Mat4 mul4(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 4 + j];
      c[i * 4 + j] = s;
    }
  return c;
}

inline Mat4 translation4(double x, double y, double z) {
  Mat4 m = identity4();
  m[3] = x;
  m[7] = y;
  m[11] = z;
  return m;
}

// Rodrigues formula for a unit axis.
inline Mat4 rotation4(double ax, double ay, double az, double angle) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat4 m = identity4();
  m[0] = t * ax * ax + c;
  m[1] = t * ax * ay - s * az;
  m[2] = t * ax * az + s * ay;
  m[4] = t * ax * ay + s * az;
  m[5] = t * ay * ay + c;
  m[6] = t * ay * az - s * ax;
  m[8] = t * ax * az - s * ay;
  m[9] = t * ay * az + s * ax;
  m[10] = t * az * az + c;
  return m;
}

// Fixed-axis roll, then pitch, then yaw.
inline Mat4 origin4(const std::array<double, 3>& xyz, const std::array<double, 3>& rpy) {
  Mat4 r = mul4(rotation4(0, 0, 1, rpy[2]), mul4(rotation4(0, 1, 0, rpy[1]), rotation4(1, 0, 0, rpy[0])));
  return mul4(translation4(xyz[0], xyz[1], xyz[2]), r);
}

inline std::array<double, 3> parse3(const std::string& s) {
  std::array<double, 3> v{};
  std::istringstream in(s);
  in >> v[0] >> v[1] >> v[2];
  return v;
}

struct UrdfJoint {
  std::string parent, child;
  std::array<double, 3> xyz{}, rpy{};
  std::array<double, 3> axis{1.0, 0.0, 0.0};
  double lo = 0.0, hi = 0.0;
};

struct UrdfLink {
  std::string name;
  std::array<double, 3> xyz{}, rpy{};
};

inline std::string attr(const std::string& element, const std::string& name) {
  std::smatch m;
  const std::regex re(name + "=\"([^\"]*)\"");
  return std::regex_search(element, m, re) ? m[1].str() : std::string();
}

inline std::string first_tag(const std::string& body, const std::string& tag) {
  std::smatch m;
  const std::regex re("<" + tag + "\\b[^>]*>");
  return std::regex_search(body, m, re) ? m[0].str() : std::string();
}

/// Brute-force forward kinematics straight from URDF text. Joint angles are
/// in radians and ordered as the joints appear in the file. Returns the world
/// transform of each link's collision frame in file order.
class FkOracle {
 public:
  explicit FkOracle(const std::string& urdf) {
    const std::regex link_re("<link\\s+name=\"([^\"]+)\"\\s*(/>|>([\\s\\S]*?)</link>)");
    for (auto it = std::sregex_iterator(urdf.begin(), urdf.end(), link_re); it != std::sregex_iterator(); ++it) {
      UrdfLink l;
      l.name = (*it)[1].str();
      const std::string body = (*it)[3].str();
      const std::string origin = first_tag(body, "origin");
      if (!origin.empty()) {
        if (auto x = attr(origin, "xyz"); !x.empty()) l.xyz = parse3(x);
        if (auto r = attr(origin, "rpy"); !r.empty()) l.rpy = parse3(r);
      }
      links.push_back(l);
    }
    const std::regex joint_re("<joint\\s+name=\"[^\"]+\"[^>]*>([\\s\\S]*?)</joint>");
    for (auto it = std::sregex_iterator(urdf.begin(), urdf.end(), joint_re); it != std::sregex_iterator(); ++it) {
      const std::string body = (*it)[1].str();
      UrdfJoint j;
      j.parent = attr(first_tag(body, "parent"), "link");
      j.child = attr(first_tag(body, "child"), "link");
      const std::string origin = first_tag(body, "origin");
      if (auto x = attr(origin, "xyz"); !x.empty()) j.xyz = parse3(x);
      if (auto r = attr(origin, "rpy"); !r.empty()) j.rpy = parse3(r);
      if (auto a = attr(first_tag(body, "axis"), "xyz"); !a.empty()) j.axis = parse3(a);
      const std::string limit = first_tag(body, "limit");
      j.lo = std::stod(attr(limit, "lower"));
      j.hi = std::stod(attr(limit, "upper"));
      joints.push_back(j);
    }
  }

  /// Joint frame of `link` (before its collision origin).
  Mat4 joint_frame(const std::string& link, const std::vector<double>& q) const {
    for (std::size_t j = 0; j < joints.size(); ++j) {
      if (joints[j].child != link) continue;
      const auto& jt = joints[j];
      const Mat4 parent = joint_frame(jt.parent, q);
      return mul4(mul4(parent, origin4(jt.xyz, jt.rpy)), rotation4(jt.axis[0], jt.axis[1], jt.axis[2], q[j]));
    }
    return identity4();
  }

  std::vector<Mat4> link_frames(const std::vector<double>& q) const {
    std::vector<Mat4> out;
    for (const auto& l : links) out.push_back(mul4(joint_frame(l.name, q), origin4(l.xyz, l.rpy)));
    return out;
  }

  std::vector<UrdfLink> links;
  std::vector<UrdfJoint> joints;
};

/// Double sum over all ordered pairs, written out directly.
inline double collision_score(const std::vector<std::array<double, 3>>& k,
                              const std::vector<std::vector<double>>& delta,
                              const std::vector<std::vector<double>>& mu) {
  double f = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double dx = k[i][0] - k[j][0], dy = k[i][1] - k[j][1], dz = k[i][2] - k[j][2];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (delta[i][j] - d > 0.0) f += mu[i][j] * (delta[i][j] - d);
    }
  return f;
}

/// Central differences of a scalar function with respect to every entry of x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest |a - b| / max(|a|, |b|, floor) over the entries.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
