#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <gripcvae/hand_model.hpp>

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(GRIPCVAE_DATA_DIR) + "/" + name; }
inline std::string golden_path(const std::string& name) { return std::string(GRIPCVAE_GOLDEN_DIR) + "/" + name; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const gripcvae::HandModel& al16() {
  static const gripcvae::HandModel model = gripcvae::load_hand(data_path("al16-synth.urdf"));
  return model;
}

inline std::string al16_urdf() { return read_text(data_path("al16-synth.urdf")); }
inline std::string al16_annotations() { return read_text(data_path("al16-synth.hand.json")); }

// One box link, no joints. The box sits at (1, 2, 3) in the root frame.
inline const char* kSingleBoxUrdf = R"(<?xml version="1.0"?>
<robot name="single-box">
  <link name="base">
    <collision>
      <origin xyz="1 2 3" rpy="0 0 0"/>
      <geometry><box size="2 4 6"/></geometry>
    </collision>
  </link>
</robot>
)";
inline const char* kSingleBoxAnnotations = R"({
  "palm_link": "base",
  "palm_normal": [0, 0, 1],
  "inner_points": {"base": [0, 0, 3]}
})";

inline gripcvae::HandModel single_box() { return gripcvae::parse_hand(kSingleBoxUrdf, kSingleBoxAnnotations); }

// Planar finger in the xy plane: 54 mm and 38 mm capsule segments along +x,
// all joints about +z, and a small tip sphere at the end of the chain.
inline const char* kPlanarFingerUrdf = R"(<?xml version="1.0"?>
<robot name="planar-finger">
  <link name="base">
    <collision>
      <origin xyz="-5 0 0" rpy="0 0 0"/>
      <geometry><box size="10 10 10"/></geometry>
    </collision>
  </link>
  <link name="proximal">
    <collision>
      <origin xyz="27 0 0" rpy="0 1.5707963267948966 0"/>
      <geometry><capsule radius="5" length="44"/></geometry>
    </collision>
  </link>
  <link name="middle">
    <collision>
      <origin xyz="19 0 0" rpy="0 1.5707963267948966 0"/>
      <geometry><capsule radius="5" length="28"/></geometry>
    </collision>
  </link>
  <link name="distal">
    <collision>
      <geometry><sphere radius="2"/></geometry>
    </collision>
  </link>
  <joint name="j1" type="revolute">
    <parent link="base"/>
    <child link="proximal"/>
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-1.6" upper="1.6"/>
  </joint>
  <joint name="j2" type="revolute">
    <parent link="proximal"/>
    <child link="middle"/>
    <origin xyz="54 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-1.6" upper="1.6"/>
  </joint>
  <joint name="j3" type="revolute">
    <parent link="middle"/>
    <child link="distal"/>
    <origin xyz="38 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-1.6" upper="1.6"/>
  </joint>
</robot>
)";
inline const char* kPlanarFingerAnnotations = R"({
  "palm_link": "base",
  "palm_normal": [0, 1, 0],
  "inner_points": {
    "base": [0, 5, 0],
    "proximal": [0, 5, 0],
    "middle": [0, 5, 0],
    "distal": [0, 2, 0]
  }
})";

inline gripcvae::HandModel planar_finger() {
  return gripcvae::parse_hand(kPlanarFingerUrdf, kPlanarFingerAnnotations);
}

// One revolute joint about +z with a sphere keypoint `length` mm along +x.
inline gripcvae::HandModel single_revolute(double length, double lo, double hi) {
  std::ostringstream urdf;
  urdf.precision(17);
  urdf << R"(<robot name="lever">
  <link name="base"><collision><geometry><sphere radius="3"/></geometry></collision></link>
  <link name="arm"><collision><origin xyz=")"
       << length << R"( 0 0"/><geometry><sphere radius="1"/></geometry></collision></link>
  <joint name="hinge" type="revolute">
    <parent link="base"/><child link="arm"/>
    <axis xyz="0 0 1"/>
    <limit lower=")"
       << lo << "\" upper=\"" << hi << R"("/>
  </joint>
</robot>)";
  const char* ann = R"({"palm_link": "base", "palm_normal": [0, 0, 1],
    "inner_points": {"base": [0, 0, 3], "arm": [0, 0, 1]}})";
  return gripcvae::parse_hand(urdf.str(), ann);
}

// Single sphere link of radius 10 whose inner point is the +z pole.
inline const char* kSphereUrdf = R"(<robot name="ball">
  <link name="ball"><collision><geometry><sphere radius="10"/></geometry></collision></link>
</robot>)";
inline const char* kSphereAnnotations =
    R"({"palm_link": "ball", "palm_normal": [0, 0, 1], "inner_points": {"ball": [0, 0, 10]}})";

inline gripcvae::HandModel sphere_hand() { return gripcvae::parse_hand(kSphereUrdf, kSphereAnnotations); }

}  // namespace fixtures
