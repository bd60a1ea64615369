#include <doctest.h>

#include <cmath>
#include <numbers>

#include <json.hpp>

#include <gripcvae/errors.hpp>
#include <gripcvae/hand_model.hpp>
#include <gripcvae/random.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace gripcvae;

namespace {

std::vector<double> random_radians(const HandModel& m, Rng& rng) {
  std::vector<double> q;
  for (const auto& j : m.joints) q.push_back(rng.uniform(j.limit_lo, j.limit_hi));
  return q;
}

double max_frame_difference(const RigidTransform& t, const oracle::Mat4& m) {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(t.rotation(r, c) - m[r * 4 + c]));
    worst = std::max(worst, std::abs(t.translation[r] - m[r * 4 + 3]));
  }
  return worst;
}

}  // namespace

TEST_CASE("canonical hand has 16 joints and 17 links") {
  const HandModel& m = fixtures::al16();
  CHECK(m.name == "al16-synth");
  CHECK(m.joint_count() == 16);
  CHECK(m.link_count() == 17);
  CHECK(m.links[m.palm_link].name == "palm");
  CHECK(m.palm_normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.chains().size() == 4);
  for (const auto& chain : m.chains()) CHECK(chain.size() == 4);
}

TEST_CASE("keypoints are recomputed from geometry and inner points lie on the surface") {
  const HandModel& m = fixtures::al16();
  for (const auto& link : m.links) {
    CHECK((link.keypoint - aabb_center(link.geometry)).norm() <= 1e-9);
    CHECK(surface_distance(link.geometry, link.inner_point) <= 1e-6);
    CHECK(link.surface_area > 0.0);
  }
}

TEST_CASE("single box, no joints") {
  const HandModel m = fixtures::single_box();
  CHECK(m.joint_count() == 0);
  CHECK(m.link_count() == 1);
  const auto k = link_keypoints(m, JointConfig(std::vector<double>{}));
  REQUIRE(k.size() == 1);
  CHECK((k[0] - Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("planar finger at zero and with the first joint at a right angle") {
  const HandModel m = fixtures::planar_finger();
  const std::size_t distal = m.link_index("distal");
  {
    const auto t = forward_kinematics_radians(m, std::vector<double>{0, 0, 0});
    CHECK((t[distal].translation - Vec3(92, 0, 0)).norm() <= 1e-12);
  }
  {
    const auto t = forward_kinematics_radians(m, std::vector<double>{std::numbers::pi / 2, 0, 0});
    CHECK((t[distal].translation - Vec3(0, 92, 0)).norm() <= 1e-12);
  }
}

TEST_CASE("forward kinematics matches the brute-force oracle") {
  const HandModel& m = fixtures::al16();
  const oracle::FkOracle fk(fixtures::al16_urdf());
  REQUIRE(fk.links.size() == m.link_count());
  REQUIRE(fk.joints.size() == m.joint_count());
  for (std::size_t j = 0; j < m.joint_count(); ++j) {
    CHECK(fk.joints[j].lo == m.joints[j].limit_lo);
    CHECK(fk.joints[j].hi == m.joints[j].limit_hi);
  }

  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = trial == 0 ? std::vector<double>(16, 0.0) : random_radians(m, rng);
    const auto t = forward_kinematics_radians(m, q);
    const auto ref = fk.link_frames(q);
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, max_frame_difference(t[i], ref[i]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("root transform equivariance") {
  const std::string urdf = fixtures::al16_urdf();
  auto ann = nlohmann::json::parse(fixtures::al16_annotations());
  const double a = 0.7;
  ann["root_transform"] = {
      {"rotation", {{std::cos(a), -std::sin(a), 0.0}, {std::sin(a), std::cos(a), 0.0}, {0.0, 0.0, 1.0}}},
      {"translation", {12.5, -40.0, 3.0}}};
  const HandModel moved = parse_hand(urdf, ann.dump());
  const HandModel& base = fixtures::al16();

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = random_radians(base, rng);
    const auto t0 = forward_kinematics_radians(base, q);
    const auto t1 = forward_kinematics_radians(moved, q);
    for (std::size_t i = 0; i < t0.size(); ++i) {
      const RigidTransform expect = moved.root_transform * t0[i];
      CHECK((expect.translation - t1[i].translation).norm() <= 1e-9);
      CHECK((expect.rotation - t1[i].rotation).norm() <= 1e-9);
    }
  }
}

TEST_CASE("translated root shifts keypoints by exactly the translation") {
  const HandModel& base = fixtures::al16();
  HandModel moved = base;
  moved.root_transform = RigidTransform::from_translation(Vec3(10, 20, 30));
  const auto q = JointConfig::nominal(base);
  const auto k0 = link_keypoints(base, q);
  const auto k1 = link_keypoints(moved, q);
  for (std::size_t i = 0; i < k0.size(); ++i) CHECK((k1[i] - k0[i] - Vec3(10, 20, 30)).norm() <= 1e-9);
}

TEST_CASE("perturbing one joint only moves its subtree") {
  const HandModel& m = fixtures::al16();
  Rng rng(3);
  const auto q = random_radians(m, rng);
  const auto before = forward_kinematics_radians(m, q);
  for (std::size_t j = 0; j < m.joint_count(); ++j) {
    auto q2 = q;
    q2[j] += 0.01;
    const auto after = forward_kinematics_radians(m, q2);
    const auto subtree = m.subtree_links(j);
    for (std::size_t i = 0; i < m.link_count(); ++i) {
      const bool inside = std::find(subtree.begin(), subtree.end(), i) != subtree.end();
      const bool same = before[i].rotation == after[i].rotation && before[i].translation == after[i].translation;
      CHECK(same != inside);
    }
  }
}

TEST_CASE("serialize and reparse gives the same structure") {
  const HandModel& m = fixtures::al16();
  const HandModel again = parse_hand(to_urdf(m), to_annotations_json(m));
  CHECK(same_structure(m, again));
  const HandModel finger = fixtures::planar_finger();
  CHECK(same_structure(finger, parse_hand(to_urdf(finger), to_annotations_json(finger))));
}

TEST_CASE("normalization round-trips over random limits") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    Joint j;
    j.limit_lo = rng.uniform(-3.0, 1.0);
    j.limit_hi = j.limit_lo + rng.uniform(0.01, 4.0);
    const double x = rng.uniform();
    CHECK(std::abs(normalize(j, denormalize(j, x)) - x) <= 1e-12);
  }
}

TEST_CASE("joint config validation") {
  const HandModel& m = fixtures::al16();
  CHECK_THROWS_AS(forward_kinematics(m, JointConfig(std::vector<double>(15, 0.5))), DimensionError);
  CHECK_THROWS_AS(JointConfig(std::vector<double>{0.5, 1.5}), ValidationError);
  const auto nominal = JointConfig::nominal(m);
  const auto rad = nominal.radians(m);
  for (double r : rad) CHECK(std::abs(r) <= 1e-12);
}

TEST_CASE("parser rejections") {
  const char* ann = R"({"palm_link": "a", "palm_normal": [0,0,1], "inner_points": {"a": [0,0,1], "b": [0,0,1]}})";
  auto two_links = [](const std::string& joint) {
    return std::string(R"(<robot name="r">
      <link name="a"><collision><geometry><sphere radius="1"/></geometry></collision></link>
      <link name="b"><collision><geometry><sphere radius="1"/></geometry></collision></link>)") +
           joint + "</robot>";
  };

  SUBCASE("prismatic joint") {
    const std::string urdf = two_links(R"(<joint name="j" type="prismatic"><parent link="a"/><child link="b"/>
      <limit lower="0" upper="1"/></joint>)");
    try {
      parse_hand(urdf, ann);
      FAIL("expected rejection");
    } catch (const UnsupportedError& e) {
      CHECK(std::string(e.what()).find("prismatic") != std::string::npos);
    }
  }
  SUBCASE("mesh geometry") {
    const std::string urdf = R"(<robot name="r"><link name="a"><collision><geometry>
      <mesh filename="x.stl"/></geometry></collision></link></robot>)";
    try {
      parse_hand(urdf, R"({"palm_link": "a", "palm_normal": [0,0,1], "inner_points": {"a": [0,0,1]}})");
      FAIL("expected rejection");
    } catch (const UnsupportedError& e) {
      CHECK(std::string(e.what()).find("mesh") != std::string::npos);
    }
  }
  SUBCASE("syntax error reports a line") {
    try {
      parse_hand("<robot name=\"r\">\n<link name=\"a\">\n</robot>", ann);
      FAIL("expected rejection");
    } catch (const ParseError& e) {
      CHECK(e.line() > 0);
    }
  }
  SUBCASE("limits out of order") {
    const std::string urdf = two_links(R"(<joint name="j" type="revolute"><parent link="a"/><child link="b"/>
      <limit lower="1" upper="1"/></joint>)");
    CHECK_THROWS_AS(parse_hand(urdf, ann), ValidationError);
  }
  SUBCASE("disconnected graph") {
    CHECK_THROWS_AS(parse_hand(two_links(""), ann), ValidationError);
  }
  SUBCASE("cycle") {
    const std::string urdf = std::string(R"(<robot name="r">
      <link name="a"><collision><geometry><sphere radius="1"/></geometry></collision></link>
      <link name="b"><collision><geometry><sphere radius="1"/></geometry></collision></link>
      <link name="c"><collision><geometry><sphere radius="1"/></geometry></collision></link>
      <joint name="j1" type="revolute"><parent link="b"/><child link="c"/><limit lower="0" upper="1"/></joint>
      <joint name="j2" type="revolute"><parent link="c"/><child link="b"/><limit lower="0" upper="1"/></joint>
      </robot>)");
    const char* ann3 =
        R"({"palm_link": "a", "palm_normal": [0,0,1], "inner_points": {"a": [0,0,1], "b": [0,0,1], "c": [0,0,1]}})";
    CHECK_THROWS_AS(parse_hand(urdf, ann3), ValidationError);
  }
  SUBCASE("missing annotation") {
    const std::string urdf = two_links(R"(<joint name="j" type="revolute"><parent link="a"/><child link="b"/>
      <limit lower="0" upper="1"/></joint>)");
    CHECK_THROWS_AS(parse_hand(urdf, R"({"palm_link": "a", "palm_normal": [0,0,1], "inner_points": {"a": [0,0,1]}})"),
                    ValidationError);
  }
  SUBCASE("inner point off the surface") {
    const std::string urdf = two_links(R"(<joint name="j" type="revolute"><parent link="a"/><child link="b"/>
      <limit lower="0" upper="1"/></joint>)");
    CHECK_THROWS_AS(
        parse_hand(urdf, R"({"palm_link": "a", "palm_normal": [0,0,1], "inner_points": {"a": [0,0,1], "b": [0,0,0.5]}})"),
        ValidationError);
  }
}
