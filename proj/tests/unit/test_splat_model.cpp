#include <cmath>
#include <cstring>
#include <numeric>
#include <algorithm>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "splatedit/errors.hpp"
#include "splatedit/splat_model.hpp"

using namespace splatedit;
using fixtures::TempDir;

namespace {

std::vector<float> row_of(const GaussianSplat& s) {
  const float* f = reinterpret_cast<const float*>(&s);
  return {f, f + kPlyFloatsPerSplat};
}

std::vector<std::string> names() {
  const auto& n = ply_property_names();
  return {n.begin(), n.end()};
}

}  // namespace

TEST(SplatModel, RecordLayoutMatchesPropertyList) {
  EXPECT_EQ(ply_property_names().size(), 62u);
  EXPECT_EQ(ply_property_names()[9], "f_rest_0");
  EXPECT_EQ(ply_property_names()[53], "f_rest_44");
  EXPECT_EQ(ply_property_names()[54], "opacity");
  EXPECT_EQ(ply_property_names()[58], "rot_0");
  GaussianSplat s;
  EXPECT_EQ(reinterpret_cast<float*>(&s) + 54, &s.logit_opacity);
  EXPECT_EQ(reinterpret_cast<float*>(&s) + 58, &s.rotation[0]);
}

TEST(SplatModel, ScaledIdentityQuaternionIsNormalized) {
  GaussianSplat s;
  s.rotation = {2.0f, 0.0f, 0.0f, 0.0f};
  const auto scene = parse_ply(fixtures::custom_ply(names(), {row_of(s)}));
  ASSERT_EQ(scene.size(), 1u);
  EXPECT_EQ(scene[0].rotation, (std::array<float, 4>{1.0f, 0.0f, 0.0f, 0.0f}));
}

TEST(SplatModel, MissingHigherShBandsAreListed) {
  std::vector<std::string> props = names();
  std::erase_if(props, [](const std::string& p) {
    if (p.rfind("f_rest_", 0) != 0) return false;
    return std::stoi(p.substr(7)) >= 24;
  });
  ASSERT_EQ(props.size(), 41u);
  try {
    parse_ply(fixtures::custom_ply(props, {std::vector<float>(props.size(), 0.0f)}));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    for (int k = 24; k <= 44; ++k) EXPECT_NE(msg.find("f_rest_" + std::to_string(k)), std::string::npos) << k;
    EXPECT_EQ(msg.find("f_rest_23"), std::string::npos);
  }
}

TEST(SplatModel, ExtraPropertyIsNamed) {
  auto props = names();
  props.push_back("red");
  try {
    parse_ply(fixtures::custom_ply(props, {}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("red"), std::string::npos);
  }
}

TEST(SplatModel, NonFloatAndAsciiRejected) {
  const std::string ascii = "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
  std::vector<std::byte> b(ascii.size());
  std::memcpy(b.data(), ascii.data(), ascii.size());
  EXPECT_THROW(parse_ply(b), FormatError);
  std::string dbl = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty double x\nend_header\n";
  b.resize(dbl.size());
  std::memcpy(b.data(), dbl.data(), dbl.size());
  EXPECT_THROW(parse_ply(b), FormatError);
}

TEST(SplatModel, TruncatedPayloadReportsOffset) {
  std::mt19937 rng(3);
  std::vector<GaussianSplat> splats{fixtures::random_splat(rng), fixtures::random_splat(rng)};
  auto bytes = serialize_ply(splats);
  const std::size_t full = bytes.size();
  bytes.resize(full - 5);
  try {
    parse_ply(bytes);
    FAIL();
  } catch (const TruncationError& e) {
    EXPECT_EQ(e.byte_offset(), full - 5);
    EXPECT_EQ(e.expected_bytes(), full);
  }
}

TEST(SplatModel, PermutedPropertiesLoadByName) {
  std::mt19937 rng(11);
  const GaussianSplat s = fixtures::random_splat(rng);
  auto props = names();
  auto row = row_of(s);
  std::vector<std::size_t> perm(props.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::string> p2;
  std::vector<float> r2;
  for (auto i : perm) {
    p2.push_back(props[i]);
    r2.push_back(row[i]);
  }
  const auto scene = parse_ply(fixtures::custom_ply(p2, {r2}, "comment other tool\n"));
  EXPECT_TRUE(bitwise_equal(scene[0], s));
}

TEST(SplatModel, EmptySceneRoundTrip) {
  TempDir dir;
  save_ply(GaussianScene{}, dir / "e.ply");
  const auto text = fixtures::read_text(dir / "e.ply");
  EXPECT_NE(text.find("element vertex 0\n"), std::string::npos);
  EXPECT_EQ(load_ply(dir / "e.ply").size(), 0u);
  EXPECT_TRUE(load_ply(dir / "e.ply").bounds().empty());
}

TEST(SplatModel, CanonicalHeaderHasOneComment) {
  const std::string h = canonical_ply_header(3);
  std::size_t comments = 0;
  for (std::size_t p = h.find("\ncomment "); p != std::string::npos; p = h.find("\ncomment ", p + 1)) ++comments;
  EXPECT_EQ(comments, 1u);
  EXPECT_EQ(h.rfind("ply\nformat binary_little_endian 1.0\n", 0), 0u);
  EXPECT_TRUE(h.ends_with("property float rot_3\nend_header\n"));
}

TEST(SplatModel, ByteIdenticalRoundTripForUnitQuaternions) {
  std::mt19937 rng(5);
  std::vector<GaussianSplat> splats;
  for (int i = 0; i < 2000; ++i) splats.push_back(fixtures::random_splat(rng));
  const auto bytes = serialize_ply(splats);
  const auto again = serialize_ply(parse_ply(bytes).splats());
  EXPECT_EQ(bytes, again);
}

TEST(SplatModel, ForeignFileValueRoundTrip) {
  std::mt19937 rng(9);
  std::normal_distribution<float> n(0.0f, 3.0f);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 200; ++i) {
    std::vector<float> r(kPlyFloatsPerSplat);
    for (auto& v : r) v = n(rng);
    rows.push_back(r);
  }
  const auto first = parse_ply(fixtures::custom_ply(names(), rows, "comment exported elsewhere\n"));
  const auto second = parse_ply(serialize_ply(first.splats()));
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(first[i], second[i])) << i;
    const auto& q = first[i].rotation;
    EXPECT_NEAR(std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]), 1.0, 1e-6);
    for (std::size_t k = 0; k < 58; ++k) EXPECT_EQ(row_of(first[i])[k], rows[i][k]);
  }
}

TEST(SplatModel, CovarianceIsSymmetricPsd) {
  std::mt19937 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Mat3 c = fixtures::random_splat(rng).covariance();
    EXPECT_LT((c - c.transpose()).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-15);
  }
}

TEST(SplatModel, BoundsTrackMutation) {
  GaussianScene scene({fixtures::make_splat({0, 0, 0}), fixtures::make_splat({1, 2, 3})});
  EXPECT_EQ(scene.bounds(), (Aabb{{0, 0, 0}, {1, 2, 3}}));
  scene.append(std::vector{fixtures::make_splat({-1, 5, 0})});
  EXPECT_EQ(scene.bounds(), (Aabb{{-1, 0, 0}, {1, 5, 3}}));
  const std::uint32_t idx[] = {2};
  scene.erase(idx);
  EXPECT_EQ(scene.bounds(), (Aabb{{0, 0, 0}, {1, 2, 3}}));
  scene.set(1, fixtures::make_splat({0.5, 0.5, 0.5}));
  EXPECT_EQ(scene.bounds(), (Aabb{{0, 0, 0}, {0.5, 0.5, 0.5}}));
}

TEST(SplatModel, EraseInsertInverse) {
  std::mt19937 rng(4);
  std::vector<GaussianSplat> splats;
  for (int i = 0; i < 20; ++i) splats.push_back(fixtures::random_splat(rng));
  GaussianScene scene(splats);
  const std::vector<std::uint32_t> gone{0, 3, 4, 19};
  std::vector<GaussianSplat> removed;
  for (auto i : gone) removed.push_back(splats[i]);
  scene.erase(gone);
  EXPECT_EQ(scene.size(), 16u);
  scene.insert(gone, removed);
  EXPECT_EQ(scene.splats(), splats);
}

class LabelsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fixtures::SceneBuilder b;
    b.add_box("chair", Aabb{{0, 0, 0}, {1, 1, 1}}, {0.5, 0.5, 0.5}, 3, 0.95);
    b.add_box("lamp", Aabb{{3, 0, 0}, {4, 1, 1}}, {0.5, 0.5, 0.5}, 3, 0.75);
    b.add_floor(0, 0, 4, 0, 4, 1);
    b.write(dir.path());
    scene = load_ply(dir / "scene.ply");
  }
  TempDir dir;
  GaussianScene scene;
};

TEST_F(LabelsTest, ConfidenceThresholds) {
  const auto strict = load_labels(scene, dir / "labels.json", dir / "labels.bin", 0.8);
  EXPECT_TRUE(strict.contains(0));
  EXPECT_FALSE(strict.contains(1));
  EXPECT_EQ(strict.member_count(1), 0u);
  for (std::size_t i = 27; i < 54; ++i) EXPECT_EQ(strict.assignment[i], kUnlabeled);

  const auto loose = load_labels(scene, dir / "labels.json", dir / "labels.bin", 0.3);
  EXPECT_TRUE(loose.contains(1));
  EXPECT_EQ(loose.member_count(1), 27u);

  const auto all = load_labels(scene, dir / "labels.json", dir / "labels.bin", 0.0);
  const auto file = parse_labels(scene.size(), fixtures::read_text(dir / "labels.json"),
                                 read_file(dir / "labels.bin"), 0.0);
  EXPECT_EQ(all, file);
  EXPECT_EQ(all.instances.size(), 2u);
}

TEST_F(LabelsTest, CountMismatch) {
  auto bin = read_file(dir / "labels.bin");
  bin.resize(bin.size() - 4);
  try {
    parse_labels(scene.size(), fixtures::read_text(dir / "labels.json"), bin, 0.8);
    FAIL();
  } catch (const LabelMismatchError& e) {
    EXPECT_EQ(e.expected(), scene.size());
    EXPECT_EQ(e.actual(), scene.size() - 1);
  }
}

TEST_F(LabelsTest, DanglingId) {
  auto bin = read_file(dir / "labels.bin");
  const std::uint32_t bad = 77;
  std::memcpy(bin.data() + 8, &bad, 4);
  try {
    parse_labels(scene.size(), fixtures::read_text(dir / "labels.json"), bin, 0.8);
    FAIL();
  } catch (const DanglingIdError& e) {
    EXPECT_EQ(e.id(), 77u);
  }
}

TEST_F(LabelsTest, SaveLoadIdentity) {
  const auto o = load_labels(scene, dir / "labels.json", dir / "labels.bin", 0.0);
  save_labels(o, dir / "b.json", dir / "b.bin");
  EXPECT_EQ(load_labels(scene, dir / "b.json", dir / "b.bin", 0.0), o);
}

TEST(SplatModel, InstanceAabbMatchesScan) {
  std::mt19937 rng(8);
  std::vector<GaussianSplat> splats;
  SemanticOverlay o;
  o.instances = {{0, "thing", 1.0}, {1, "other", 1.0}};
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 2000; ++i) {
    splats.push_back(fixtures::random_splat(rng));
    o.assignment.push_back(coin(rng) ? 0 : 1);
  }
  GaussianScene scene(splats);
  Aabb oracle;
  for (std::size_t i = 0; i < splats.size(); ++i) {
    if (o.assignment[i] == 0) oracle.expand(splats[i].center());
  }
  const Aabb box = instance_aabb(scene, o, 0);
  EXPECT_EQ(box, oracle);
  // Tight: every face touches a member.
  for (int axis = 0; axis < 3; ++axis) {
    bool lo = false, hi = false;
    for (std::size_t i = 0; i < splats.size(); ++i) {
      if (o.assignment[i] != 0) continue;
      lo |= splats[i].center()[axis] == box.min[axis];
      hi |= splats[i].center()[axis] == box.max[axis];
    }
    EXPECT_TRUE(lo && hi);
  }
}

TEST(SplatModel, InstanceAabbSmallCases) {
  GaussianScene scene({fixtures::make_splat({0, 0, 0}), fixtures::make_splat({1, 2, 3}), fixtures::make_splat({5, 5, 5})});
  SemanticOverlay o;
  o.instances = {{0, "a", 1}, {1, "b", 1}, {2, "empty", 1}};
  o.assignment = {0, 0, 1};
  EXPECT_EQ(instance_aabb(scene, o, 0), (Aabb{{0, 0, 0}, {1, 2, 3}}));
  EXPECT_EQ(instance_aabb(scene, o, 1), Aabb::of_point({5, 5, 5}));
  EXPECT_THROW(instance_aabb(scene, o, 2), EmptyInstanceError);
  EXPECT_THROW(instance_aabb(scene, o, 9), UnknownInstanceError);
}

TEST(SplatModel, OverlayValidate) {
  SemanticOverlay o;
  o.instances = {{0, "a", 1}};
  o.assignment = {0, kUnlabeled};
  EXPECT_NO_THROW(o.validate(2));
  EXPECT_THROW(o.validate(3), LabelMismatchError);
  o.assignment[1] = 4;
  EXPECT_THROW(o.validate(2), DanglingIdError);
  EXPECT_EQ(o.next_id(), 1u);
}
