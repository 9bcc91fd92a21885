#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "rgbdreg/descriptor.hpp"
#include "rgbdreg/synthdata.hpp"
#include "support.hpp"

using namespace rgbdreg;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::path(RGBDREG_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ColorImage noise_image(std::mt19937_64& rng, int w, int h) {
  ColorImage img(w, h, 3);
  for (auto& x : img.data()) x = static_cast<float>(uniform01(rng));
  return img;
}

double norm_of(const FeatureMap& m, int u, int v) {
  double s = 0.0;
  for (int i = 0; i < m.dim(); ++i) s += static_cast<double>(m.pixel(u, v)[i]) * m.pixel(u, v)[i];
  return std::sqrt(s);
}

}  // namespace

TEST(Descriptor, ConstantImageGivesEqualFeatures) {
  const ColorImage img(9, 7, 3, 0.4f);
  const auto m = extract_features(img, {});
  for (int v = 0; v < 7; ++v)
    for (int u = 0; u < 9; ++u)
      for (int i = 0; i < m.dim(); ++i) EXPECT_EQ(m.pixel(u, v)[i], m.pixel(0, 0)[i]);
}

TEST(Descriptor, Deterministic) {
  std::mt19937_64 rng(1);
  const auto img = noise_image(rng, 20, 15);
  const auto a = extract_features(img, {});
  const auto b = extract_features(img, {});
  EXPECT_EQ(a.data(), b.data());
}

TEST(Descriptor, ChannelPermutationChangesFeatures) {
  ColorImage img(2, 1, 3);
  const float px0[3] = {0.9f, 0.2f, 0.1f};
  const float px1[3] = {0.1f, 0.5f, 0.7f};
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = px0[c];
    img.at(1, 0, c) = px1[c];
  }
  ColorImage swapped = img;
  for (int u = 0; u < 2; ++u) std::swap(swapped.at(u, 0, 0), swapped.at(u, 0, 2));
  EXPECT_NE(extract_features(img, {}).data(), extract_features(swapped, {}).data());
}

TEST(Descriptor, UnitNormEverywhere) {
  std::mt19937_64 rng(2);
  for (int dim : {9, 16, 32, 83}) {
    DescriptorConfig cfg;
    cfg.dim = dim;
    const auto m = extract_features(noise_image(rng, 12, 10), cfg);
    ASSERT_EQ(m.dim(), dim);
    for (int v = 0; v < 10; ++v)
      for (int u = 0; u < 12; ++u) EXPECT_NEAR(norm_of(m, u, v), 1.0, 1e-6);
  }
}

TEST(Descriptor, UnsupportedDimensionIsConfigError) {
  const ColorImage img(4, 4, 3, 0.5f);
  for (int dim : {0, 8, 84, -3}) {
    DescriptorConfig cfg;
    cfg.dim = dim;
    EXPECT_THROW(extract_features(img, cfg), ConfigError);
  }
}

TEST(FeatureFile, RoundTripIsBitwise) {
  std::mt19937_64 rng(3);
  const auto m = extract_features(noise_image(rng, 11, 6), {});
  const auto path = temp_dir("ff_roundtrip") / "f.rfm";
  save_feature_map(path, m);
  const auto back = load_feature_map(path, {11, 6, 32});
  EXPECT_EQ(back.width(), 11);
  EXPECT_EQ(back.height(), 6);
  EXPECT_EQ(back.data(), m.data());
  EXPECT_EQ(load_feature_map(path, {11, 6, 0}).data(), m.data());
}

TEST(FeatureFile, HeightMismatch) {
  const auto path = temp_dir("ff_mismatch") / "f.rfm";
  save_feature_map(path, FeatureMap(5, 4, 10));
  EXPECT_THROW(load_feature_map(path, {5, 3, 10}), DimensionMismatchError);
  EXPECT_THROW(load_feature_map(path, {5, 4, 11}), DimensionMismatchError);
}

TEST(FeatureFile, NanNamesPixel) {
  FeatureMap m(6, 9, 4);
  for (auto& x : m.data()) x = 0.5f;
  m.pixel(3, 7)[2] = std::numeric_limits<float>::quiet_NaN();
  const auto path = temp_dir("ff_nan") / "f.rfm";
  save_feature_map(path, m);
  try {
    load_feature_map(path, {6, 9, 4});
    FAIL() << "expected a load error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("pixel (3, 7)"), std::string::npos) << e.what();
  }
}

TEST(FeatureFile, UnnormalizedFlagNormalizes) {
  FeatureMap m(2, 1, 3);
  const float raw[6] = {3.0f, 0.0f, 4.0f, 0.0f, 0.0f, 0.0f};
  std::copy(raw, raw + 6, m.data().begin());
  const auto path = temp_dir("ff_norm") / "f.rfm";
  save_feature_map(path, m, false);
  const auto back = load_feature_map(path, {2, 1, 3});
  EXPECT_FLOAT_EQ(back.pixel(0, 0)[0], 0.6f);
  EXPECT_FLOAT_EQ(back.pixel(0, 0)[2], 0.8f);
  EXPECT_NEAR(norm_of(back, 1, 0), 1.0, 1e-6);
}

TEST(FeatureFile, BadMagicAndMissingFile) {
  const auto dir = temp_dir("ff_bad");
  { std::ofstream(dir / "junk.rfm") << "not a map"; }
  EXPECT_THROW(load_feature_map(dir / "junk.rfm", {1, 1, 0}), InputError);
  EXPECT_THROW(load_feature_map(dir / "absent.rfm", {1, 1, 0}), InputError);
}

TEST(FeatureCloud, AllDepthMissingGivesNoValidPoints) {
  const CameraIntrinsics k(10.0, 10.0, 3.0, 2.0, 7, 5);
  const RGBDFrame frame(ColorImage(7, 5, 3, 0.3f), DepthMap(7, 5), k);
  const auto cloud = build_feature_cloud(frame, extract_features(frame.color(), {}));
  EXPECT_EQ(cloud.size(), 35u);
  EXPECT_EQ(cloud.valid_count(), 0u);
}

TEST(FeatureCloud, MatchesPerPixelPinholeOracle) {
  auto spec = SceneSpec::random_room(4, 40, 30);
  spec.depth_dropout = 0.2;
  const auto frame = render_scene(spec, spec.base_pose, 0);
  const auto features = extract_features(frame.color(), {});
  const auto cloud = build_feature_cloud(frame, features);
  const auto& k = frame.intrinsics();

  ASSERT_EQ(cloud.size(), 40u * 30u);
  EXPECT_EQ(cloud.valid_count(), frame.depth().valid_count());
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int u = static_cast<int>(i % 40);
    const int v = static_cast<int>(i / 40);
    EXPECT_EQ(cloud.pixel_index[i], (PixelIndex{u, v}));
    const double d = frame.depth().at(u, v);
    EXPECT_EQ(cloud.valid[i], d != 0.0);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(cloud.colors[i][c], frame.color().at(u, v, c));
    for (int j = 0; j < features.dim(); ++j)
      EXPECT_EQ(cloud.features(static_cast<Eigen::Index>(i), j), features.pixel(u, v)[j]);
    if (!cloud.valid[i]) continue;
    EXPECT_TRUE(seen.insert({u, v}).second);
    const double x = (u - k.cx()) * d / k.fx();
    const double y = (v - k.cy()) * d / k.fy();
    EXPECT_NEAR(cloud.positions[i].x(), x, 1e-12);
    EXPECT_NEAR(cloud.positions[i].y(), y, 1e-12);
    EXPECT_EQ(cloud.positions[i].z(), d);
  }
}

TEST(FeatureCloud, RejectsMismatchedFeatureMap) {
  const CameraIntrinsics k(10.0, 10.0, 3.0, 2.0, 7, 5);
  const RGBDFrame frame(ColorImage(7, 5, 3, 0.3f), DepthMap(7, 5), k);
  EXPECT_THROW(build_feature_cloud(frame, FeatureMap(7, 4, 32)), DimensionMismatchError);
}
