#include <gtest/gtest.h>

#include "rgbdreg/evaluation.hpp"
#include "support.hpp"

using namespace rgbdreg;
using namespace testing_support;

TEST(RotationError, Examples) {
  const Mat3 id = Mat3::Identity();
  EXPECT_EQ(rotation_error(id, id), 0.0);
  const auto half = RigidTransform::from_axis_angle(Vec3::UnitZ(), std::numbers::pi);
  EXPECT_NEAR(rotation_error(half.rotation(), id), 180.0, 1e-9);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = RigidTransform::from_axis_angle(random_unit(rng), std::numbers::pi / 6);
    EXPECT_NEAR(rotation_error(r.rotation(), id), 30.0, 1e-9);
  }
}

TEST(RotationError, Symmetric) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_transform(rng).rotation();
    const auto b = random_transform(rng).rotation();
    EXPECT_NEAR(rotation_error(a, b), rotation_error(b, a), 1e-9);
  }
}

TEST(RotationError, ClampsAndFlagsNonRotations) {
  bool suspicious = false;
  EXPECT_EQ(rotation_error(1.01 * Mat3::Identity(), Mat3::Identity(), &suspicious), 0.0);
  EXPECT_TRUE(suspicious);
  rotation_error(Mat3::Identity(), Mat3::Identity(), &suspicious);
  EXPECT_FALSE(suspicious);
}

TEST(TranslationError, Examples) {
  EXPECT_EQ(translation_error(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
  EXPECT_EQ(translation_error(Vec3(0.03, 0.04, 0.0), Vec3::Zero()), 5.0);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 a = random_vector(rng), b = random_vector(rng);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_NEAR(translation_error(a, b), std::sqrt(s) * 100.0, 1e-12);
  }
}

TEST(Chamfer, Examples) {
  const std::vector<Vec3> a{{0, 0, 0}};
  const std::vector<Vec3> b{{0.01, 0, 0}};
  EXPECT_EQ(chamfer_error(a, b), 2.0);
  std::mt19937_64 rng(4);
  const auto pts = random_points(rng, 40);
  EXPECT_EQ(chamfer_error(pts, pts), 0.0);
  EXPECT_THROW(chamfer_error({}, pts), InputError);
  EXPECT_THROW(chamfer_error(pts, {}), InputError);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_points(rng, 100);
    const auto b = random_points(rng, 100);
    EXPECT_NEAR(chamfer_error(a, b), ref_chamfer_cm(a, b), 1e-9);
    EXPECT_NEAR(chamfer_error(a, b), chamfer_error(b, a), 1e-12);
  }
}

TEST(Chamfer, RigidMotionInvariant) {
  std::mt19937_64 rng(6);
  const auto a = random_points(rng, 80);
  const auto b = random_points(rng, 60);
  const auto t = random_transform(rng, std::numbers::pi, 3.0);
  EXPECT_NEAR(chamfer_error(transform_points(t, a), transform_points(t, b)), chamfer_error(a, b),
              1e-9);
}

TEST(AlignmentChamfer, ZeroAtTruthAndGrowsWithError) {
  std::mt19937_64 rng(7);
  const auto c1 = random_points(rng, 200);
  const auto c2 = random_points(rng, 200);
  const auto truth = random_transform(rng);
  EXPECT_EQ(alignment_chamfer(c1, c2, truth, truth, 0), 0.0);
  const auto off = compose(RigidTransform::from_axis_angle(Vec3::UnitX(), 0.0, {0.05, 0, 0}), truth);
  EXPECT_GT(alignment_chamfer(c1, c2, off, truth, 0), 0.0);
}

TEST(AlignmentChamfer, SubsamplesDeterministically) {
  std::mt19937_64 rng(8);
  const auto c1 = random_points(rng, 300);
  const auto c2 = random_points(rng, 300);
  const auto truth = random_transform(rng);
  const auto pred = compose(RigidTransform::from_axis_angle(Vec3::UnitY(), 0.05), truth);
  const double a = alignment_chamfer(c1, c2, pred, truth, 9, 100);
  EXPECT_EQ(a, alignment_chamfer(c1, c2, pred, truth, 9, 100));
  EXPECT_NE(a, alignment_chamfer(c1, c2, pred, truth, 10, 100));
  EXPECT_NEAR(alignment_chamfer(c1, c2, pred, truth, 9, 1000),
              alignment_chamfer(c1, c2, pred, truth, 9), 0.0);
}

TEST(Aggregate, SingleReport) {
  const auto r = make_report(3.0, 7.0, 0.5);
  const auto s = aggregate(std::vector{r});
  EXPECT_EQ(s.count, 1u);
  EXPECT_EQ(s.rotation.mean, 3.0);
  EXPECT_EQ(s.rotation.median, 3.0);
  EXPECT_EQ(s.translation.median, 7.0);
  EXPECT_EQ(s.chamfer.mean, 0.5);
  EXPECT_EQ(s.rotation.accuracy, (std::array<double, 3>{1.0, 1.0, 1.0}));
  EXPECT_EQ(s.translation.accuracy, (std::array<double, 3>{0.0, 1.0, 1.0}));
}

TEST(Aggregate, TwoReports) {
  const auto s = aggregate(std::vector{make_report(2.0, 0, 0), make_report(8.0, 0, 0)});
  EXPECT_EQ(s.rotation.accuracy[0], 0.5);
  EXPECT_EQ(s.rotation.mean, 5.0);
  EXPECT_EQ(s.rotation.median, 5.0);
}

TEST(Aggregate, ThresholdColumns) {
  EXPECT_EQ(kRotationThresholdsDeg, (std::array<double, 3>{5, 10, 45}));
  EXPECT_EQ(kTranslationThresholdsCm, (std::array<double, 3>{5, 10, 25}));
  EXPECT_EQ(kChamferThresholdsCm, (std::array<double, 3>{1, 5, 10}));
}

TEST(Aggregate, AccuracyMonotoneAndStrictThreshold) {
  std::mt19937_64 rng(9);
  std::vector<RegistrationReport> reports;
  for (int i = 0; i < 40; ++i)
    reports.push_back(make_report(uniform(rng, 0, 60), uniform(rng, 0, 30), uniform(rng, 0, 12)));
  reports.push_back(make_report(5.0, 5.0, 1.0));
  EXPECT_FALSE(reports.back().rotation_within[0]);
  EXPECT_FALSE(reports.back().chamfer_within[0]);
  const auto s = aggregate(reports);
  for (const auto* m : {&s.rotation, &s.translation, &s.chamfer}) {
    EXPECT_LE(m->accuracy[0], m->accuracy[1]);
    EXPECT_LE(m->accuracy[1], m->accuracy[2]);
  }
  EXPECT_THROW(aggregate(std::vector<RegistrationReport>{}), InputError);
}

TEST(Aggregate, MeanTimings) {
  auto a = make_report(1, 1, 1);
  auto b = make_report(1, 1, 1);
  a.time_ms["alignment"] = 2.0;
  b.time_ms["alignment"] = 4.0;
  EXPECT_EQ(aggregate(std::vector{a, b}).mean_time_ms.at("alignment"), 3.0);
}
