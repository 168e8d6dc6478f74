#include "tacrefine/binary_io.hpp"
#include "tacrefine/geometry.hpp"
#include "tacrefine/rng.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

using namespace tacrefine;

TEST(Rng, SameKeyAndCounterRepeat) {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  CounterRng c(42, 50);
  CounterRng d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(Rng, UniformRangeAndMoments) {
  CounterRng rng(7);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  sum = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRangeAndCoversAll) {
  CounterRng rng(3);
  std::array<int, 7> hits{};
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, DeriveSeedSeparatesTags) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
}

TEST(Geometry, WrapAngle) {
  const double pi = std::numbers::pi;
  EXPECT_DOUBLE_EQ(wrap_angle(0.3), 0.3);
  EXPECT_DOUBLE_EQ(wrap_angle(pi), pi);
  EXPECT_NEAR(wrap_angle(-pi), pi, 1e-12);
  EXPECT_NEAR(wrap_angle(3 * pi / 2), -pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(-5 * pi / 2), -pi / 2, 1e-12);
  CounterRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50, 50);
    const double w = wrap_angle(a);
    EXPECT_GT(w, -pi);
    EXPECT_LE(w, pi);
    EXPECT_NEAR(std::remainder(a - w, 2 * pi), 0.0, 1e-9);
  }
}

TEST(Geometry, QuaternionMatchesRotationMatrix) {
  CounterRng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double r = rng.uniform(-1, 1), p = rng.uniform(-1, 1), y = rng.uniform(-3, 3);
    const Eigen::Quaterniond q = quaternion_from_rpy(r, p, y);
    EXPECT_NEAR(q.norm(), 1.0, 1e-12);
    EXPECT_TRUE(q.toRotationMatrix().isApprox(rotation_from_rpy(r, p, y), 1e-12));
  }
}

TEST(Geometry, IsometryRoundTrip) {
  CounterRng rng(6);
  for (int i = 0; i < 200; ++i) {
    Pose6 p{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3),
             rng.uniform(-1.4, 1.4), rng.uniform(-3, 3)}};
    const Pose6 back = from_isometry(to_isometry(p));
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(back[k], p[k], 1e-9);
  }
}

TEST(Geometry, DifferenceThenIncrementRecoversTarget) {
  CounterRng rng(8);
  for (int i = 0; i < 500; ++i) {
    Pose6 a, b;
    for (int k = 0; k < 6; ++k) {
      a[k] = k < 3 ? rng.uniform(-1, 1) : rng.uniform(-3, 3);
      b[k] = k < 3 ? rng.uniform(-1, 1) : rng.uniform(-3, 3);
    }
    const Vec6 d = pose_difference(b, a);
    for (int k = 3; k < 6; ++k) {
      EXPECT_GT(d[k], -std::numbers::pi);
      EXPECT_LE(d[k], std::numbers::pi);
    }
    const Pose6 c = apply_increment(a, d);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(c[k], b[k], 1e-12);
  }
}

TEST(Geometry, DifferenceWrapsAcrossPi) {
  Pose6 a, b;
  a[kYaw] = 3.1;
  b[kYaw] = -3.1;
  EXPECT_NEAR(pose_difference(b, a)[kYaw], 2 * std::numbers::pi - 6.2, 1e-12);
}

TEST(BinaryIo, Crc32KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(io::crc32_of({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
}

TEST(BinaryIo, RoundTripAndCorruption) {
  const auto path = std::filesystem::temp_directory_path() / "tacrefine_io_test.bin";
  io::Writer w;
  w.put(std::uint32_t{7});
  w.put(2.5);
  w.finish(path);
  {
    io::Reader r(path);
    EXPECT_EQ(r.get<std::uint32_t>(), 7u);
    EXPECT_EQ(r.get<double>(), 2.5);
    r.expect_end();
    EXPECT_THROW(r.get<std::uint8_t>(), Error);
  }
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1);
    f.put('\x55');
  }
  try {
    io::Reader r(path);
    FAIL() << "corruption not detected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::checksum);
    EXPECT_NE(std::string(e.what()).find("offset 12"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
