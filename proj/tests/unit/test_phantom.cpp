#include <gtest/gtest.h>

#include <cmath>

#include "apsusct/errors.hpp"
#include "apsusct/phantom.hpp"

using namespace apsusct;

TEST(Phantom, DeterministicInSeed) {
  const PhantomSpec spec;
  EXPECT_EQ(generate_phantom(spec, 7), generate_phantom(spec, 7));
  EXPECT_NE(generate_phantom(spec, 7), generate_phantom(spec, 8));
}

TEST(Phantom, DegenerateSpecGivesUniformBody) {
  PhantomSpec spec;
  spec.n = 48;
  spec.inclusion_count_min = spec.inclusion_count_max = 0;
  spec.dense_fraction = 0.0;
  const SosMap map = generate_phantom(spec, 3);
  const double r = spec.body_radius();
  std::size_t checked = 0;
  for (std::size_t row = 0; row < spec.n; ++row) {
    for (std::size_t col = 0; col < spec.n; ++col) {
      const auto [x, y] = node_xy(spec.n, spec.dx, row, col);
      const double d = std::hypot(x, y);
      // Away from the smoothed rim the body is pure fat and the bath pure water.
      if (d < r - 2.0 * spec.dx) {
        EXPECT_EQ(map.at(row, col), spec.fat_speed);
        ++checked;
      } else if (d > r + 2.0 * spec.dx) {
        EXPECT_EQ(map.at(row, col), spec.background_speed);
      }
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Phantom, ValuesWithinSpeedRange) {
  PhantomSpec spec;
  spec.inclusion_count_max = 6;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SosMap map = generate_phantom(spec, seed);
    ASSERT_EQ(map.values.size(), spec.n * spec.n);
    EXPECT_GE(map.min(), spec.c_min);
    EXPECT_LE(map.max(), spec.c_max);
  }
}

TEST(Phantom, WaterOutsideBody) {
  const PhantomSpec spec;
  const SosMap map = generate_phantom(spec, 11);
  EXPECT_EQ(map.at(0, 0), spec.background_speed);
  EXPECT_EQ(map.at(spec.n - 1, spec.n - 1), spec.background_speed);
  EXPECT_EQ(map.at(spec.n / 2, 0), spec.background_speed);
}

TEST(Phantom, InvalidSpecsRejected) {
  PhantomSpec spec;
  spec.c_min = 1700.0;
  EXPECT_THROW(generate_phantom(spec, 0), ConfigError);
  spec = PhantomSpec{};
  spec.background_speed = 1700.0;
  EXPECT_THROW(generate_phantom(spec, 0), ConfigError);
  spec = PhantomSpec{};
  spec.inclusion_count_min = 3;
  spec.inclusion_count_max = 1;
  EXPECT_THROW(generate_phantom(spec, 0), ConfigError);
  spec = PhantomSpec{};
  spec.body_radius_fraction = 1.0;
  EXPECT_THROW(generate_phantom(spec, 0), ConfigError);
}

TEST(Dataset, SeedScheduleAndPrefixStability) {
  const PhantomSpec spec;
  const auto two = generate_dataset(spec, 2, 100);
  EXPECT_EQ(two[0], generate_phantom(spec, 100));
  const auto five = generate_dataset(spec, 5, 100);
  EXPECT_EQ(five[0], two[0]);
  EXPECT_EQ(five[1], two[1]);
  EXPECT_THROW(generate_dataset(spec, 0, 1), ConfigError);
}

TEST(Dataset, SixtyFourMapsSatisfyInvariants) {
  const PhantomSpec spec;
  const auto maps = generate_dataset(spec, 64, 9);
  ASSERT_EQ(maps.size(), 64u);
  for (const auto& m : maps) {
    EXPECT_EQ(m.n, spec.n);
    EXPECT_GE(m.min(), spec.c_min);
    EXPECT_LE(m.max(), spec.c_max);
  }
}

TEST(Dataset, DenseClassHasMoreTissue) {
  const PhantomSpec spec;
  const auto maps = generate_dataset(spec, 64, 21);
  double dense = 0.0;
  double fatty = 0.0;
  int dense_n = 0;
  int fatty_n = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const double f = tissue_fraction(maps[i], spec);
    if (dataset_class(spec, i) == PhantomClass::dense) {
      dense += f;
      ++dense_n;
    } else {
      fatty += f;
      ++fatty_n;
    }
  }
  EXPECT_EQ(dense_n, 32);
  EXPECT_EQ(fatty_n, 32);
  EXPECT_GE(dense / dense_n, fatty / fatty_n);
}
