// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "drope/dspace.hpp"
#include "drope/rng.hpp"

using namespace drope;
using namespace drope::dspace;

namespace {

constexpr double kPi = std::numbers::pi;

BVector random_dir(Rng& rng) { return BVector(rng.normal(), rng.normal(), rng.normal()); }

// Rotation from a random unit quaternion.
std::array<std::array<double, 3>, 3> random_rotation(Rng& rng) {
  double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

BVector rotate(const std::array<std::array<double, 3>, 3>& r, const BVector& v) {
  const auto& c = v.components();
  return BVector(r[0][0] * c[0] + r[0][1] * c[1] + r[0][2] * c[2],
                 r[1][0] * c[0] + r[1][1] * c[1] + r[1][2] * c[2],
                 r[2][0] * c[0] + r[2][1] * c[1] + r[2][2] * c[2]);
}

}  // namespace

TEST(BVector, NormalizesAndRejectsZero) {
  const BVector v(2, 0, 0);
  EXPECT_EQ(v.x(), 1.0);
  const BVector u(1, 2, 3);
  EXPECT_NEAR(std::sqrt(u.dot(u)), 1.0, 1e-9);
  EXPECT_THROW(BVector(0, 0, 0), std::invalid_argument);
  EXPECT_THROW(BVector(std::nan(""), 0, 1), std::invalid_argument);
}

TEST(DiffusionPoint, ReferenceFlag) {
  EXPECT_TRUE(DiffusionPoint(0.0, BVector()).is_reference());
  EXPECT_FALSE(DiffusionPoint(1000.0, BVector()).is_reference());
  EXPECT_THROW(DiffusionPoint(-1.0, BVector()), std::invalid_argument);
}

TEST(Distance, Examples) {
  const DistanceParams params;
  const DiffusionPoint p(1000, BVector(1, 0, 0));
  EXPECT_EQ(drope_distance(p, p, params), 0.0);
  EXPECT_EQ(drope_distance(p, DiffusionPoint(1000, BVector(-1, 0, 0)), params), 0.0);
  EXPECT_EQ(drope_distance(p, DiffusionPoint(1000, BVector(-1, 0, 0)), {3.0, 17.0}), 0.0);
  // sqrt(1 + (pi/2)^2) from a 30-digit scalar evaluation.
  EXPECT_NEAR(drope_distance(p, DiffusionPoint(2000, BVector(0, 1, 0)), params),
              1.8620958891185866, 1e-12);
}

TEST(Distance, Errors) {
  const DiffusionPoint p(1000, BVector(1, 0, 0));
  EXPECT_THROW(drope_distance(p, DiffusionPoint(0, BVector()), {}), std::invalid_argument);
  EXPECT_THROW(drope_distance(p, p, {-1.0, 1000.0}), std::invalid_argument);
  EXPECT_THROW(drope_distance(p, p, {1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(drope_distance(p, p, {std::nan(""), 1000.0}), std::invalid_argument);
}

TEST(Distance, ZeroExactlyForSameShellParallel) {
  Rng rng(21);
  const DistanceParams params;
  for (int t = 0; t < 500; ++t) {
    const auto v = random_dir(rng);
    const double b = rng.uniform() < 0.5 ? 1000.0 : 2000.0;
    const DiffusionPoint p(b, v);
    EXPECT_EQ(drope_distance(p, DiffusionPoint(b, v.negated()), params), 0.0);
    const auto w = random_dir(rng);
    const DiffusionPoint q(rng.uniform() < 0.5 ? 1000.0 : 2000.0, w);
    const bool same = q.b == b && std::abs(std::abs(v.dot(w)) - 1.0) < 1e-15;
    EXPECT_EQ(drope_distance(p, q, params) == 0.0, same);
  }
}

TEST(Distance, MonotoneInGamma) {
  const DiffusionPoint p(1000, BVector(1, 1, 0)), q(3000, BVector(0, 1, 1));
  double prev = -1;
  for (double g : {0.0, 0.1, 0.5, 1.0, 2.0, 10.0}) {
    const double d = drope_distance(p, q, {g, 1000.0});
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(Spherical, Examples) {
  const auto a = to_spherical(DiffusionPoint(2000, BVector(0, 0, 1)), 2000);
  EXPECT_EQ(a.rho, 1.0);
  EXPECT_EQ(a.theta, 0.0);
  EXPECT_EQ(a.phi, 0.0);
  const auto b = to_spherical(DiffusionPoint(1000, BVector(1, 0, 0)), 2000);
  EXPECT_EQ(b.rho, 0.5);
  EXPECT_NEAR(b.theta, kPi / 2, 1e-15);
  EXPECT_EQ(b.phi, 0.0);
  const auto c = to_spherical(DiffusionPoint(2000, BVector(0, 1, 0)), 2000);
  EXPECT_NEAR(c.theta, kPi / 2, 1e-15);
  EXPECT_NEAR(c.phi, kPi / 2, 1e-15);
  EXPECT_THROW(to_spherical(DiffusionPoint(1000, BVector()), 0.0), std::invalid_argument);
}

TEST(Spherical, RoundTrip) {
  Rng rng(22);
  for (int t = 0; t < 1000; ++t) {
    const double theta = rng.uniform(1e-3, kPi - 1e-3);
    const double phi = rng.uniform(-kPi, kPi);
    const auto c = to_spherical(DiffusionPoint(1000, from_spherical(theta, phi)), 1000);
    EXPECT_NEAR(c.theta, theta, 1e-9);
    EXPECT_NEAR(c.phi, phi, 1e-9);
    EXPECT_GE(c.phi, -kPi);
    EXPECT_LT(c.phi, kPi);
  }
}

TEST(DistanceMatrix, Examples) {
  const DistanceParams params;
  const std::vector<DiffusionPoint> one = {DiffusionPoint(1000, BVector(1, 0, 0))};
  const auto m1 = pairwise_distance_matrix(one, params);
  ASSERT_EQ(m1.shape(), (nd::Shape{1, 1}));
  EXPECT_EQ(m1.item(), 0.0);

  const std::vector<DiffusionPoint> pts = {DiffusionPoint(1000, BVector(1, 0, 0)),
                                           DiffusionPoint(2000, BVector(0, 1, 0)),
                                           DiffusionPoint(1000, BVector(1, 1, 1))};
  const auto m = pairwise_distance_matrix(pts, params);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(m.at({i, j}), m.at({j, i}));
      EXPECT_EQ(m.at({i, j}), drope_distance(pts[i], pts[j], params));
    }
}

TEST(DistanceMatrix, TableSkipsReferences) {
  const GradientTable table({DiffusionPoint(0, BVector()), DiffusionPoint(1000, BVector(1, 0, 0)),
                             DiffusionPoint(2000, BVector(0, 1, 0))});
  EXPECT_EQ(table.reference_indices(), (std::vector<std::size_t>{0}));
  const auto m = pairwise_distance_matrix(table, {});
  ASSERT_EQ(m.shape(), (nd::Shape{2, 2}));
  EXPECT_EQ(m.at({0, 0}), 0.0);
  EXPECT_GT(m.at({0, 1}), 0.0);
}

TEST(DistanceMatrix, AntipodalAndRotationInvariance) {
  Rng rng(23);
  const DistanceParams params;
  for (int t = 0; t < 100; ++t) {
    std::vector<DiffusionPoint> pts, flipped, rotated;
    const auto r = random_rotation(rng);
    for (int i = 0; i < 12; ++i) {
      const auto v = random_dir(rng);
      const double b = 1000.0 * (1 + rng.below(3));
      pts.emplace_back(b, v);
      flipped.emplace_back(b, rng.uniform() < 0.5 ? v.negated() : v);
      rotated.emplace_back(b, rotate(r, v));
    }
    const auto a = pairwise_distance_matrix(pts, params);
    const auto f = pairwise_distance_matrix(flipped, params);
    const auto g = pairwise_distance_matrix(rotated, params);
    for (std::size_t i = 0; i < a.numel(); ++i) {
      EXPECT_NEAR(f.data()[i], a.data()[i], 1e-12);
      EXPECT_NEAR(g.data()[i], a.data()[i], 1e-9);
    }
  }
}
