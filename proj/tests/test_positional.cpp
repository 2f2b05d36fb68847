#include "mash/positional.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace mash {
namespace {

using Ids = std::vector<std::int64_t>;

TEST(Theta, Values) {
  RopeConfig cfg{8, 10000.0};
  EXPECT_EQ(theta(0, cfg), 1.0);
  EXPECT_NEAR(theta(1, cfg), 0.1, 1e-15);
  EXPECT_NEAR(theta(3, cfg), 0.001, 1e-17);
  EXPECT_THROW(theta(4, cfg), ValidationError);
  EXPECT_THROW(theta(-1, cfg), ValidationError);
}

TEST(RopeConfig, Validation) {
  EXPECT_THROW((RopeConfig{3, 10000.0}.validate()), ValidationError);
  EXPECT_THROW((RopeConfig{0, 10000.0}.validate()), ValidationError);
  EXPECT_THROW((RopeConfig{4, 1.0}.validate()), ValidationError);
}

TEST(RopeRotate, ZeroPositionIsIdentity) {
  Eigen::VectorXd x(4);
  x << 0.3, -1.2, 2.5, 0.7;
  EXPECT_EQ(rope_rotate(x, 0, RopeConfig{4, 10000.0}), x);
}

TEST(RopeRotate, UnitVectorQuarterExample) {
  Eigen::VectorXd x(2);
  x << 1, 0;
  Eigen::VectorXd r = rope_rotate(x, 1, RopeConfig{2, 10000.0});
  EXPECT_NEAR(r(0), 0.54030231, 1e-8);
  EXPECT_NEAR(r(1), 0.84147098, 1e-8);
}

TEST(RopeRotate, RejectsWrongLength) {
  Eigen::VectorXd x(3);
  x.setOnes();
  EXPECT_THROW(rope_rotate(x, 1, RopeConfig{4, 10000.0}), ShapeError);
}

TEST(RopeRotate, PreservesNorm) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<std::int64_t> pos(0, 5000);
  const RopeConfig cfg{16, 10000.0};
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd x(16);
    for (int i = 0; i < 16; ++i) x(i) = n(rng);
    EXPECT_NEAR(rope_rotate(x, pos(rng), cfg).norm(), x.norm(), 1e-12);
  }
}

TEST(RopeRotate, RelativePositionProperty) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<std::int64_t> pos(0, 200), shift(-100, 100);
  const RopeConfig cfg{8, 10000.0};
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd q(8), k(8);
    for (int i = 0; i < 8; ++i) {
      q(i) = n(rng);
      k(i) = n(rng);
    }
    const std::int64_t m = pos(rng) + 100, p = pos(rng) + 100, s = shift(rng);
    const double base = rope_rotate(q, m, cfg).dot(rope_rotate(k, p, cfg));
    const double shifted = rope_rotate(q, m + s, cfg).dot(rope_rotate(k, p + s, cfg));
    EXPECT_NEAR(base, shifted, 1e-9);
  }
}

TEST(PositionIds, DistinctExamples) {
  EXPECT_EQ(distinct_ids(4, 2, 3), (Ids{1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_TRUE(distinct_ids(0, 0, 0).empty());
  EXPECT_EQ(distinct_ids(1, 1, 1), (Ids{1, 2, 3}));
}

TEST(PositionIds, BalancedExamples) {
  EXPECT_EQ(balanced_ids(4, 2, 3), (Ids{3, 4, 1, 2, 3, 4, 5, 6, 7}));
  const Ids equal = balanced_ids(3, 3, 1);
  EXPECT_EQ(Ids(equal.begin(), equal.begin() + 3), Ids(equal.begin() + 3, equal.begin() + 6));
  EXPECT_THROW(balanced_ids(4, 5, 0), ValidationError);
}

TEST(PositionIds, BalancedBlocksEndTogether) {
  for (std::int64_t n = 1; n < 40; ++n) {
    for (std::int64_t m = 1; m <= n; ++m) {
      const Ids b = balanced_ids(n, m, 2);
      EXPECT_EQ(b[static_cast<std::size_t>(m - 1)], n);            // last temporal
      EXPECT_EQ(b[static_cast<std::size_t>(m + n - 1)], n);        // last spatial
      EXPECT_EQ(b[static_cast<std::size_t>(m + n)], n + 1);        // first text
      EXPECT_GE(*std::min_element(b.begin(), b.end()), 1);
    }
  }
}

TEST(PositionIds, DecodeExtension) {
  PositionIds ids = position_ids(4, 2, 3);
  extend_text_ids(ids, 2);
  EXPECT_EQ(ids.distinct, (Ids{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  EXPECT_EQ(ids.balanced, (Ids{3, 4, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(HarmonicRotate, PairParityFollowsBalancedThenDistinct) {
  // One token with distinct id 9 and balanced id 5.
  PositionIds ids{{9}, {5}};
  const RopeConfig cfg{4, 10000.0};
  Mat x(1, 4);
  x << 1, 0, 1, 0;
  Mat r = harmonic_rotate(x, ids, cfg, RopeScheme::harmonic);
  const double a0 = 5 * theta(0, cfg), a1 = 9 * theta(1, cfg);
  EXPECT_EQ(r(0, 0), std::cos(a0));
  EXPECT_EQ(r(0, 1), std::sin(a0));
  EXPECT_EQ(r(0, 2), std::cos(a1));
  EXPECT_EQ(r(0, 3), std::sin(a1));
}

TEST(HarmonicRotate, IdenticalTracksGiveDistinctOutput) {
  PositionIds ids{{1, 2, 3}, {1, 2, 3}};
  const RopeConfig cfg{6, 10000.0};
  Mat x = Mat::Random(3, 6);
  EXPECT_EQ(harmonic_rotate(x, ids, cfg, RopeScheme::harmonic),
            harmonic_rotate(x, ids, cfg, RopeScheme::distinct));
}

TEST(HarmonicRotate, InterleavesPureSchemesBitwise) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  const RopeConfig cfg{8, 10000.0};
  PositionIds ids = position_ids(9, 5, 4);
  Mat x(static_cast<Eigen::Index>(ids.size()), 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  Mat h = harmonic_rotate(x, ids, cfg, RopeScheme::harmonic);
  Mat b = harmonic_rotate(x, ids, cfg, RopeScheme::balanced);
  Mat d = harmonic_rotate(x, ids, cfg, RopeScheme::distinct);
  for (int k = 0; k < 4; ++k) {
    const Mat& ref = k % 2 == 0 ? b : d;
    EXPECT_EQ(h.middleCols(2 * k, 2), ref.middleCols(2 * k, 2)) << "pair " << k;
  }
}

TEST(HarmonicRotate, MatchesPerVectorRotation) {
  const RopeConfig cfg{8, 500.0};
  PositionIds ids = position_ids(6, 4, 2);
  Mat x = Mat::Random(static_cast<Eigen::Index>(ids.size()), 8);
  Mat d = harmonic_rotate(x, ids, cfg, RopeScheme::distinct);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::VectorXd row = x.row(i).transpose();
    EXPECT_EQ(Eigen::VectorXd(d.row(i).transpose()),
              rope_rotate(row, ids.distinct[static_cast<std::size_t>(i)], cfg));
  }
  EXPECT_THROW(harmonic_rotate(Mat::Zero(3, 8), ids, cfg, RopeScheme::distinct), ShapeError);
}

TEST(HarmonicRotate, BalancedEquidistanceOfBlockEnds) {
  // With balanced ids the last temporal and last spatial token share id N,
  // so even-pair relative rotation to any text token is identical.
  const std::int64_t n = 6, m = 4, l = 3;
  PositionIds ids = position_ids(n, m, l);
  const std::size_t last_t = static_cast<std::size_t>(m - 1);
  const std::size_t last_s = static_cast<std::size_t>(m + n - 1);
  EXPECT_EQ(ids.balanced[last_t], ids.balanced[last_s]);
  const RopeConfig cfg{8, 10000.0};
  RotationTable t = RotationTable::build(ids, cfg, RopeScheme::harmonic);
  for (int k = 0; k < 4; k += 2) {
    EXPECT_EQ(t.cos(static_cast<Eigen::Index>(last_t), k), t.cos(static_cast<Eigen::Index>(last_s), k));
    EXPECT_EQ(t.sin(static_cast<Eigen::Index>(last_t), k), t.sin(static_cast<Eigen::Index>(last_s), k));
  }
}

TEST(RotationTable, TransposeInvertsRotation) {
  const RopeConfig cfg{8, 10000.0};
  PositionIds ids = position_ids(5, 3, 2);
  RotationTable t = RotationTable::build(ids, cfg, RopeScheme::harmonic);
  Mat x = Mat::Random(10, 8);
  EXPECT_LT((t.apply(t.apply(x), true) - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RopeScheme, StringRoundTrip) {
  for (RopeScheme s : {RopeScheme::distinct, RopeScheme::balanced, RopeScheme::harmonic}) {
    EXPECT_EQ(parse_rope_scheme(to_string(s)), s);
  }
  EXPECT_THROW(parse_rope_scheme("yarn"), ValidationError);
}

}  // namespace
}  // namespace mash
