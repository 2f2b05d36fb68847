#include "mash/tokens.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace mash {
namespace {

FrameEmbeddings make_frames(int t, int h, int w, int d) {
  FrameEmbeddings fe;
  fe.frames = t;
  fe.grid_h = h;
  fe.grid_w = w;
  fe.patches = Mat::Zero(Eigen::Index{t} * h * w, d);
  fe.cls = Mat::Zero(t, d);
  return fe;
}

// Values on a 1/64 grid so every mean in the pipeline is exact.
FrameEmbeddings dyadic_frames(std::mt19937_64& rng, int t, int h, int w, int d) {
  FrameEmbeddings fe = make_frames(t, h, w, d);
  std::uniform_int_distribution<int> v(-64, 64);
  for (Eigen::Index i = 0; i < fe.patches.size(); ++i) fe.patches.data()[i] = v(rng) / 64.0;
  for (Eigen::Index i = 0; i < fe.cls.size(); ++i) fe.cls.data()[i] = v(rng) / 64.0;
  return fe;
}

void set_frame(FrameEmbeddings& fe, int t, double value) {
  fe.patches.middleRows(Eigen::Index{t} * fe.patches_per_frame(), fe.patches_per_frame()).setConstant(value);
}

TEST(FrameEmbeddings, Validation) {
  EXPECT_NO_THROW(make_frames(4, 2, 2, 3).validate());
  EXPECT_THROW(make_frames(5, 2, 2, 3).validate(), ValidationError);
  EXPECT_THROW(make_frames(4, 3, 2, 3).validate(), ValidationError);
  EXPECT_THROW(make_frames(0, 2, 2, 3).validate(), ValidationError);
  FrameEmbeddings bad = make_frames(4, 2, 2, 3);
  bad.patches(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(SpatialTokens, ConstantFramesGiveConstantTokens) {
  FrameEmbeddings fe = make_frames(8, 4, 6, 3);
  fe.patches.setConstant(2.5);
  Mat s = build_spatial_tokens(fe);
  EXPECT_EQ(s.rows(), 24);
  EXPECT_TRUE((s.array() == 2.5).all());
}

TEST(SpatialTokens, SegmentsInTemporalOrder) {
  FrameEmbeddings fe = make_frames(4, 2, 2, 1);
  for (int t = 0; t < 4; ++t) set_frame(fe, t, t + 1.0);
  Mat s = build_spatial_tokens(fe);
  ASSERT_EQ(s.rows(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s(i, 0), i + 1.0);
  EXPECT_THROW(build_spatial_tokens(make_frames(5, 2, 2, 1)), ValidationError);
}

TEST(SpatialTokens, PoolsTwoByTwoRowMajor) {
  // One frame per segment, 4x4 grid; check each pooled cell against a direct average.
  FrameEmbeddings fe = make_frames(4, 4, 4, 1);
  for (Eigen::Index i = 0; i < fe.patches.rows(); ++i) fe.patches(i, 0) = static_cast<double>(i);
  Mat s = build_spatial_tokens(fe);
  Eigen::Index row = 0;
  for (int seg = 0; seg < 4; ++seg) {
    for (int r = 0; r < 4; r += 2) {
      for (int c = 0; c < 4; c += 2) {
        const double base = seg * 16.0;
        const double expect = (base + r * 4 + c + base + r * 4 + c + 1 + base + (r + 1) * 4 + c +
                               base + (r + 1) * 4 + c + 1) / 4.0;
        EXPECT_EQ(s(row++, 0), expect);
      }
    }
  }
}

TEST(TemporalTokens, CountAndBlocks) {
  FrameEmbeddings fe = make_frames(8, 2, 2, 2);
  EXPECT_EQ(build_temporal_tokens(fe).rows(), 23);

  FrameEmbeddings ramp = make_frames(4, 2, 2, 1);
  for (int t = 0; t < 4; ++t) {
    set_frame(ramp, t, t + 1.0);
    ramp.cls(t, 0) = 10.0 * t;
  }
  Mat tok = build_temporal_tokens(ramp);
  ASSERT_EQ(tok.rows(), 11);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(tok(t, 0), 10.0 * t);
    EXPECT_EQ(tok(4 + t, 0), t + 1.0);
  }
  for (int t = 0; t < 3; ++t) EXPECT_EQ(tok(8 + t, 0), 1.0);
}

TEST(TemporalTokens, StaticVideoHasZeroDifferences) {
  std::mt19937_64 rng(2);
  FrameEmbeddings fe = dyadic_frames(rng, 8, 4, 4, 3);
  for (int t = 1; t < 8; ++t) fe.patches.middleRows(t * 16, 16) = fe.patches.topRows(16);
  Mat tok = build_temporal_tokens(fe);
  EXPECT_TRUE((tok.bottomRows(7).array() == 0.0).all());
}

TEST(TokenProperties, OutputShapes) {
  std::mt19937_64 rng(3);
  for (int t : {4, 8, 12}) {
    for (int h : {2, 4, 6}) {
      FrameEmbeddings fe = dyadic_frames(rng, t, h, 4, 5);
      EXPECT_EQ(build_spatial_tokens(fe).rows(), h * 4);
      EXPECT_EQ(build_temporal_tokens(fe).rows(), 3 * t - 1);
      EXPECT_EQ(build_spatial_tokens(fe).cols(), 5);
    }
  }
}

TEST(TokenProperties, PatchPermutationWithinFrame) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    FrameEmbeddings fe = dyadic_frames(rng, 8, 4, 4, 3);
    FrameEmbeddings perm = fe;
    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int t = trial % 8;
    for (int p = 0; p < 16; ++p) perm.patches.row(t * 16 + p) = fe.patches.row(t * 16 + order[static_cast<std::size_t>(p)]);
    Mat a = build_temporal_tokens(fe), b = build_temporal_tokens(perm);
    // Dyadic entries keep every sum exact, so block equality is bitwise.
    EXPECT_EQ(a, b);
    EXPECT_NE(build_spatial_tokens(fe), build_spatial_tokens(perm));
  }
}

TEST(TokenProperties, FrameOrderWithinVsAcrossSegments) {
  std::mt19937_64 rng(5);
  FrameEmbeddings fe = dyadic_frames(rng, 8, 4, 4, 2);
  FrameEmbeddings within = fe;
  // Segments hold frames {0,1}, {2,3}, ...; swap the two frames of segment 1.
  within.patches.middleRows(2 * 16, 16) = fe.patches.middleRows(3 * 16, 16);
  within.patches.middleRows(3 * 16, 16) = fe.patches.middleRows(2 * 16, 16);
  EXPECT_EQ(build_spatial_tokens(fe), build_spatial_tokens(within));

  FrameEmbeddings across = fe;
  across.patches.middleRows(1 * 16, 16) = fe.patches.middleRows(2 * 16, 16);
  across.patches.middleRows(2 * 16, 16) = fe.patches.middleRows(1 * 16, 16);
  EXPECT_NE(build_spatial_tokens(fe), build_spatial_tokens(across));
}

TEST(TokenProperties, TimeReversal) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int t = 8;
    FrameEmbeddings fe = dyadic_frames(rng, t, 2, 4, 3);
    FrameEmbeddings rev = fe;
    for (int f = 0; f < t; ++f) {
      rev.patches.middleRows(f * 8, 8) = fe.patches.middleRows((t - 1 - f) * 8, 8);
      rev.cls.row(f) = fe.cls.row(t - 1 - f);
    }
    Mat a = build_temporal_tokens(fe), b = build_temporal_tokens(rev);
    for (int f = 0; f < t; ++f) {
      EXPECT_EQ(Mat(b.row(f)), Mat(a.row(t - 1 - f)));
      EXPECT_EQ(Mat(b.row(t + f)), Mat(a.row(2 * t - 1 - f)));
    }
    for (int f = 0; f < t - 1; ++f) {
      EXPECT_EQ(Mat(b.row(2 * t + f)), Mat(-a.row(2 * t + (t - 2 - f))));
    }
  }
}

TEST(AssembleSequence, Layout) {
  Mat temporal = Mat::Ones(2, 3), spatial = Mat::Constant(4, 3, 2.0), text = Mat::Constant(3, 3, 3.0);
  TokenSequence seq = assemble_sequence(temporal, spatial, text);
  std::string letters;
  for (TokenType t : seq.layout.tags) letters += type_letter(t);
  EXPECT_EQ(letters, "ttssssxxx");
  EXPECT_EQ(seq.tokens.rows(), 9);
  EXPECT_EQ(seq.tokens(0, 0), 1.0);
  EXPECT_EQ(seq.tokens(2, 0), 2.0);
  EXPECT_EQ(seq.tokens(8, 0), 3.0);
  EXPECT_EQ(seq.layout.ids.distinct, (std::vector<std::int64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(seq.layout.ids.balanced, (std::vector<std::int64_t>{3, 4, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(AssembleSequence, Rejections) {
  EXPECT_THROW(assemble_sequence(Mat(0, 3), Mat::Ones(4, 3), Mat::Ones(1, 3)), ValidationError);
  EXPECT_THROW(assemble_sequence(Mat::Ones(5, 3), Mat::Ones(4, 3), Mat::Ones(1, 3)), ValidationError);
  EXPECT_THROW(assemble_sequence(Mat::Ones(2, 3), Mat::Ones(4, 2), Mat::Ones(1, 3)), ShapeError);
}

TEST(AssembleSequence, FromFramePipeline) {
  FrameEmbeddings fe = make_frames(4, 4, 4, 2);
  Mat text = Mat::Zero(5, 2);
  TokenSequence seq = assemble_sequence(build_temporal_tokens(fe), build_spatial_tokens(fe), text);
  EXPECT_EQ(seq.layout.temporal, 11);
  EXPECT_EQ(seq.layout.spatial, 16);
  EXPECT_EQ(seq.layout.size(), 27 + 5);
}

}  // namespace
}  // namespace mash
