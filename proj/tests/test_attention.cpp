#include "mash/attention.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace mash {
namespace {

std::vector<TokenType> tags_of(const std::string& letters) {
  std::vector<TokenType> t;
  for (char c : letters) {
    t.push_back(c == 't' ? TokenType::temporal : c == 's' ? TokenType::spatial : TokenType::text);
  }
  return t;
}

std::vector<std::vector<int>> allowed_sets(const DstMask& m) {
  std::vector<std::vector<int>> rows;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::vector<int> r;
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      if (m.allowed(i, j)) r.push_back(static_cast<int>(j));
    }
    rows.push_back(r);
  }
  return rows;
}

TEST(DisentanglingMask, Examples) {
  Mat m = disentangling_mask(tags_of("ts"));
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_TRUE(std::isinf(m(0, 1)) && m(0, 1) < 0);
  EXPECT_TRUE(std::isinf(m(1, 0)));
  EXPECT_EQ(m(1, 1), 0.0);

  EXPECT_TRUE((disentangling_mask(tags_of("ssss")).array() == 0.0).all());

  Mat four = disentangling_mask(tags_of("ttss"));
  EXPECT_EQ((four.array() == neg_inf<double>()).count(), 8);
  // Text rows are outside the visual block.
  EXPECT_EQ(disentangling_mask(tags_of("tsxx")).rows(), 2);
}

TEST(StructuredMask, Examples) {
  AttentionConfig cfg;
  Mat tt = structured_st_mask(tags_of("tt"), cfg);
  EXPECT_EQ(tt(0, 0), 0.0);
  EXPECT_EQ(tt(0, 1), neg_inf<double>());
  EXPECT_EQ(tt(1, 0), 0.0);
  EXPECT_EQ(tt(1, 1), 0.0);
  EXPECT_TRUE((structured_st_mask(tags_of("ss"), cfg).array() == 0.0).all());

  cfg.temporal_attn = Direction::bidirectional;
  EXPECT_TRUE((structured_st_mask(tags_of("ttt"), cfg).array() == 0.0).all());
  cfg.spatial_attn = Direction::causal;
  Mat ss = structured_st_mask(tags_of("tss"), cfg);
  EXPECT_EQ(ss(1, 2), neg_inf<double>());
  EXPECT_EQ(ss(2, 1), 0.0);
  EXPECT_EQ(ss(0, 2), 0.0);  // cross-type left to the disentangling term
}

TEST(FullDstMask, DefaultExample) {
  AttentionConfig cfg;
  DstMask m = full_dst_mask(tags_of("ttssx"), cfg);
  EXPECT_EQ(allowed_sets(m), (std::vector<std::vector<int>>{{0}, {0, 1}, {2, 3}, {2, 3}, {0, 1, 2, 3, 4}}));
  EXPECT_TRUE(m.disentangled);
}

TEST(FullDstMask, WithoutDisentangling) {
  AttentionConfig cfg;
  cfg.disentangle = false;
  DstMask m = full_dst_mask(tags_of("tsx"), cfg);
  EXPECT_EQ(allowed_sets(m), (std::vector<std::vector<int>>{{0}, {0, 1}, {0, 1, 2}}));
}

TEST(FullDstMask, FullCausalBaseline) {
  AttentionConfig cfg;
  cfg.mask_mode = MaskMode::full_causal;
  DstMask m = full_dst_mask(tags_of("tsx"), cfg);
  EXPECT_EQ(allowed_sets(m), (std::vector<std::vector<int>>{{0}, {0, 1}, {0, 1, 2}}));
}

TEST(FullDstMask, RejectsBrokenLayout) {
  AttentionConfig cfg;
  EXPECT_THROW(full_dst_mask(tags_of("tsxt"), cfg), ValidationError);
  EXPECT_THROW(full_dst_mask(tags_of("stx"), cfg), ValidationError);
}

TEST(FullDstMask, CombinationOrderIsIrrelevant) {
  AttentionConfig cfg;
  const auto tags = tags_of("tttssss");
  Mat d = disentangling_mask(tags), st = structured_st_mask(tags, cfg);
  EXPECT_EQ(Mat(d + st), Mat(st + d));
}

TEST(FullDstMask, EveryRowAdmitsItselfAndTextSeesAllVisual) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> count(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    std::string letters(static_cast<std::size_t>(1 + count(rng)), 't');
    letters += std::string(static_cast<std::size_t>(count(rng)), 's');
    letters += std::string(static_cast<std::size_t>(count(rng)), 'x');
    AttentionConfig cfg;
    cfg.disentangle = trial % 2 == 0;
    cfg.temporal_attn = trial % 3 == 0 ? Direction::bidirectional : Direction::causal;
    cfg.spatial_attn = trial % 5 == 0 ? Direction::causal : Direction::bidirectional;
    cfg.mask_mode = trial % 7 == 0 ? MaskMode::full_causal : MaskMode::dst;
    DstMask m = full_dst_mask(tags_of(letters), cfg);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      EXPECT_TRUE(m.allowed(i, i));
      if (letters[static_cast<std::size_t>(i)] == 'x') {
        for (Eigen::Index j = 0; j < m.size(); ++j) {
          if (letters[static_cast<std::size_t>(j)] != 'x') EXPECT_TRUE(m.allowed(i, j));
        }
      }
    }
  }
}

// Loop-level multi-head attention, written without the tape or rotation tables.
Mat naive_attention(const Mat& q, const Mat& k, const Mat& v, const DstMask& mask,
                    const PositionIds& ids, const AttentionConfig& cfg) {
  const Eigen::Index s = q.rows();
  Mat out = Mat::Zero(s, cfg.width());
  const RopeConfig rc = cfg.rope();
  for (int h = 0; h < cfg.heads; ++h) {
    const int off = h * cfg.head_dim;
    std::vector<Eigen::VectorXd> qr, kr;
    for (Eigen::Index i = 0; i < s; ++i) {
      Eigen::VectorXd qi(cfg.head_dim), ki(cfg.head_dim);
      for (int p = 0; p < cfg.head_dim / 2; ++p) {
        const auto row = static_cast<std::size_t>(i);
        const std::int64_t pos = pair_position(ids, row, p, cfg.rope_scheme);
        const double a = static_cast<double>(pos) * std::pow(rc.base, -2.0 * p / rc.head_dim);
        const double c = std::cos(a), sn = std::sin(a);
        qi(2 * p) = c * q(i, off + 2 * p) - sn * q(i, off + 2 * p + 1);
        qi(2 * p + 1) = sn * q(i, off + 2 * p) + c * q(i, off + 2 * p + 1);
        ki(2 * p) = c * k(i, off + 2 * p) - sn * k(i, off + 2 * p + 1);
        ki(2 * p + 1) = sn * k(i, off + 2 * p) + c * k(i, off + 2 * p + 1);
      }
      qr.push_back(qi);
      kr.push_back(ki);
    }
    for (Eigen::Index i = 0; i < s; ++i) {
      std::vector<double> w(static_cast<std::size_t>(s), 0.0);
      double mx = -1e300, total = 0.0;
      for (Eigen::Index j = 0; j < s; ++j) {
        if (!mask.allowed(i, j)) continue;
        w[static_cast<std::size_t>(j)] = qr[static_cast<std::size_t>(i)].dot(kr[static_cast<std::size_t>(j)]) / std::sqrt(double(cfg.head_dim));
        mx = std::max(mx, w[static_cast<std::size_t>(j)]);
      }
      for (Eigen::Index j = 0; j < s; ++j) {
        if (!mask.allowed(i, j)) continue;
        w[static_cast<std::size_t>(j)] = std::exp(w[static_cast<std::size_t>(j)] - mx);
        total += w[static_cast<std::size_t>(j)];
      }
      for (Eigen::Index j = 0; j < s; ++j) {
        if (!mask.allowed(i, j)) continue;
        for (int c = 0; c < cfg.head_dim; ++c) out(i, off + c) += w[static_cast<std::size_t>(j)] / total * v(j, off + c);
      }
    }
  }
  return out;
}

struct Fixture {
  AttentionConfig cfg;
  SequenceLayout layout;
  DstMask mask;
  Mat q, k, v;
};

Fixture random_fixture(std::mt19937_64& rng, int m, int n, int l, AttentionConfig cfg) {
  Fixture f{cfg, make_layout(m, n, l), {}, {}, {}, {}};
  f.mask = full_dst_mask(f.layout.tags, cfg);
  std::normal_distribution<double> g;
  const auto s = f.layout.size();
  f.q = Mat(s, cfg.width());
  f.k = Mat(s, cfg.width());
  f.v = Mat(s, cfg.width());
  for (Mat* x : {&f.q, &f.k, &f.v}) {
    for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = g(rng);
  }
  return f;
}

Mat run(const Fixture& f, const Mat& v) {
  Tape tape;
  return attend(tape.constant(f.q), tape.constant(f.k), tape.constant(v), f.mask, f.layout.ids, f.cfg)
      .output.value();
}

TEST(Attend, SingleTokenReturnsValue) {
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.head_dim = 4;
  PositionIds ids{{1}, {1}};
  DstMask mask{Mat::Zero(1, 1), MaskMode::dst, true};
  Tape tape;
  Mat v = Mat::Random(1, 8);
  Mat out = attend(tape.constant(Mat::Random(1, 8)), tape.constant(Mat::Random(1, 8)),
                   tape.constant(v), mask, ids, cfg)
                .output.value();
  EXPECT_EQ(out, v);
}

TEST(Attend, MatchesNaiveReference) {
  std::mt19937_64 rng(11);
  for (RopeScheme scheme : {RopeScheme::distinct, RopeScheme::balanced, RopeScheme::harmonic}) {
    for (MaskMode mode : {MaskMode::dst, MaskMode::full_causal}) {
      AttentionConfig cfg;
      cfg.heads = 2;
      cfg.head_dim = 4;
      cfg.rope_scheme = scheme;
      cfg.mask_mode = mode;
      Fixture f = random_fixture(rng, 1, 2, 1, cfg);  // S = 4
      Mat fast = run(f, f.v);
      Mat ref = naive_attention(f.q, f.k, f.v, f.mask, f.layout.ids, cfg);
      EXPECT_LT((fast - ref).cwiseAbs().maxCoeff(), 1e-12);

      Fixture big = random_fixture(rng, 5, 9, 4, cfg);
      EXPECT_LT((run(big, big.v) - naive_attention(big.q, big.k, big.v, big.mask, big.layout.ids, cfg))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-12);
    }
  }
}

TEST(Attend, MaskedSourcesDoNotContribute) {
  std::mt19937_64 rng(12);
  AttentionConfig cfg;
  Fixture f = random_fixture(rng, 5, 8, 3, cfg);
  Mat base = run(f, f.v);
  for (Eigen::Index j = 0; j < f.mask.size(); ++j) {
    Mat v2 = f.v;
    v2.row(j).array() += 3.0;
    Mat pert = run(f, v2);
    for (Eigen::Index i = 0; i < f.mask.size(); ++i) {
      if (!f.mask.allowed(i, j)) {
        EXPECT_EQ(Mat(pert.row(i)), Mat(base.row(i))) << i << " <- " << j;
      }
    }
  }
}

TEST(Attend, DisentangledRowsIgnoreOtherType) {
  std::mt19937_64 rng(13);
  AttentionConfig cfg;
  Fixture f = random_fixture(rng, 5, 8, 2, cfg);
  Mat q2 = f.q, k2 = f.k, v2 = f.v;
  std::normal_distribution<double> g;
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < cfg.width(); ++c) {
      q2(i, c) = g(rng);
      k2(i, c) = g(rng);
      v2(i, c) = g(rng);
    }
  }
  Tape tape;
  Mat changed = attend(tape.constant(q2), tape.constant(k2), tape.constant(v2), f.mask,
                       f.layout.ids, cfg)
                    .output.value();
  Mat base = run(f, f.v);
  EXPECT_EQ(Mat(changed.middleRows(5, 8)), Mat(base.middleRows(5, 8)));
  EXPECT_NE(Mat(changed.bottomRows(2)), Mat(base.bottomRows(2)));
}

TEST(Attend, TemporalCausality) {
  std::mt19937_64 rng(14);
  AttentionConfig cfg;
  cfg.disentangle = false;
  Fixture f = random_fixture(rng, 6, 8, 2, cfg);
  Mat base = run(f, f.v);
  for (int j = 0; j < 6; ++j) {
    Mat v2 = f.v;
    v2.row(j).array() -= 1.5;
    Mat pert = run(f, v2);
    for (int i = 0; i < j; ++i) EXPECT_EQ(Mat(pert.row(i)), Mat(base.row(i)));
  }
}

TEST(Attend, ArgmaxStableUnderValueScaling) {
  std::mt19937_64 rng(15);
  AttentionConfig cfg;
  cfg.rope_scheme = RopeScheme::balanced;
  Fixture f = random_fixture(rng, 4, 6, 3, cfg);
  Tape t1, t2;
  AttentionResult a = attend(t1.constant(f.q), t1.constant(f.k), t1.constant(f.v), f.mask, f.layout.ids, cfg);
  AttentionResult b = attend(t2.constant(f.q), t2.constant(f.k), t2.constant(f.v * 3.0), f.mask, f.layout.ids, cfg);
  EXPECT_LT((b.output.value() - 3.0 * a.output.value()).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t h = 0; h < a.probs.size(); ++h) {
    for (Eigen::Index i = 0; i < a.probs[h].rows(); ++i) {
      Eigen::Index ja, jb;
      a.probs[h].row(i).maxCoeff(&ja);
      b.probs[h].row(i).maxCoeff(&jb);
      EXPECT_EQ(ja, jb);
    }
  }
}

TEST(Attend, ShapeErrors) {
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.head_dim = 4;
  PositionIds ids = position_ids(2, 1, 1);
  DstMask mask = full_dst_mask(make_layout(1, 2, 1).tags, cfg);
  Tape tape;
  Var ok = tape.constant(Mat::Zero(4, 8));
  Var narrow = tape.constant(Mat::Zero(4, 6));
  EXPECT_THROW(attend(narrow, ok, ok, mask, ids, cfg), ShapeError);
  Var shortv = tape.constant(Mat::Zero(3, 8));
  EXPECT_THROW(attend(ok, ok, shortv, mask, ids, cfg), ShapeError);
}

}  // namespace
}  // namespace mash
