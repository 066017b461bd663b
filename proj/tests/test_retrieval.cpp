#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "reference_engine.hpp"
#include "vmerge/error.hpp"
#include "vmerge/retrieval.hpp"

using namespace vmerge;

namespace {

std::map<ImageId, double> by_id(const RankedResult& r) {
  std::map<ImageId, double> m;
  for (const auto& e : r) m[e.image_id] = e.score;
  return m;
}

ScoringMethod make(Method m, bool he = false, bool burst = false, std::uint32_t b0 = 0) {
  ScoringMethod s;
  s.method = m;
  s.use_hamming = he;
  s.use_burstiness = burst;
  s.b0_vocabulary = b0;
  return s;
}

const fixtures::Pipeline& shared_pipeline() {
  static const auto p = [] {
    auto spec = fixtures::small_spec(50, 11);
    return fixtures::make_pipeline(spec, 2, 32, 1, true);
  }();
  return p;
}

}  // namespace

TEST(MatchFunctions, Deltas) {
  EXPECT_EQ(match_b0(7, 7), 1);
  EXPECT_EQ(match_b0(7, 8), 0);
  for (WordId a = 0; a < 4; ++a) {
    for (WordId b = 0; b < 4; ++b) EXPECT_EQ(match_b0(a, b), a == b ? 1 : 0);
  }
  const std::vector<WordId> x = {3, 5, 9}, same = {3, 5, 9}, none = {0, 1, 2};
  EXPECT_EQ(match_b1(x, same), 3);
  EXPECT_EQ(match_b1(x, none), 0);
  EXPECT_EQ(match_b1(std::vector<WordId>{4, 1}, std::vector<WordId>{4, 2}), 1);
  EXPECT_EQ(match_b2(std::vector<WordId>{4, 1}, std::vector<WordId>{4, 1}), 1);
  EXPECT_EQ(match_b2(std::vector<WordId>{4, 1}, std::vector<WordId>{4, 2}), 0);
  EXPECT_THROW(match_b1(x, std::vector<WordId>{1}), Error);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<WordId> w(0, 2);
  for (int t = 0; t < 500; ++t) {
    std::vector<WordId> a(3), b(3);
    int product = 1;
    for (int k = 0; k < 3; ++k) {
      a[k] = w(rng);
      b[k] = w(rng);
      product *= match_b0(a[k], b[k]);
    }
    EXPECT_EQ(match_b2(a, b), product);
  }
}

TEST(ScoreQuery, ExactCopyRanksFirst) {
  auto spec = fixtures::small_spec(40, 12);
  spec.noise = 0.0;
  spec.duplicates_per_query = 1;
  const auto p = fixtures::make_pipeline(spec, 2, 32);
  const auto& q = p.data.queries.images[0];
  const ImageId copy = *p.data.ground_truth.at(q.image_id).begin();
  for (auto m : {Method::B0, Method::B1, Method::B2, Method::Bayes, Method::RankAggregation}) {
    const auto r = score_query(q, spec.dim, p.index, make(m), MergeConfig{});
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].image_id, copy) << method_name(m);
    if (r.size() > 1) EXPECT_GT(r[0].score, r[1].score) << method_name(m);
  }
}

TEST(ScoreQuery, SingleImageDatabase) {
  auto spec = fixtures::small_spec(1, 13);
  spec.n_queries = 1;
  spec.duplicates_per_query = 1;
  spec.noise = 0.0;
  const auto p = fixtures::make_pipeline(spec, 2, 16);
  for (auto m : {Method::B0, Method::B1, Method::B2, Method::Bayes}) {
    const auto r = score_query(p.data.queries.images[0], spec.dim, p.index, make(m), MergeConfig{});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].image_id, 0u);
  }
}

TEST(ScoreQuery, MatchesTwoPassOracle) {
  const auto& p = shared_pipeline();
  const std::uint32_t dim = p.data.database.dim;
  std::vector<ScoringMethod> methods;
  for (auto m : {Method::B0, Method::B1, Method::B2, Method::Bayes, Method::RankAggregation}) {
    methods.push_back(make(m));
    methods.push_back(make(m, true));
  }
  methods.push_back(make(Method::B0, false, false, 1));
  methods.push_back(make(Method::B1, false, true));
  methods.push_back(make(Method::Bayes, false, true));
  methods.push_back(make(Method::Bayes, true, true));
  for (const auto& q : p.data.queries.images) {
    const auto features = prepare_query(q, dim, p.index);
    for (const auto& m : methods) {
      const auto got = score_prepared(features, p.index, m, MergeConfig{});
      const auto want = fixtures::reference_score(features, p.index, m, MergeConfig{});
      const auto diff = fixtures::compare_rankings(got, want, 1e-9);
      EXPECT_TRUE(diff.ok(1e-9))
          << method_name(m.method) << " he=" << m.use_hamming << " burst=" << m.use_burstiness
          << " query " << q.image_id << " ids=" << diff.same_ids
          << " max diff=" << diff.max_score_diff << " order=" << diff.order_violations;
    }
  }
}

TEST(ScoreQuery, ThreeVocabulariesMatchOracle) {
  const auto p = fixtures::make_pipeline(fixtures::small_spec(40, 14), 3, 24, 5, true);
  for (const auto& q : p.data.queries.images) {
    const auto features = prepare_query(q, p.data.database.dim, p.index);
    for (auto m : {Method::B1, Method::B2, Method::Bayes}) {
      for (bool he : {false, true}) {
        const auto got = score_prepared(features, p.index, make(m, he), MergeConfig{});
        const auto want = fixtures::reference_score(features, p.index, make(m, he), MergeConfig{});
        EXPECT_TRUE(fixtures::compare_rankings(got, want, 1e-9).ok(1e-9)) << method_name(m);
      }
    }
  }
}

TEST(ScoreQuery, ForcedUnitWeightReducesToB1) {
  const auto& p = shared_pipeline();
  MergeConfig forced;
  forced.force_unit_weight = true;
  for (const auto& q : p.data.queries.images) {
    const auto features = prepare_query(q, p.data.database.dim, p.index);
    for (bool he : {false, true}) {
      for (bool burst : {false, true}) {
        const auto b1 = score_prepared(features, p.index, make(Method::B1, he, burst), MergeConfig{});
        const auto bayes =
            score_prepared(features, p.index, make(Method::Bayes, he, burst), forced);
        EXPECT_EQ(b1, bayes);
      }
    }
  }
}

TEST(ScoreQuery, DominanceAndBounds) {
  const auto& p = shared_pipeline();
  for (const auto& q : p.data.queries.images) {
    const auto features = prepare_query(q, p.data.database.dim, p.index);
    const auto b1 = by_id(score_prepared(features, p.index, make(Method::B1), {}));
    const auto b2 = by_id(score_prepared(features, p.index, make(Method::B2), {}));
    const auto bayes = by_id(score_prepared(features, p.index, make(Method::Bayes), {}));
    for (std::uint32_t k = 0; k < 2; ++k) {
      const auto b0 = by_id(score_prepared(features, p.index, make(Method::B0, false, false, k), {}));
      for (auto [id, s] : b0) {
        ASSERT_TRUE(b1.count(id));
        EXPECT_GE(b1.at(id), s * (1 - 1e-12));
        EXPECT_GE(s, 0.0);
      }
    }
    for (auto [id, s] : b2) {
      if (s == 0.0) continue;
      ASSERT_TRUE(b1.count(id));
      EXPECT_GE(b1.at(id), 2.0 * s * (1 - 1e-12));
    }
    for (auto [id, s] : bayes) {
      ASSERT_TRUE(b1.count(id));
      EXPECT_LE(s, b1.at(id) * (1 + 1e-12));
      // Images with no intersection-set match score the same.
      if (!b2.count(id)) EXPECT_NEAR(s, b1.at(id), 1e-12 * std::max(1.0, s));
    }
  }
}

TEST(ScoreQuery, VocabularyOrderDoesNotMatter) {
  const auto spec = fixtures::small_spec(40, 15);
  const auto data = generate_synthetic(spec);
  std::vector<Vocabulary> vs;
  for (std::uint64_t s : {1u, 2u, 3u}) vs.push_back(train_vocabulary(data.training, 24, s, 15));
  const auto a = build_index(data.database, vs);
  const auto b = build_index(data.database, {vs[2], vs[0], vs[1]});
  for (const auto& q : data.queries.images) {
    for (auto m : {Method::B1, Method::B2, Method::Bayes, Method::RankAggregation}) {
      const auto ra = score_query(q, spec.dim, a, make(m), {});
      const auto rb = score_query(q, spec.dim, b, make(m), {});
      // Float norms are means over vocabularies, so allow rounding.
      EXPECT_TRUE(fixtures::compare_rankings(rb, ra, 1e-6).ok(1e-6)) << method_name(m);
    }
  }
}

TEST(ScoreQuery, Errors) {
  const auto p = fixtures::make_pipeline(fixtures::small_spec(20, 16), 2, 16);
  const auto& q = p.data.queries.images[0];
  EXPECT_THROW(score_query(q, 16, p.index, make(Method::B1, true), {}), Error);
  EXPECT_THROW(score_query(q, 16, p.index, make(Method::B0, false, false, 2), {}), Error);
  EXPECT_THROW(score_query(q, 16, p.index, make(Method::B0, false, true), {}), Error);
  EXPECT_THROW(score_query(q, 16, p.index, make(Method::B2, false, true), {}), Error);
  EXPECT_THROW(score_query(q, 8, p.index, make(Method::B1), {}), Error);
  MergeConfig bad;
  bad.term2_slope = 0.9;
  bad.term2_intercept = 0.9;
  EXPECT_THROW(score_query(q, 16, p.index, make(Method::Bayes), bad), Error);
  EXPECT_EQ(parse_method("bayes"), Method::Bayes);
  EXPECT_THROW(parse_method("b3"), Error);
}

TEST(RunQueries, ThreadCountDoesNotChangeOutput) {
  const auto& p = shared_pipeline();
  for (auto m : {Method::B1, Method::Bayes, Method::RankAggregation}) {
    const auto one = run_queries(p.data.queries, p.index, make(m), {}, 1);
    const auto four = run_queries(p.data.queries, p.index, make(m), {}, 4);
    EXPECT_EQ(format_results(one, 0), format_results(four, 0));
  }
}

TEST(RankAggregate, SingleInputKeepsOrder) {
  RankedResult r = {{4, 9.0}, {1, 5.0}, {7, 2.0}};
  const std::vector<RankedResult> in = {r};
  const auto out = rank_aggregate(in, 10);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].image_id, 4u);
  EXPECT_EQ(out[1].image_id, 1u);
  EXPECT_EQ(out[2].image_id, 7u);
  EXPECT_EQ(out[0].score, 10.0);
  EXPECT_THROW(rank_aggregate(std::vector<RankedResult>{}, 10), Error);
}

TEST(RankAggregate, MedianExample) {
  // A (id 0) at ranks 1, 3, 5; B (id 1) at ranks 2, 2, 9. Fillers take the
  // remaining positions.
  auto ranking = [](std::vector<ImageId> order) {
    RankedResult r;
    for (std::size_t i = 0; i < order.size(); ++i) {
      r.push_back({order[i], static_cast<double>(order.size() - i)});
    }
    return r;
  };
  const std::vector<RankedResult> in = {
      ranking({0, 1, 2, 3, 4, 5, 6, 7, 8}),
      ranking({2, 1, 0, 3, 4, 5, 6, 7, 8}),
      ranking({2, 3, 4, 5, 0, 6, 7, 8, 1}),
  };
  const auto out = rank_aggregate(in, 9);
  std::size_t pos_a = 0, pos_b = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].image_id == 0) pos_a = i;
    if (out[i].image_id == 1) pos_b = i;
  }
  EXPECT_LT(pos_b, pos_a);
}

TEST(RankAggregate, MatchesDirectMedians) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RankedResult> in;
    std::vector<std::map<ImageId, double>> rank_of(3);
    for (int k = 0; k < 3; ++k) {
      std::vector<ImageId> order(20);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      // Drop a few images so missing ranks are exercised.
      order.resize(20 - static_cast<std::size_t>(trial % 4));
      RankedResult r;
      for (std::size_t i = 0; i < order.size(); ++i) {
        r.push_back({order[i], 100.0 - static_cast<double>(i)});
        rank_of[k][order[i]] = static_cast<double>(i + 1);
      }
      in.push_back(r);
    }
    struct Row {
      double median, mean;
      ImageId id;
    };
    std::vector<Row> want;
    for (ImageId id = 0; id < 20; ++id) {
      std::vector<double> r;
      for (int k = 0; k < 3; ++k) r.push_back(rank_of[k].count(id) ? rank_of[k][id] : 21.0);
      if (r[0] == 21.0 && r[1] == 21.0 && r[2] == 21.0) continue;
      std::sort(r.begin(), r.end());
      want.push_back({r[1], (r[0] + r[1] + r[2]) / 3.0, id});
    }
    std::sort(want.begin(), want.end(), [](const Row& a, const Row& b) {
      return std::tie(a.median, a.mean, a.id) < std::tie(b.median, b.mean, b.id);
    });
    const auto out = rank_aggregate(in, 20);
    ASSERT_EQ(out.size(), want.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out[i].image_id, want[i].id);
      EXPECT_EQ(out[i].score, 20.0 - static_cast<double>(i));
    }
  }
}

TEST(ResultsFile, RoundTripAndTopK) {
  ResultSet rs;
  rs[3] = {{5, 0.75}, {2, 0.1}, {9, 1e-17}};
  rs[0] = {{1, 2.0}};
  const auto text = format_results(rs, 0);
  EXPECT_EQ(text, "0: 1 2\n3: 5 0.75 2 0.1 9 1e-17\n");
  EXPECT_EQ(parse_results(text), rs);
  EXPECT_EQ(format_results(rs, 2), "0: 1 2\n3: 5 0.75 2 0.1\n");
  EXPECT_THROW(parse_results("3: 5\n"), Error);
  EXPECT_THROW(parse_results("x: 5 1\n"), Error);
}
