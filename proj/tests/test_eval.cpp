#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "vmerge/error.hpp"
#include "vmerge/eval.hpp"

using namespace vmerge;

namespace {

RankedResult ranking(std::initializer_list<ImageId> ids) {
  RankedResult r;
  double s = static_cast<double>(ids.size());
  for (auto id : ids) r.push_back({id, s--});
  return r;
}

// Two inverted files over 100 images with zero signatures. Query feature j
// uses word j in both vocabularies; its lists share round(r_j * 100) of 100
// union entries, r_j uniform over [0, 1]. Relevant images are the even ids.
struct CalibrationCase {
  IndexBundle index;
  std::vector<PreparedQuery> queries;
};

CalibrationCase calibration_case(std::size_t features, bool relevant_only_in_intersection,
                                 std::uint64_t seed) {
  constexpr std::uint32_t kUnion = 100;
  CalibrationCase c;
  auto& idx = c.index;
  idx.image_count = 2 * kUnion;
  idx.image_norms.assign(idx.image_count, 1.0f);
  idx.inverted_files.resize(2);
  idx.hamming.resize(2);
  for (std::uint32_t k = 0; k < 2; ++k) {
    idx.inverted_files[k].vocabulary_id = k;
    idx.inverted_files[k].postings.resize(features);
    idx.inverted_files[k].idf.assign(features, 1.0);
  }
  std::mt19937_64 rng(seed);
  PreparedQuery q;
  q.query_id = 0;
  for (std::size_t j = 0; j < features; ++j) {
    const double r = static_cast<double>(j) / static_cast<double>(features - 1);
    const auto inter = static_cast<std::uint32_t>(std::lround(r * kUnion));
    // Relevant images are the even ids below 2 * kUnion.
    std::vector<ImageId> relevant(kUnion / 2), other(kUnion / 2);
    for (std::uint32_t i = 0; i < kUnion / 2; ++i) {
      relevant[i] = 2 * i;
      other[i] = 2 * i + 1;
    }
    std::vector<ImageId> images;
    std::vector<ListMask> masks;
    if (relevant_only_in_intersection) {
      // Relevant images fill the intersection; odd ids take the remainder.
      for (std::uint32_t i = 0; i < kUnion; ++i) {
        images.push_back(i < inter ? 2 * i : 2 * (i - inter) + 1);
        masks.push_back(i < inter ? 3u : (i % 2 ? 1u : 2u));
      }
    } else {
      images = relevant;
      images.insert(images.end(), other.begin(), other.end());
      std::vector<std::uint32_t> order(kUnion);
      std::iota(order.begin(), order.end(), 0u);
      std::shuffle(order.begin(), order.end(), rng);
      masks.assign(kUnion, 0);
      for (std::uint32_t i = 0; i < kUnion; ++i) {
        masks[order[i]] = i < inter ? 3u : (i % 2 ? 1u : 2u);
      }
    }
    std::vector<std::pair<ImageId, ListMask>> entries;
    for (std::size_t i = 0; i < images.size(); ++i) entries.emplace_back(images[i], masks[i]);
    std::sort(entries.begin(), entries.end());
    for (auto [id, m] : entries) {
      for (std::uint32_t k = 0; k < 2; ++k) {
        if (!(m >> k & 1u)) continue;
        auto& list = idx.inverted_files[k].postings[j];
        list.features.push_back({id, static_cast<FeatureId>(j)});
        list.signatures.push_back(0);
      }
    }
    QueryFeature qf;
    qf.words[0] = qf.words[1] = static_cast<WordId>(j);
    q.features.push_back(qf);
  }
  c.queries.push_back(q);
  return c;
}

GroundTruth even_images() {
  GroundTruth gt;
  for (ImageId i = 0; i < 200; i += 2) gt[0].insert(i);
  return gt;
}

std::vector<Term2Sample> line_samples(double a, double b) {
  std::vector<Term2Sample> s;
  for (int i = 0; i <= 200; ++i) {
    const double x = i / 200.0;
    s.push_back({x, a * x + b});
  }
  return s;
}

}  // namespace

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(average_precision(ranking({1, 2, 3, 4}), {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(ranking({9, 1, 8}), {1}), 0.5);
  EXPECT_NEAR(average_precision(ranking({1, 7, 2, 8, 3}), {1, 2, 3}),
              (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0, 1e-15);
  EXPECT_NEAR(average_precision(ranking({1, 7, 2, 8, 3}), {1, 2, 3}), 0.7556, 1e-4);
  // Missing relevant images count as zero.
  EXPECT_DOUBLE_EQ(average_precision(ranking({1}), {1, 5}), 0.5);
  EXPECT_DOUBLE_EQ(average_precision(ranking({4, 1}), {1, 4}, ImageId{4}), 1.0);
  EXPECT_THROW(average_precision(ranking({1}), {}), Error);
}

TEST(AveragePrecision, ScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  RankedResult r;
  for (ImageId i = 0; i < 50; ++i) r.push_back({i, u(rng)});
  sort_ranked(r);
  const std::set<ImageId> rel = {3, 17, 22, 40};
  const double ap = average_precision(r, rel);
  for (double scale : {1e-6, 0.5, 3.0, 1e9}) {
    RankedResult s = r;
    for (auto& e : s) e.score *= scale;
    sort_ranked(s);
    EXPECT_EQ(average_precision(s, rel), ap);
  }
}

TEST(AveragePrecision, RandomRankingExpectation) {
  constexpr std::size_t N = 200, R = 10;
  std::mt19937_64 rng(4);
  std::vector<ImageId> ids(N);
  std::iota(ids.begin(), ids.end(), 0u);
  std::set<ImageId> rel;
  for (ImageId i = 0; i < R; ++i) rel.insert(i * 7);
  double sum = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    std::shuffle(ids.begin(), ids.end(), rng);
    RankedResult r;
    for (std::size_t i = 0; i < N; ++i) r.push_back({ids[i], static_cast<double>(N - i)});
    sum += average_precision(r, rel);
  }
  double harmonic = 0.0;
  for (std::size_t i = 1; i <= N; ++i) harmonic += 1.0 / static_cast<double>(i);
  const double expected =
      (harmonic + (R - 1.0) / (N - 1.0) * (static_cast<double>(N) - harmonic)) / N;
  EXPECT_NEAR(sum / trials, expected, 0.05 * expected);
}

TEST(NsScore, Examples) {
  const std::set<ImageId> rel = {0, 1, 2, 3};
  EXPECT_EQ(ns_score(ranking({0, 1, 2, 3, 9}), rel), 4);
  EXPECT_EQ(ns_score(ranking({9, 1, 8, 3, 0}), rel), 2);
  EXPECT_EQ(ns_score(ranking({5, 6, 7, 8, 0}), rel), 0);
  EXPECT_EQ(ns_score(ranking({2}), rel), 1);
  EXPECT_THROW(ns_score(ranking({0}), {0, 1, 2}), Error);
}

TEST(MeanMetrics, MissingQueryIsReported) {
  ResultSet rs;
  rs[0] = ranking({0, 1});
  GroundTruth gt;
  gt[0] = {1};
  gt[7] = {2};
  try {
    mean_average_precision(rs, gt, false);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
  }
  rs[7] = ranking({2});
  EXPECT_DOUBLE_EQ(mean_average_precision(rs, gt, false), 0.75);
  GroundTruth self;
  self[0] = {0, 1};
  EXPECT_DOUBLE_EQ(mean_average_precision(rs, self, true), 1.0);
}

TEST(MetricsCsv, HeaderAndRow) {
  EXPECT_EQ(metrics_csv_header("mAP"), "method,K,vocab_size,mAP,query_time_ms_mean\n");
  MetricsRow row{"bayes+he", 2, 256, 0.5, 1.25};
  EXPECT_EQ(metrics_csv_row(row), "bayes+he,2,256,0.500000,1.250000\n");
}

TEST(Synthetic, DeterministicInSeed) {
  const auto spec = fixtures::small_spec(30, 21);
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.database, b.database);
  EXPECT_EQ(a.queries, b.queries);
  EXPECT_EQ(a.training, b.training);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  auto other = spec;
  other.seed = 22;
  EXPECT_NE(generate_synthetic(other).database, a.database);
  for (const auto& [q, rel] : a.ground_truth) EXPECT_EQ(rel.size(), spec.duplicates_per_query);
}

TEST(Synthetic, ExactCopiesGivePerfectMap) {
  auto spec = fixtures::small_spec(60, 23);
  spec.noise = 0.0;
  spec.duplicates_per_query = 1;
  const auto p = fixtures::make_pipeline(spec, 2, 32);
  ScoringMethod m;
  m.method = Method::B1;
  const auto rs = run_queries(p.data.queries, p.index, m, {}, 1);
  EXPECT_DOUBLE_EQ(mean_average_precision(rs, p.data.ground_truth, false), 1.0);
}

TEST(Synthetic, TwoVocabulariesBeatOne) {
  SyntheticSpec spec;
  spec.n_images = 400;
  spec.n_queries = 40;
  const auto p = fixtures::make_pipeline(spec, 2, 128);
  ScoringMethod b0, b1;
  b0.method = Method::B0;
  b1.method = Method::B1;
  const double m0 = mean_average_precision(run_queries(p.data.queries, p.index, b0, {}, 1),
                                           p.data.ground_truth, false);
  const double m1 = mean_average_precision(run_queries(p.data.queries, p.index, b1, {}, 1),
                                           p.data.ground_truth, false);
  EXPECT_GE(m1, m0);
}

TEST(Calibration, UniformTrueMatchesGiveIdentityLine) {
  const auto c = calibration_case(400, false, 5);
  const auto samples = collect_term2_samples(c.queries, even_images(), c.index, 20);
  ASSERT_EQ(samples.size(), 400u);
  const auto fit = fit_term2(samples);
  EXPECT_GE(fit.slope, 0.9);
  EXPECT_LE(fit.slope, 1.1);
  EXPECT_GE(fit.intercept, -0.05);
  EXPECT_LE(fit.intercept, 0.1);
}

TEST(Calibration, TrueMatchesOnlyInIntersection) {
  const auto c = calibration_case(400, true, 6);
  const auto samples = collect_term2_samples(c.queries, even_images(), c.index, 20);
  ASSERT_FALSE(samples.empty());
  for (const auto& s : samples) EXPECT_EQ(s.true_ratio, 1.0);
  const auto fit = fit_term2(samples);
  EXPECT_GE(fit.intercept, 0.9);
  EXPECT_LE(fit.intercept, 1.0 + 1e-12);
  EXPECT_NEAR(fit.slope, 0.0, 1e-9);
}

TEST(Calibration, SignatureGateAndErrors) {
  auto c = calibration_case(50, false, 7);
  // Threshold 0 accepts nothing, so nothing is sampled.
  EXPECT_TRUE(collect_term2_samples(c.queries, even_images(), c.index, 0).empty());
  EXPECT_THROW(fit_term2(std::vector<Term2Sample>{}), Error);
  c.index.hamming.clear();
  EXPECT_THROW(collect_term2_samples(c.queries, even_images(), c.index, 20), Error);
}

TEST(Calibration, FitRecoversLine) {
  const auto fit = fit_term2(line_samples(0.6, 0.3));
  EXPECT_NEAR(fit.slope, 0.6, 1e-9);
  EXPECT_NEAR(fit.intercept, 0.3, 1e-9);
  EXPECT_NEAR(fit.rms, 0.0, 1e-9);
  EXPECT_EQ(fit.bins.size(), kCalibrationBins);
  EXPECT_EQ(fit.samples, 201u);
}

TEST(FeasibleTerm2, LeavesFeasibleLinesAlone) {
  const auto fit = fit_term2(line_samples(0.6, 0.3));
  const auto f = feasible_term2(fit);
  EXPECT_FALSE(f.constrained);
  EXPECT_EQ(f.slope, fit.slope);
  EXPECT_EQ(f.intercept, fit.intercept);
}

TEST(FeasibleTerm2, ProjectsOntoValidLines) {
  for (auto [a, b] : {std::pair{0.8, 0.4}, std::pair{0.9, -0.1}, std::pair{-0.2, 0.5},
                      std::pair{1.5, 0.2}}) {
    const auto f = feasible_term2(fit_term2(line_samples(a, b)));
    EXPECT_TRUE(f.constrained) << a << ' ' << b;
    MergeConfig cfg;
    cfg.term2_slope = f.slope;
    cfg.term2_intercept = f.intercept;
    EXPECT_NO_THROW(cfg.validate()) << a << ' ' << b;
    EXPECT_GT(f.rms, 0.0);
  }
  // A line through (1, 1) already fits best after the refit.
  const auto f = feasible_term2(fit_term2(line_samples(0.8, 0.4)));
  EXPECT_NEAR(f.slope + f.intercept, 1.0, 1e-12);
  EXPECT_GT(f.slope, 0.5);
}

TEST(RatioHistogram, IdenticalVocabulariesAreFullyCorrelated) {
  const auto data = generate_synthetic(fixtures::small_spec(50, 31));
  const auto v = train_vocabulary(data.training, 24, 1, 10);
  const auto index = build_index(data.database, {v, v});
  const std::vector<std::uint32_t> sizes = {25, 50};
  const auto h = ratio_histogram(index, sizes, data.queries);
  ASSERT_EQ(h.size(), 2u);
  for (const auto& one : h) {
    EXPECT_GT(one.samples, 0u);
    EXPECT_DOUBLE_EQ(one.mean, 1.0);
    EXPECT_EQ(one.counts.back(), one.samples);
  }
}

TEST(RatioHistogram, DifferentVocabulariesAndCsv) {
  const auto data = generate_synthetic(fixtures::small_spec(50, 32));
  const auto index = build_index(data.database, {train_vocabulary(data.training, 24, 1, 10),
                                                 train_vocabulary(data.training, 24, 2, 10)});
  const std::vector<std::uint32_t> sizes = {50};
  const auto h = ratio_histogram(index, sizes, data.queries);
  EXPECT_LT(h[0].mean, 1.0);
  EXPECT_GT(h[0].mean, 0.0);
  std::size_t total = 0;
  for (auto n : h[0].counts) total += n;
  EXPECT_EQ(total, h[0].samples);
  const auto csv = histogram_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "database_size,bin_low,bin_high,count");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  const std::vector<std::uint32_t> bad = {51};
  EXPECT_THROW(ratio_histogram(index, bad, data.queries), Error);
}
