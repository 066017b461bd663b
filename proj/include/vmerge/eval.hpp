#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vmerge/core.hpp"
#include "vmerge/index.hpp"
#include "vmerge/io.hpp"
#include "vmerge/retrieval.hpp"

namespace vmerge {

// ---------------------------------------------------------------- metrics

/// Mean over relevant images of precision at their rank; relevant images
/// missing from the ranking contribute 0. `exclude` (the query itself when
/// it lives in the database) is dropped from both ranking and relevant set.
double average_precision(const RankedResult& ranked,
                         const std::set<ImageId>& relevant,
                         std::optional<ImageId> exclude = std::nullopt);

/// Relevant images among the top four. `relevant` must hold exactly four
/// images, the query included.
int ns_score(const RankedResult& ranked, const std::set<ImageId>& relevant);

/// Throws when a ground-truth query has no entry in `results`.
double mean_average_precision(const ResultSet& results, const GroundTruth& gt,
                              bool exclude_self);
double mean_ns_score(const ResultSet& results, const GroundTruth& gt);

struct MetricsRow {
  std::string method;
  std::uint32_t vocabulary_count = 0;
  std::uint32_t vocabulary_size = 0;
  double value = 0.0;
  double query_time_ms_mean = 0.0;
};

/// CSV header and row; `metric_name` is "mAP" or "NS".
std::string metrics_csv_header(std::string_view metric_name);
std::string metrics_csv_row(const MetricsRow& row);

// ------------------------------------------------------- term-2 calibration

/// One query feature's observation: cardinality ratio of its two lists and
/// the fraction of its true matches that fall in the intersection.
struct Term2Sample {
  double ratio = 0.0;
  double true_ratio = 0.0;
};

struct Term2Bin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
  double mean_ratio = 0.0;
  double mean_true_ratio = 0.0;
};

struct Term2Fit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Root-mean-square residual of the line over the non-empty bins.
  double rms = 0.0;
  std::size_t samples = 0;
  std::vector<Term2Bin> bins;
  /// Set by feasible_term2 when the line had to be refitted.
  bool constrained = false;
};

inline constexpr std::size_t kCalibrationBins = 20;

/// A query image already quantized (and signed) against an index.
struct PreparedQuery {
  ImageId query_id = 0;
  std::vector<QueryFeature> features;
};

/// True matches of x: features in ground-truth images of the query whose
/// signature is within he_threshold of x's in at least one of their lists.
std::vector<Term2Sample> collect_term2_samples(
    std::span<const PreparedQuery> queries, const GroundTruth& gt,
    const IndexBundle& index, std::uint32_t he_threshold);

/// Least-squares line through the bin means of `samples` (equal-width bins
/// over [0, 1]). Throws when there are no samples.
Term2Fit fit_term2(std::span<const Term2Sample> samples,
                   std::size_t bins = kCalibrationBins);

/// The fit projected onto lines MergeConfig accepts: a >= 0, b > 0,
/// a + b <= 1. Out-of-range fits are refitted through (1, 1), or through
/// (0, eps) when the intercept goes non-positive; rms is recomputed.
Term2Fit feasible_term2(const Term2Fit& fit);

/// Requires an index with signatures and K = 2.
Term2Fit calibrate_term2(const Corpus& queries, const GroundTruth& gt,
                         const IndexBundle& index, std::uint32_t he_threshold);

// -------------------------------------------------------- ratio histogram

struct RatioHistogram {
  std::uint32_t database_size = 0;
  std::vector<std::size_t> counts;  // equal-width bins over [0, 1]
  std::size_t samples = 0;
  double mean = 0.0;
};

/// For each database prefix size, the distribution of |cap A_k| / |cup A_k|
/// over all query features whose K lists intersect. `index` must be built
/// over the full database; a prefix keeps images with id < size.
std::vector<RatioHistogram> ratio_histogram(
    const IndexBundle& index, std::span<const std::uint32_t> sizes,
    const Corpus& queries, std::size_t bins = kCalibrationBins);

/// "database_size,bin_low,bin_high,count" rows.
std::string histogram_csv(std::span<const RatioHistogram> histograms);

}  // namespace vmerge
