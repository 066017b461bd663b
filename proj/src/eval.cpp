#include "vmerge/eval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

#include "vmerge/error.hpp"

namespace vmerge {

double average_precision(const RankedResult& ranked,
                         const std::set<ImageId>& relevant,
                         std::optional<ImageId> exclude) {
  std::size_t total = relevant.size();
  if (exclude && relevant.contains(*exclude)) --total;
  if (total == 0) throw Error("average precision needs a non-empty relevant set");
  double sum = 0.0;
  std::size_t hits = 0, rank = 0;
  for (const auto& entry : ranked) {
    if (exclude && entry.image_id == *exclude) continue;
    ++rank;
    if (relevant.contains(entry.image_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(total);
}

int ns_score(const RankedResult& ranked, const std::set<ImageId>& relevant) {
  if (relevant.size() != 4) {
    throw Error("N-S score needs exactly four relevant images, got " +
                std::to_string(relevant.size()));
  }
  int hits = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, ranked.size()); ++i) {
    if (relevant.contains(ranked[i].image_id)) ++hits;
  }
  return hits;
}

namespace {

const RankedResult& lookup(const ResultSet& results, ImageId query) {
  auto it = results.find(query);
  if (it == results.end()) {
    throw Error("results have no entry for ground-truth query " + std::to_string(query));
  }
  return it->second;
}

}  // namespace

double mean_average_precision(const ResultSet& results, const GroundTruth& gt,
                              bool exclude_self) {
  if (gt.empty()) throw Error("empty ground truth");
  double sum = 0.0;
  for (const auto& [query, relevant] : gt) {
    sum += average_precision(lookup(results, query), relevant,
                             exclude_self ? std::optional<ImageId>(query)
                                          : std::nullopt);
  }
  return sum / static_cast<double>(gt.size());
}

double mean_ns_score(const ResultSet& results, const GroundTruth& gt) {
  if (gt.empty()) throw Error("empty ground truth");
  double sum = 0.0;
  for (const auto& [query, relevant] : gt) {
    sum += ns_score(lookup(results, query), relevant);
  }
  return sum / static_cast<double>(gt.size());
}

std::string metrics_csv_header(std::string_view metric_name) {
  return "method,K,vocab_size," + std::string(metric_name) + ",query_time_ms_mean\n";
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream out;
  out.precision(6);
  out << row.method << ',' << row.vocabulary_count << ',' << row.vocabulary_size
      << ',' << std::fixed << row.value << ',' << row.query_time_ms_mean << '\n';
  return out.str();
}

std::vector<Term2Sample> collect_term2_samples(
    std::span<const PreparedQuery> queries, const GroundTruth& gt,
    const IndexBundle& index, std::uint32_t he_threshold) {
  if (index.vocabulary_count() != 2) {
    throw Error("term-2 calibration needs exactly two vocabularies");
  }
  if (!index.has_signatures()) {
    throw Error("term-2 calibration needs an index with Hamming signatures");
  }
  std::vector<Term2Sample> samples;
  for (const auto& query : queries) {
    auto gt_it = gt.find(query.query_id);
    if (gt_it == gt.end()) continue;
    const auto& relevant = gt_it->second;
    for (const auto& qf : query.features) {
      const PostingList* lists[2];
      std::span<const FeatureRef> views[2];
      for (int k = 0; k < 2; ++k) {
        lists[k] = &index.inverted_files[k].postings.at(qf.words[k]);
        views[k] = lists[k]->features;
      }
      std::size_t inter = 0, uni = 0, true_inter = 0, true_union = 0;
      sweep_union<false>(std::span<const std::span<const FeatureRef>>(views, 2),
                  [&](FeatureRef ref, ListMask mask, const std::uint32_t* pos) {
                    ++uni;
                    const bool both = mask == 3u;
                    if (both) ++inter;
                    if (!relevant.contains(ref.image_id)) return;
                    bool close = false;
                    for (int k = 0; k < 2 && !close; ++k) {
                      if (mask >> k & 1u) {
                        close = static_cast<std::uint32_t>(std::popcount(
                                    lists[k]->signatures[pos[k]] ^
                                    qf.signatures[k])) < he_threshold;
                      }
                    }
                    if (!close) return;
                    ++true_union;
                    if (both) ++true_inter;
                  });
      if (true_union == 0) continue;
      samples.push_back({static_cast<double>(inter) / static_cast<double>(uni),
                         static_cast<double>(true_inter) /
                             static_cast<double>(true_union)});
    }
  }
  return samples;
}

Term2Fit fit_term2(std::span<const Term2Sample> samples, std::size_t bins) {
  if (samples.empty()) {
    throw Error("no true matches found for term-2 calibration; use a larger corpus");
  }
  if (bins == 0) throw Error("calibration needs at least one bin");
  Term2Fit fit;
  fit.samples = samples.size();
  fit.bins.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    fit.bins[b].low = static_cast<double>(b) / static_cast<double>(bins);
    fit.bins[b].high = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (const auto& s : samples) {
    auto b = static_cast<std::size_t>(s.ratio * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    auto& bin = fit.bins[b];
    ++bin.count;
    bin.mean_ratio += s.ratio;
    bin.mean_true_ratio += s.true_ratio;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (auto& bin : fit.bins) {
    if (bin.count == 0) continue;
    bin.mean_ratio /= static_cast<double>(bin.count);
    bin.mean_true_ratio /= static_cast<double>(bin.count);
    sx += bin.mean_ratio;
    sy += bin.mean_true_ratio;
    sxx += bin.mean_ratio * bin.mean_ratio;
    sxy += bin.mean_ratio * bin.mean_true_ratio;
    ++used;
  }
  const double n = static_cast<double>(used);
  const double denom = n * sxx - sx * sx;
  if (used < 2 || std::abs(denom) < 1e-15) {
    // A single occupied bin pins only a level.
    fit.slope = 0.0;
    fit.intercept = sy / n;
  } else {
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
  }
  double ss = 0.0;
  for (const auto& bin : fit.bins) {
    if (bin.count == 0) continue;
    const double r = bin.mean_true_ratio - (fit.slope * bin.mean_ratio + fit.intercept);
    ss += r * r;
  }
  fit.rms = std::sqrt(ss / n);
  return fit;
}

namespace {

double bin_rms(const Term2Fit& fit) {
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& bin : fit.bins) {
    if (bin.count == 0) continue;
    const double r = bin.mean_true_ratio - (fit.slope * bin.mean_ratio + fit.intercept);
    ss += r * r;
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
}

// Least-squares slope of the bin means about the fixed point (x0, y0).
double slope_through(const Term2Fit& fit, double x0, double y0) {
  double sxy = 0.0, sxx = 0.0;
  for (const auto& bin : fit.bins) {
    if (bin.count == 0) continue;
    const double dx = bin.mean_ratio - x0;
    sxy += dx * (bin.mean_true_ratio - y0);
    sxx += dx * dx;
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace

Term2Fit feasible_term2(const Term2Fit& fit) {
  Term2Fit out = fit;
  double a = fit.slope;
  double b = fit.intercept;
  if (a >= 0.0 && b >= kTerm2Floor && a + b <= 1.0) return out;
  out.constrained = true;
  if (a + b > 1.0) {
    a = slope_through(fit, 1.0, 1.0);
    b = 1.0 - a;
  }
  if (b < kTerm2Floor) {
    b = kTerm2Floor;
    a = slope_through(fit, 0.0, b);
  }
  a = std::clamp(a, 0.0, 1.0 - b);
  if (a == 0.0 && fit.slope < 0.0) {
    // Flat line: the best level inside (0, 1].
    double sy = 0.0;
    std::size_t n = 0;
    for (const auto& bin : fit.bins) {
      if (bin.count == 0) continue;
      sy += bin.mean_true_ratio;
      ++n;
    }
    b = std::clamp(sy / static_cast<double>(n), kTerm2Floor, 1.0);
  }
  out.slope = a;
  out.intercept = b;
  out.rms = bin_rms(out);
  return out;
}

Term2Fit calibrate_term2(const Corpus& queries, const GroundTruth& gt,
                         const IndexBundle& index, std::uint32_t he_threshold) {
  if (!index.has_signatures()) {
    throw Error("term-2 calibration needs an index with Hamming signatures");
  }
  std::vector<PreparedQuery> prepared;
  for (const auto& image : queries.images) {
    prepared.push_back({image.image_id, prepare_query(image, queries.dim, index)});
  }
  const auto samples = collect_term2_samples(prepared, gt, index, he_threshold);
  return fit_term2(samples);
}

std::vector<RatioHistogram> ratio_histogram(const IndexBundle& index,
                                            std::span<const std::uint32_t> sizes,
                                            const Corpus& queries,
                                            std::size_t bins) {
  const std::uint32_t K = index.vocabulary_count();
  if (K < 2) throw Error("ratio histogram needs at least two vocabularies");
  if (bins == 0) throw Error("histogram needs at least one bin");
  std::vector<std::vector<QueryFeature>> prepared;
  for (const auto& image : queries.images) {
    prepared.push_back(prepare_query(image, queries.dim, index));
  }
  const ListMask full = (ListMask{1} << K) - 1;
  std::vector<RatioHistogram> out;
  for (std::uint32_t size : sizes) {
    if (size == 0 || size > index.image_count) {
      throw Error("database size " + std::to_string(size) +
                  " outside [1, " + std::to_string(index.image_count) + "]");
    }
    RatioHistogram hist;
    hist.database_size = size;
    hist.counts.assign(bins, 0);
    double sum = 0.0;
    std::array<std::span<const FeatureRef>, kMaxVocabularies> views;
    for (const auto& features : prepared) {
      for (const auto& qf : features) {
        for (std::uint32_t k = 0; k < K; ++k) {
          const auto& list = index.inverted_files[k].postings.at(qf.words[k]).features;
          // Lists are sorted by image id, so a prefix database is a prefix list.
          auto end = std::lower_bound(
              list.begin(), list.end(), FeatureRef{size, 0});
          views[k] = std::span<const FeatureRef>(list.data(),
                                                 static_cast<std::size_t>(end - list.begin()));
        }
        std::size_t inter = 0, uni = 0;
        sweep_union<false>(std::span<const std::span<const FeatureRef>>(views.data(), K),
                    [&](FeatureRef, ListMask mask, const std::uint32_t*) {
                      ++uni;
                      if (mask == full) ++inter;
                    });
        if (inter == 0) continue;
        const double r = static_cast<double>(inter) / static_cast<double>(uni);
        auto b = std::min(bins - 1, static_cast<std::size_t>(r * static_cast<double>(bins)));
        ++hist.counts[b];
        ++hist.samples;
        sum += r;
      }
    }
    hist.mean = hist.samples == 0 ? 0.0 : sum / static_cast<double>(hist.samples);
    out.push_back(std::move(hist));
  }
  return out;
}

std::string histogram_csv(std::span<const RatioHistogram> histograms) {
  std::ostringstream out;
  out << "database_size,bin_low,bin_high,count\n";
  for (const auto& h : histograms) {
    const double width = 1.0 / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << h.database_size << ',' << static_cast<double>(b) * width << ','
          << static_cast<double>(b + 1) * width << ',' << h.counts[b] << '\n';
    }
  }
  return out.str();
}

}  // namespace vmerge
