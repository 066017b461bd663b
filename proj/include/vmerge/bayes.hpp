#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmerge/core.hpp"
#include "vmerge/error.hpp"

namespace vmerge {

/// Upper bound on K; membership of a feature in the K lists is a bitmask.
inline constexpr std::size_t kMaxVocabularies = 8;
using ListMask = std::uint32_t;

/// Line fitted by calibrate_term2 on the default synthetic benchmark
/// (config/merge.conf records the run that produced it).
inline constexpr double kDefaultTerm2Slope = 0.69897874678511784;
inline constexpr double kDefaultTerm2Intercept = 0.30102125321488216;
inline constexpr double kDefaultC = 30.0;
inline constexpr std::uint32_t kDefaultHeThreshold = 20;
/// Lower clamp on term 2.
inline constexpr double kTerm2Floor = 1e-9;

/// Tunables of the Bayes weight.
struct MergeConfig {
  double c = kDefaultC;
  double term2_slope = kDefaultTerm2Slope;
  double term2_intercept = kDefaultTerm2Intercept;
  /// Database size used by term 3; 0 means "take it from the index".
  std::uint32_t image_count = 0;
  /// Hamming acceptance: distance must be strictly below this.
  std::uint32_t he_threshold = kDefaultHeThreshold;
  /// Replace every Bayes weight by 1 (reduces Bayes scoring to B1).
  bool force_unit_weight = false;

  void validate() const;

  friend bool operator==(const MergeConfig&, const MergeConfig&) = default;
};

/// Flat "key = value" text; keys c, a, b, N, he_threshold. '#' starts a
/// comment. Unknown keys are rejected.
std::string format_merge_config(const MergeConfig& cfg);
MergeConfig parse_merge_config(std::string_view text,
                               MergeConfig base = MergeConfig{});
MergeConfig read_merge_config(const std::filesystem::path& path,
                              MergeConfig base = MergeConfig{});

/// p(in intersection | false match): false matches spread uniformly.
double term1(std::size_t inter_card, std::size_t union_card);
/// p(in intersection | true match): the calibrated line, clamped to
/// [kTerm2Floor, 1].
double term2(double ratio, const MergeConfig& cfg);
/// p(false) / p(true) = ln(N c).
double term3(std::uint64_t image_count, double c);
/// Posterior probability that an intersection member is a true match:
/// (1 + term1 / term2 * term3)^-1. Uses cfg.image_count as N.
double bayes_weight(std::size_t inter_card, std::size_t union_card,
                    const MergeConfig& cfg);

/// Intersection and union cardinality of every subset S of the K lists,
/// derived from exact-membership counts.
struct SubsetCardinalities {
  std::size_t list_count = 0;
  std::vector<std::size_t> intersection;  // |cap_{i in S} A_i|
  std::vector<std::size_t> union_size;    // |cup_{i in S} A_i|
};

/// exact_counts[M] = number of features present in exactly the lists of M.
SubsetCardinalities subset_cardinalities(
    std::span<const std::size_t> exact_counts, std::size_t list_count);

/// Partition of the union of K sorted posting lists by exact membership.
struct SetDecomposition {
  std::size_t list_count = 0;
  std::vector<std::size_t> exact_counts;           // indexed by mask
  std::vector<std::vector<FeatureRef>> members;    // indexed by mask
  SubsetCardinalities cardinalities;

  std::size_t union_card(ListMask subset) const {
    return cardinalities.union_size.at(subset);
  }
  std::size_t strict_intersection_card(ListMask subset) const {
    return cardinalities.intersection.at(subset);
  }
  /// Cardinality ratio driving the weight of members of `subset`.
  double ratio(ListMask subset) const;
  /// Features present in exactly one list.
  std::size_t difference_size() const;
  std::size_t total() const;
};

inline std::uint64_t feature_key(FeatureRef ref) {
  return (static_cast<std::uint64_t>(ref.image_id) << 32) | ref.feature_id;
}

namespace detail {

// Two-list merge with branch-free steps. Unchecked: lists must be strictly
// increasing.
template <class Visit>
void sweep_two(std::span<const FeatureRef> a, std::span<const FeatureRef> b,
               Visit& visit) {
  std::uint32_t i = 0, j = 0;
  const std::uint32_t na = static_cast<std::uint32_t>(a.size());
  const std::uint32_t nb = static_cast<std::uint32_t>(b.size());
  while (i < na && j < nb) {
    const std::uint64_t ka = feature_key(a[i]);
    const std::uint64_t kb = feature_key(b[j]);
    const std::uint32_t in_a = ka <= kb;
    const std::uint32_t in_b = kb <= ka;
    const std::uint64_t low = in_a ? ka : kb;
    const std::uint32_t pos[2] = {i, j};
    visit(FeatureRef{static_cast<ImageId>(low >> 32),
                     static_cast<FeatureId>(low & 0xffffffffu)},
          static_cast<ListMask>(in_a | (in_b << 1)), static_cast<const std::uint32_t*>(pos));
    i += in_a;
    j += in_b;
  }
  for (; i < na; ++i) {
    const std::uint32_t pos[2] = {i, j};
    visit(a[i], ListMask{1}, static_cast<const std::uint32_t*>(pos));
  }
  for (; j < nb; ++j) {
    const std::uint32_t pos[2] = {i, j};
    visit(b[j], ListMask{2}, static_cast<const std::uint32_t*>(pos));
  }
}

// Same visits as sweep_two, but the image range is cut into kSegments
// independent merges whose steps are interleaved. Per-image visit order is
// preserved; order across images is not.
template <int kSegments, class Visit>
void sweep_two_interleaved(std::span<const FeatureRef> a, std::span<const FeatureRef> b,
                           Visit& visit) {
  std::uint32_t i[kSegments], j[kSegments], i_end[kSegments], j_end[kSegments];
  const ImageId last = std::max(a.empty() ? ImageId{0} : a.back().image_id,
                                b.empty() ? ImageId{0} : b.back().image_id);
  const auto before = [](const FeatureRef& r, ImageId cut) { return r.image_id < cut; };
  std::uint32_t pa = 0, pb = 0;
  for (int s = 0; s < kSegments; ++s) {
    i[s] = pa;
    j[s] = pb;
    if (s == kSegments - 1) {
      pa = static_cast<std::uint32_t>(a.size());
      pb = static_cast<std::uint32_t>(b.size());
    } else {
      const auto cut = static_cast<ImageId>((std::uint64_t{last} + 1) * (s + 1) / kSegments);
      pa = static_cast<std::uint32_t>(std::lower_bound(a.begin(), a.end(), cut, before) - a.begin());
      pb = static_cast<std::uint32_t>(std::lower_bound(b.begin(), b.end(), cut, before) - b.begin());
    }
    i_end[s] = pa;
    j_end[s] = pb;
  }
  const auto step = [&](int s) {
    const std::uint64_t ka = feature_key(a[i[s]]);
    const std::uint64_t kb = feature_key(b[j[s]]);
    const std::uint32_t in_a = ka <= kb;
    const std::uint32_t in_b = kb <= ka;
    const std::uint64_t low = in_a ? ka : kb;
    const std::uint32_t pos[2] = {i[s], j[s]};
    visit(FeatureRef{static_cast<ImageId>(low >> 32),
                     static_cast<FeatureId>(low & 0xffffffffu)},
          static_cast<ListMask>(in_a | (in_b << 1)), static_cast<const std::uint32_t*>(pos));
    i[s] += in_a;
    j[s] += in_b;
  };
  while (true) {
    bool all = true;
    for (int s = 0; s < kSegments; ++s) all &= (i[s] < i_end[s]) & (j[s] < j_end[s]);
    if (!all) break;
    for (int s = 0; s < kSegments; ++s) step(s);
  }
  for (int s = 0; s < kSegments; ++s) {
    while (i[s] < i_end[s] && j[s] < j_end[s]) step(s);
    for (; i[s] < i_end[s]; ++i[s]) {
      const std::uint32_t pos[2] = {i[s], j[s]};
      visit(a[i[s]], ListMask{1}, static_cast<const std::uint32_t*>(pos));
    }
    for (; j[s] < j_end[s]; ++j[s]) {
      const std::uint32_t pos[2] = {i[s], j[s]};
      visit(b[j[s]], ListMask{2}, static_cast<const std::uint32_t*>(pos));
    }
  }
}

inline void require_sorted(std::span<const FeatureRef> list, std::size_t k) {
  for (std::size_t i = 1; i < list.size(); ++i) {
    if (feature_key(list[i]) <= feature_key(list[i - 1])) {
      throw Error("posting list " + std::to_string(k) +
                  " is not sorted or has duplicates at position " +
                  std::to_string(i));
    }
  }
}

}  // namespace detail

/// One simultaneous sweep over K sorted lists. For every feature of the
/// union, in ascending order, calls visit(feature, mask, positions) where
/// positions[k] is the feature's index in list k (valid when bit k is set).
/// Throws when a list is not strictly increasing, unless kChecked is false.
template <bool kChecked = true, class Visit>
void sweep_union(std::span<const std::span<const FeatureRef>> lists,
                 Visit&& visit) {
  const std::size_t K = lists.size();
  if (K == 0 || K > kMaxVocabularies) {
    throw Error("list count must be in [1, " +
                std::to_string(kMaxVocabularies) + "]");
  }
  if constexpr (kChecked) {
    for (std::size_t k = 0; k < K; ++k) detail::require_sorted(lists[k], k);
  }
  if (K == 2) {
    detail::sweep_two(lists[0], lists[1], visit);
    return;
  }
  constexpr std::uint64_t kDone = ~std::uint64_t{0};
  std::uint32_t pos[kMaxVocabularies] = {};
  std::uint64_t head[kMaxVocabularies];
  for (std::size_t k = 0; k < K; ++k) {
    head[k] = lists[k].empty() ? kDone : feature_key(lists[k][0]);
  }
  while (true) {
    std::uint64_t low = kDone;
    for (std::size_t k = 0; k < K; ++k) low = head[k] < low ? head[k] : low;
    if (low == kDone) break;
    ListMask mask = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (head[k] == low) mask |= ListMask{1} << k;
    }
    const FeatureRef ref{static_cast<ImageId>(low >> 32),
                         static_cast<FeatureId>(low & 0xffffffffu)};
    visit(ref, mask, static_cast<const std::uint32_t*>(pos));
    for (std::size_t k = 0; k < K; ++k) {
      if (!(mask >> k & 1u)) continue;
      const std::uint32_t next = ++pos[k];
      head[k] = next == lists[k].size() ? kDone : feature_key(lists[k][next]);
    }
  }
}

SetDecomposition decompose(std::span<const std::span<const FeatureRef>> lists);

}  // namespace vmerge
