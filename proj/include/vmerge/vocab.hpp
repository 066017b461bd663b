#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vmerge/core.hpp"

namespace vmerge {

/// Squared Euclidean distance, accumulated in float in index order.
float squared_distance(DescriptorView a, DescriptorView b);

/// Nearest-centroid search over one vocabulary. Centroids are repacked in
/// blocks of eight so distances to a block are computed together; each
/// distance is still accumulated in dimension order, so results equal a
/// plain scan bit for bit. Ties go to the lowest centroid index.
class Quantizer {
 public:
  explicit Quantizer(const Vocabulary& vocab);

  WordId nearest(DescriptorView x) const;
  /// Nearest centroid and its squared distance.
  std::pair<WordId, float> nearest_with_distance(DescriptorView x) const;

  std::uint32_t dim() const { return dim_; }
  std::uint32_t size() const { return size_; }

 private:
  static constexpr std::size_t kBlock = 8;
  std::uint32_t dim_;
  std::uint32_t size_;
  std::vector<float> packed_;  // [block][dim][kBlock]
};

struct KMeansReport {
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> wcss;
  std::uint32_t iterations = 0;
};

/// Lloyd's k-means with k-means++ seeding. Deterministic in
/// (training, size, seed, max_iters); `threads` only affects speed.
Vocabulary train_vocabulary(const Corpus& training, std::uint32_t size,
                            std::uint64_t seed, std::uint32_t max_iters,
                            unsigned threads = 1,
                            KMeansReport* report = nullptr);

/// Visual word of x in every vocabulary.
std::vector<WordId> quantize(DescriptorView x,
                             std::span<const Vocabulary> vocabularies);
std::vector<WordId> quantize(DescriptorView x,
                             std::span<const Quantizer> quantizers);

}  // namespace vmerge
