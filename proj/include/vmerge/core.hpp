#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace vmerge {

using ImageId = std::uint32_t;
using FeatureId = std::uint32_t;
using WordId = std::uint32_t;

/// Read-only view of one descriptor (one local feature).
using DescriptorView = std::span<const float>;

/// Identifies one indexed feature: its image and its position inside that
/// image's descriptor list.
struct FeatureRef {
  ImageId image_id = 0;
  FeatureId feature_id = 0;

  friend constexpr auto operator<=>(const FeatureRef&,
                                    const FeatureRef&) = default;
};

/// Descriptors of one image, stored row-major (feature_count x dim).
struct ImageRecord {
  ImageId image_id = 0;
  std::vector<float> values;

  std::size_t feature_count(std::uint32_t dim) const {
    return dim == 0 ? 0 : values.size() / dim;
  }
  DescriptorView descriptor(std::size_t feature, std::uint32_t dim) const {
    return {values.data() + feature * dim, dim};
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// A set of images sharing one descriptor dimension. Image ids are dense:
/// images[i].image_id == i.
struct Corpus {
  std::uint32_t dim = 0;
  std::vector<ImageRecord> images;

  std::size_t image_count() const { return images.size(); }
  std::size_t feature_count() const;

  /// Throws vmerge::Error when any corpus invariant is violated.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Centroids of one k-means quantizer, stored row-major (size x dim).
struct Vocabulary {
  std::uint32_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> centroids;

  std::uint32_t size() const {
    return dim == 0 ? 0 : static_cast<std::uint32_t>(centroids.size() / dim);
  }
  DescriptorView centroid(std::size_t i) const {
    return {centroids.data() + i * dim, dim};
  }

  /// Rejects empty vocabularies, ragged storage, non-finite values and
  /// duplicate centroids.
  void validate() const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

}  // namespace vmerge
