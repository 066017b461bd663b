#include "vmerge/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vmerge/error.hpp"

namespace vmerge {

std::size_t Corpus::feature_count() const {
  std::size_t total = 0;
  for (const auto& image : images) total += image.feature_count(dim);
  return total;
}

void Corpus::validate() const {
  if (dim == 0) throw Error("corpus dimension must be positive");
  if (images.empty()) throw Error("corpus must contain at least one image");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& image = images[i];
    if (image.image_id != i) {
      throw Error("image ids must be dense: position " + std::to_string(i) +
                  " holds image_id " + std::to_string(image.image_id));
    }
    if (image.values.size() % dim != 0) {
      throw Error("image " + std::to_string(i) +
                  " has a descriptor block that is not a multiple of dim " +
                  std::to_string(dim));
    }
    for (float v : image.values) {
      if (!std::isfinite(v)) {
        throw Error("image " + std::to_string(i) + " has a non-finite value");
      }
    }
  }
}

void Vocabulary::validate() const {
  if (dim == 0) throw Error("vocabulary dimension must be positive");
  if (centroids.empty() || centroids.size() % dim != 0) {
    throw Error("vocabulary storage must hold a positive number of centroids");
  }
  for (float v : centroids) {
    if (!std::isfinite(v)) throw Error("vocabulary has a non-finite centroid");
  }
  const std::uint32_t n = size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  auto row_less = [&](std::uint32_t a, std::uint32_t b) {
    auto ca = centroid(a), cb = centroid(b);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(),
                                        cb.end());
  };
  std::sort(order.begin(), order.end(), row_less);
  for (std::uint32_t i = 1; i < n; ++i) {
    auto a = centroid(order[i - 1]), b = centroid(order[i]);
    if (std::equal(a.begin(), a.end(), b.begin())) {
      throw Error("duplicate centroids " + std::to_string(order[i - 1]) +
                  " and " + std::to_string(order[i]));
    }
  }
}

}  // namespace vmerge
