#include "vmerge/vocab.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "vmerge/error.hpp"
#include "vmerge/parallel.hpp"

namespace vmerge {

float squared_distance(DescriptorView a, DescriptorView b) {
  float d = 0.0f;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const float diff = a[j] - b[j];
    d += diff * diff;
  }
  return d;
}

Quantizer::Quantizer(const Vocabulary& vocab)
    : dim_(vocab.dim), size_(vocab.size()) {
  if (dim_ == 0 || size_ == 0) throw Error("empty vocabulary");
  const std::size_t blocks = (size_ + kBlock - 1) / kBlock;
  packed_.assign(blocks * dim_ * kBlock, 0.0f);
  for (std::uint32_t c = 0; c < size_; ++c) {
    const std::size_t b = c / kBlock, lane = c % kBlock;
    for (std::uint32_t j = 0; j < dim_; ++j) {
      packed_[(b * dim_ + j) * kBlock + lane] = vocab.centroids[c * dim_ + j];
    }
  }
}

std::pair<WordId, float> Quantizer::nearest_with_distance(
    DescriptorView x) const {
  if (x.size() != dim_) {
    throw Error("descriptor dimension " + std::to_string(x.size()) +
                " does not match vocabulary dimension " +
                std::to_string(dim_));
  }
  WordId best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  const std::size_t blocks = (size_ + kBlock - 1) / kBlock;
  for (std::size_t b = 0; b < blocks; ++b) {
    float acc[kBlock] = {};
    const float* block = packed_.data() + b * dim_ * kBlock;
    for (std::uint32_t j = 0; j < dim_; ++j) {
      const float xj = x[j];
      const float* row = block + j * kBlock;
      for (std::size_t lane = 0; lane < kBlock; ++lane) {
        const float diff = xj - row[lane];
        acc[lane] += diff * diff;
      }
    }
    const std::size_t lanes = std::min<std::size_t>(kBlock, size_ - b * kBlock);
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      if (acc[lane] < best_d) {
        best_d = acc[lane];
        best = static_cast<WordId>(b * kBlock + lane);
      }
    }
  }
  return {best, best_d};
}

WordId Quantizer::nearest(DescriptorView x) const {
  return nearest_with_distance(x).first;
}

std::vector<WordId> quantize(DescriptorView x,
                             std::span<const Quantizer> quantizers) {
  std::vector<WordId> words;
  words.reserve(quantizers.size());
  for (const auto& q : quantizers) words.push_back(q.nearest(x));
  return words;
}

std::vector<WordId> quantize(DescriptorView x,
                             std::span<const Vocabulary> vocabularies) {
  std::vector<WordId> words;
  words.reserve(vocabularies.size());
  for (const auto& v : vocabularies) {
    if (x.size() != v.dim) {
      throw Error("descriptor dimension " + std::to_string(x.size()) +
                  " does not match vocabulary dimension " +
                  std::to_string(v.dim));
    }
    WordId best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::uint32_t c = 0; c < v.size(); ++c) {
      const float d = squared_distance(x, v.centroid(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    words.push_back(best);
  }
  return words;
}

namespace {

// Uniform double in [0, 1) from the top 53 bits.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t count_distinct_rows(const std::vector<float>& points,
                                std::size_t n, std::uint32_t dim) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto row = [&](std::size_t i) { return points.data() + i * dim; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(row(a), row(a) + dim, row(b),
                                        row(b) + dim);
  });
  std::size_t distinct = n == 0 ? 0 : 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (!std::equal(row(order[i - 1]), row(order[i - 1]) + dim,
                    row(order[i]))) {
      ++distinct;
    }
  }
  return distinct;
}

}  // namespace

Vocabulary train_vocabulary(const Corpus& training, std::uint32_t size,
                            std::uint64_t seed, std::uint32_t max_iters,
                            unsigned threads, KMeansReport* report) {
  if (size == 0) throw Error("vocabulary size must be positive");
  if (max_iters == 0) throw Error("max_iters must be positive");
  training.validate();
  const std::uint32_t dim = training.dim;

  std::vector<float> points;
  points.reserve(training.feature_count() * dim);
  for (const auto& image : training.images) {
    points.insert(points.end(), image.values.begin(), image.values.end());
  }
  const std::size_t n = points.size() / dim;
  if (n == 0) throw Error("training corpus has no descriptors");
  if (n < size) {
    throw Error("training corpus has " + std::to_string(n) +
                " descriptors, fewer than vocabulary size " +
                std::to_string(size));
  }
  const std::size_t distinct = count_distinct_rows(points, n, dim);
  if (distinct < size) {
    throw Error("training corpus has " + std::to_string(distinct) +
                " distinct descriptors, fewer than vocabulary size " +
                std::to_string(size));
  }
  auto point = [&](std::size_t i) {
    return DescriptorView(points.data() + i * dim, dim);
  };

  // k-means++ seeding. Already-chosen points have zero weight, so with at
  // least `size` distinct points every seed is a distinct point.
  std::mt19937_64 rng(seed);
  Vocabulary vocab;
  vocab.dim = dim;
  vocab.seed = seed;
  vocab.centroids.reserve(static_cast<std::size_t>(size) * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(unit_uniform(rng) * n);
  for (std::uint32_t c = 0; c < size; ++c) {
    auto chosen = point(pick);
    vocab.centroids.insert(vocab.centroids.end(), chosen.begin(), chosen.end());
    if (c + 1 == size) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min<double>(d2[i], squared_distance(point(i), chosen));
      total += d2[i];
    }
    double target = unit_uniform(rng) * total;
    pick = n;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      last_positive = i;
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;
  }

  std::vector<WordId> assign(n, 0);
  std::vector<float> dist(n, 0.0f);
  KMeansReport local;
  for (std::uint32_t iter = 0; iter < max_iters; ++iter) {
    const Quantizer quantizer(vocab);
    std::vector<char> changed_flags(n, 0);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        auto [w, d] = quantizer.nearest_with_distance(point(i));
        changed_flags[i] = iter == 0 || w != assign[i];
        assign[i] = w;
        dist[i] = d;
      }
    });
    const bool changed =
        std::any_of(changed_flags.begin(), changed_flags.end(),
                    [](char f) { return f != 0; });

    std::vector<std::size_t> counts(size, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
    // Empty-cluster repair: move the point farthest from its centroid.
    for (std::uint32_t c = 0; c < size; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] < 2) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) throw Error("k-means: cannot repair empty cluster");
      --counts[assign[far]];
      assign[far] = c;
      dist[far] = 0.0f;
      ++counts[c];
    }

    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) wcss += dist[i];
    local.wcss.push_back(wcss);
    local.iterations = iter + 1;

    std::vector<double> sums(static_cast<std::size_t>(size) * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto p = point(i);
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      for (std::uint32_t j = 0; j < dim; ++j) s[j] += p[j];
    }
    for (std::uint32_t c = 0; c < size; ++c) {
      for (std::uint32_t j = 0; j < dim; ++j) {
        vocab.centroids[static_cast<std::size_t>(c) * dim + j] =
            static_cast<float>(sums[static_cast<std::size_t>(c) * dim + j] /
                               static_cast<double>(counts[c]));
      }
    }
    if (!changed && iter > 0) break;
  }
  vocab.validate();
  if (report) *report = std::move(local);
  return vocab;
}

}  // namespace vmerge
