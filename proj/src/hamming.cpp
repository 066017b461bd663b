#include "vmerge/hamming.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "vmerge/error.hpp"
#include "vmerge/parallel.hpp"
#include "vmerge/vocab.hpp"

namespace vmerge {

std::uint32_t hamming_distance(Signature a, Signature b) {
  if (a.width != b.width) {
    throw Error("signature width mismatch: " + std::to_string(a.width) +
                " vs " + std::to_string(b.width));
  }
  return static_cast<std::uint32_t>(std::popcount(a.bits ^ b.bits));
}

void HammingParams::validate() const {
  if (bits == 0 || bits > 64) throw Error("signature width must be in [1, 64]");
  if (dim == 0) throw Error("hamming projection dimension must be positive");
  if (projection.size() != static_cast<std::size_t>(bits) * dim) {
    throw Error("hamming projection has wrong shape");
  }
  if (thresholds.empty() || thresholds.size() % bits != 0) {
    throw Error("hamming thresholds have wrong shape");
  }
}

std::vector<float> make_projection(std::uint32_t bits, std::uint32_t dim,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> projection(static_cast<std::size_t>(bits) * dim);
  for (auto& v : projection) v = gauss(rng);
  return projection;
}

std::vector<float> project(DescriptorView x, const HammingParams& params) {
  if (x.size() != params.dim) {
    throw Error("descriptor dimension does not match hamming projection");
  }
  std::vector<float> out(params.bits);
  for (std::uint32_t b = 0; b < params.bits; ++b) {
    const float* row = params.projection.data() + static_cast<std::size_t>(b) * params.dim;
    float acc = 0.0f;
    for (std::uint32_t j = 0; j < params.dim; ++j) acc += row[j] * x[j];
    out[b] = acc;
  }
  return out;
}

namespace {

float median(std::vector<float>& values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const float upper = values[mid];
  if (n % 2 == 1) return upper;
  const float lower = *std::max_element(values.begin(), values.begin() + mid);
  return static_cast<float>(0.5 * (static_cast<double>(lower) + upper));
}

}  // namespace

HammingParams train_hamming(const Corpus& training, const Vocabulary& vocab,
                            std::uint32_t bits, std::uint64_t projection_seed,
                            unsigned threads) {
  if (bits == 0 || bits > 64) throw Error("signature width must be in [1, 64]");
  training.validate();
  vocab.validate();
  if (training.dim != vocab.dim) {
    throw Error("training dimension does not match vocabulary dimension");
  }
  HammingParams params;
  params.bits = bits;
  params.projection_seed = projection_seed;
  params.dim = vocab.dim;
  params.projection = make_projection(bits, vocab.dim, projection_seed);

  std::vector<DescriptorView> points;
  for (const auto& image : training.images) {
    for (std::size_t f = 0; f < image.feature_count(training.dim); ++f) {
      points.push_back(image.descriptor(f, training.dim));
    }
  }
  if (points.empty()) throw Error("hamming training corpus has no descriptors");

  const Quantizer quantizer(vocab);
  std::vector<WordId> words(points.size());
  std::vector<float> projected(points.size() * bits);
  parallel_for(points.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      words[i] = quantizer.nearest(points[i]);
      auto p = project(points[i], params);
      std::copy(p.begin(), p.end(), projected.begin() + i * bits);
    }
  });

  std::vector<float> global(bits);
  std::vector<float> column;
  for (std::uint32_t b = 0; b < bits; ++b) {
    column.clear();
    for (std::size_t i = 0; i < points.size(); ++i) {
      column.push_back(projected[i * bits + b]);
    }
    global[b] = median(column);
  }

  const std::uint32_t size = vocab.size();
  std::vector<std::vector<std::size_t>> members(size);
  for (std::size_t i = 0; i < points.size(); ++i) members[words[i]].push_back(i);
  params.thresholds.resize(static_cast<std::size_t>(size) * bits);
  for (std::uint32_t w = 0; w < size; ++w) {
    float* out = params.thresholds.data() + static_cast<std::size_t>(w) * bits;
    if (members[w].size() < 4) {
      std::copy(global.begin(), global.end(), out);
      continue;
    }
    for (std::uint32_t b = 0; b < bits; ++b) {
      column.clear();
      for (std::size_t i : members[w]) column.push_back(projected[i * bits + b]);
      out[b] = median(column);
    }
  }
  return params;
}

Signature compute_signature(DescriptorView x, WordId word,
                            const HammingParams& params) {
  if (word >= params.vocabulary_size()) {
    throw Error("no hamming thresholds for word " + std::to_string(word));
  }
  const auto p = project(x, params);
  const float* threshold =
      params.thresholds.data() + static_cast<std::size_t>(word) * params.bits;
  Signature sig;
  sig.width = params.bits;
  for (std::uint32_t b = 0; b < params.bits; ++b) {
    if (p[b] > threshold[b]) sig.bits |= std::uint64_t{1} << b;
  }
  return sig;
}

}  // namespace vmerge
