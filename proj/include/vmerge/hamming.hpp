#pragma once

#include <cstdint>
#include <vector>

#include "vmerge/core.hpp"

namespace vmerge {

/// Binary signature of at most 64 bits; bit b is stored at position b.
struct Signature {
  std::uint64_t bits = 0;
  std::uint32_t width = 0;

  friend bool operator==(const Signature&, const Signature&) = default;
};

/// popcount(a xor b). Throws when widths differ.
std::uint32_t hamming_distance(Signature a, Signature b);

/// Hamming Embedding parameters for one vocabulary: a random projection
/// shared by all vocabularies (same seed) and per-word, per-bit medians.
struct HammingParams {
  std::uint32_t bits = 64;
  std::uint64_t projection_seed = 0;
  std::uint32_t dim = 0;
  std::vector<float> projection;  // bits x dim
  std::vector<float> thresholds;  // vocabulary_size x bits

  std::uint32_t vocabulary_size() const {
    return bits == 0 ? 0 : static_cast<std::uint32_t>(thresholds.size() / bits);
  }
  void validate() const;

  friend bool operator==(const HammingParams&, const HammingParams&) = default;
};

/// Gaussian random projection, bits x dim, deterministic in seed.
std::vector<float> make_projection(std::uint32_t bits, std::uint32_t dim,
                                   std::uint64_t seed);

/// Projects x onto every projection row.
std::vector<float> project(DescriptorView x, const HammingParams& params);

/// Learns per-word thresholds as medians of the projected training
/// descriptors quantized to that word. Words with fewer than four training
/// points use the global per-bit medians.
HammingParams train_hamming(const Corpus& training, const Vocabulary& vocab,
                            std::uint32_t bits, std::uint64_t projection_seed,
                            unsigned threads = 1);

/// Bit b is set iff projection_b . x > thresholds[word][b].
Signature compute_signature(DescriptorView x, WordId word,
                            const HammingParams& params);

}  // namespace vmerge
