#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vmerge/core.hpp"
#include "vmerge/hamming.hpp"
#include "vmerge/vocab.hpp"

namespace vmerge {

/// Features quantized to one visual word, sorted by (image_id, feature_id).
/// `signatures` is parallel to `features`, or empty when the index carries
/// no Hamming signatures.
struct PostingList {
  std::vector<FeatureRef> features;
  std::vector<std::uint64_t> signatures;

  std::size_t size() const { return features.size(); }
  bool empty() const { return features.empty(); }

  friend bool operator==(const PostingList&, const PostingList&) = default;
};

struct InvertedFile {
  std::uint32_t vocabulary_id = 0;
  std::vector<PostingList> postings;  // one per visual word
  std::vector<double> idf;            // one per visual word

  std::size_t entry_count() const;

  friend bool operator==(const InvertedFile&, const InvertedFile&) = default;
};

/// Everything a query needs: K inverted files over the same database, the
/// vocabularies they were built with and per-image score normalizers.
struct IndexBundle {
  std::vector<InvertedFile> inverted_files;
  std::vector<Vocabulary> vocabularies;
  std::vector<Quantizer> quantizers;
  std::vector<float> image_norms;
  std::uint32_t image_count = 0;
  /// Empty, or one entry per vocabulary.
  std::vector<HammingParams> hamming;

  std::uint32_t vocabulary_count() const {
    return static_cast<std::uint32_t>(inverted_files.size());
  }
  bool has_signatures() const { return !hamming.empty(); }
};

/// idf[w] = ln(N / n_w), n_w = distinct images in posting list w; 0 if empty.
std::vector<double> compute_idf(const std::vector<PostingList>& postings,
                                std::uint32_t image_count);

/// Builds one inverted file per vocabulary. `hamming` is empty or holds one
/// parameter set per vocabulary.
IndexBundle build_index(const Corpus& db, std::vector<Vocabulary> vocabularies,
                        std::vector<HammingParams> hamming = {},
                        unsigned threads = 1);

/// Attaches vocabularies (and their quantizers) to a bundle read from disk,
/// checking that K and every vocabulary size match the inverted files.
void attach_vocabularies(IndexBundle& index,
                         std::vector<Vocabulary> vocabularies);

// Index file: "BMIX" | u8 has_signatures | u32 K | u32 N |
//   per inverted file: u32 vocab_size, per word: u32 count,
//   count x (u32 image_id, u32 feature_id[, u64 signature]) |
//   N x f32 image_norms.
// Hamming parameters go to a separate "BMHE" file.
std::string serialize_index(const IndexBundle& index);
IndexBundle parse_index(std::string_view bytes);
void write_index(const IndexBundle& index, const std::filesystem::path& path);
IndexBundle read_index(const std::filesystem::path& path);

std::string serialize_hamming(const std::vector<HammingParams>& params);
std::vector<HammingParams> parse_hamming(std::string_view bytes);

/// Path of the Hamming sidecar written next to an index file.
std::filesystem::path hamming_sidecar(const std::filesystem::path& index_path);

}  // namespace vmerge
