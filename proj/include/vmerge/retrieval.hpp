#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmerge/bayes.hpp"
#include "vmerge/core.hpp"
#include "vmerge/index.hpp"

namespace vmerge {

enum class Method { B0, B1, B2, Bayes, RankAggregation };

/// CLI spelling: b0, b1, b2, bayes, ra.
std::string_view method_name(Method method);
Method parse_method(std::string_view name);

struct ScoringMethod {
  Method method = Method::Bayes;
  /// Vocabulary used by B0.
  std::uint32_t b0_vocabulary = 0;
  /// Hard Hamming filter on every match.
  bool use_hamming = false;
  /// Divide difference-set votes by sqrt(matches in the same image).
  bool use_burstiness = false;

  void validate(std::uint32_t vocabulary_count) const;
};

struct ScoredImage {
  ImageId image_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredImage&, const ScoredImage&) = default;
};

/// Descending score, ties by ascending image id.
using RankedResult = std::vector<ScoredImage>;
void sort_ranked(RankedResult& result);

/// Kronecker delta on one vocabulary.
int match_b0(WordId x_word, WordId y_word);
/// Number of vocabularies where the words agree.
int match_b1(std::span<const WordId> x_words, std::span<const WordId> y_words);
/// 1 iff the words agree in every vocabulary.
int match_b2(std::span<const WordId> x_words, std::span<const WordId> y_words);

/// A query descriptor quantized against every vocabulary of an index.
struct QueryFeature {
  std::array<WordId, kMaxVocabularies> words{};
  std::array<std::uint64_t, kMaxVocabularies> signatures{};
};

std::vector<QueryFeature> prepare_query(const ImageRecord& query,
                                        std::uint32_t dim,
                                        const IndexBundle& index);

/// Scores every database image against one query image. For each query
/// feature the K posting lists are swept once: difference-set members vote
/// immediately, intersection members are buffered until the sweep has
/// produced the cardinalities their weight depends on. Returns every image
/// that received at least one vote, divided by its image norm.
RankedResult score_query(const ImageRecord& query, std::uint32_t dim,
                         const IndexBundle& index, const ScoringMethod& method,
                         const MergeConfig& cfg);
RankedResult score_prepared(std::span<const QueryFeature> features,
                            const IndexBundle& index,
                            const ScoringMethod& method, const MergeConfig& cfg);

/// Median-rank fusion. Images missing from an input get rank
/// universe_size + 1. Output is ordered by median rank, then mean rank,
/// then image id; scores are universe_size - position.
RankedResult rank_aggregate(std::span<const RankedResult> per_vocabulary,
                            std::size_t universe_size);

/// Results file: one line per query, "query_id: image_id score ...",
/// truncated to the top `topk` entries (0 keeps everything).
using ResultSet = std::map<ImageId, RankedResult>;
std::string format_results(const ResultSet& results, std::size_t topk);
ResultSet parse_results(std::string_view text);
void write_results(const ResultSet& results, std::size_t topk,
                   const std::filesystem::path& path);
ResultSet read_results(const std::filesystem::path& path);

/// Scores every image of `queries` (query id = image id), optionally on
/// several threads. Output does not depend on the thread count.
ResultSet run_queries(const Corpus& queries, const IndexBundle& index,
                      const ScoringMethod& method, const MergeConfig& cfg,
                      unsigned threads = 1);

}  // namespace vmerge
