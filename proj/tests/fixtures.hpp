#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vmerge/index.hpp"
#include "vmerge/retrieval.hpp"
#include "vmerge/synthetic.hpp"
#include "vmerge/vocab.hpp"

#include <unistd.h>

namespace vmerge::fixtures {

struct Pipeline {
  SyntheticData data;
  IndexBundle index;
};

/// Synthetic corpus, K vocabularies (seeds vocab_seed + k) and an index,
/// optionally with Hamming signatures trained on the training split.
inline Pipeline make_pipeline(const SyntheticSpec& spec, std::uint32_t K,
                              std::uint32_t vocab_size,
                              std::uint64_t vocab_seed = 1,
                              bool with_hamming = false,
                              std::uint32_t iters = 25) {
  Pipeline p;
  p.data = generate_synthetic(spec);
  std::vector<Vocabulary> vocabs;
  for (std::uint32_t k = 0; k < K; ++k) {
    vocabs.push_back(train_vocabulary(p.data.training, vocab_size, vocab_seed + k, iters));
  }
  std::vector<HammingParams> he;
  if (with_hamming) {
    for (const auto& v : vocabs) he.push_back(train_hamming(p.data.training, v, 64, 1));
  }
  p.index = build_index(p.data.database, std::move(vocabs), std::move(he));
  return p;
}

inline SyntheticSpec small_spec(std::uint32_t images, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_images = images;
  s.n_queries = 10;
  s.features_per_image = 20;
  s.training_images = 100;
  s.seed = seed;
  return s;
}

/// Outcome of comparing an engine ranking with an oracle ranking.
struct RankingDiff {
  bool same_ids = true;
  double max_score_diff = 0.0;
  /// Adjacent pairs of `got` ordered against the oracle by more than tol.
  std::size_t order_violations = 0;

  bool ok(double tol) const {
    return same_ids && max_score_diff <= tol && order_violations == 0;
  }
};

/// Scores must agree within tol; order must agree except among images whose
/// oracle scores are within tol of each other.
inline RankingDiff compare_rankings(const RankedResult& got,
                                    const RankedResult& want, double tol) {
  RankingDiff d;
  if (got.size() != want.size()) {
    d.same_ids = false;
    return d;
  }
  std::map<ImageId, double> oracle;
  for (const auto& e : want) oracle[e.image_id] = e.score;
  for (std::size_t i = 0; i < got.size(); ++i) {
    auto it = oracle.find(got[i].image_id);
    if (it == oracle.end()) {
      d.same_ids = false;
      return d;
    }
    d.max_score_diff = std::max(d.max_score_diff, std::abs(it->second - got[i].score));
    if (i > 0) {
      const double prev = oracle[got[i - 1].image_id];
      const double cur = it->second;
      if (cur > prev + tol) ++d.order_violations;
      if (std::abs(cur - prev) <= tol && got[i - 1].score == got[i].score &&
          got[i - 1].image_id > got[i].image_id) {
        ++d.order_violations;
      }
    }
  }
  return d;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            ("vmerge_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& f) const { return path_ / f; }

 private:
  std::filesystem::path path_;
};

}  // namespace vmerge::fixtures
