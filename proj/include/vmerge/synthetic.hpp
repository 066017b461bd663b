#pragma once

#include <cstdint>

#include "vmerge/core.hpp"
#include "vmerge/io.hpp"

namespace vmerge {

/// Gaussian-mixture image model with planted near-duplicates.
///
/// A descriptor is a mixture component centre plus isotropic noise of
/// `cluster_spread`. Each image also owns `background_per_image` of the
/// `background_clusters` tight components (spread `background_spread`), and
/// draws a `background_fraction` share of its descriptors from them: bursty
/// repeated patterns that every vocabulary captures the same way. Each query
/// has `duplicates_per_query` database copies whose features are the query's
/// features plus Gaussian noise of `noise`; the rest of the database is
/// independent distractors.
///
/// The defaults are the standard benchmark used for calibration and the
/// method comparisons.
struct SyntheticSpec {
  std::uint32_t n_images = 1000;  // database size, duplicates included
  std::uint32_t n_queries = 100;
  std::uint32_t features_per_image = 50;
  std::uint32_t dim = 16;
  std::uint32_t n_clusters = 64;
  double cluster_spread = 1.0;
  std::uint32_t duplicates_per_query = 2;
  double noise = 0.8;
  std::uint32_t background_clusters = 16;
  double background_fraction = 0.15;
  double background_spread = 0.05;
  std::uint32_t background_per_image = 1;
  /// Scale of the background centres relative to the foreground ones.
  double background_scale = 3.0;
  /// Ukbench-style: query q is also database image q and is relevant to
  /// itself.
  bool query_in_db = false;
  std::uint32_t training_images = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  Corpus training;
  Corpus database;
  Corpus queries;
  GroundTruth ground_truth;
};

/// Deterministic in spec.seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace vmerge
