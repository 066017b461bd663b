#include "vmerge/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "vmerge/error.hpp"

namespace vmerge {

void SyntheticSpec::validate() const {
  if (n_images == 0 || n_queries == 0 || features_per_image == 0 || dim == 0 ||
      n_clusters == 0 || training_images == 0) {
    throw Error("synthetic spec: all counts must be positive");
  }
  if (duplicates_per_query == 0) {
    throw Error("synthetic spec: duplicates_per_query must be positive");
  }
  if (!(background_fraction >= 0.0 && background_fraction <= 1.0)) {
    throw Error("synthetic spec: background_fraction must be in [0, 1]");
  }
  if (background_fraction > 0.0 &&
      (background_clusters == 0 || background_per_image == 0)) {
    throw Error("synthetic spec: background_fraction needs background_clusters");
  }
  if (!(cluster_spread >= 0.0) || !(noise >= 0.0) || !(background_spread >= 0.0)) {
    throw Error("synthetic spec: spread and noise must be non-negative");
  }
  const std::uint64_t planted =
      static_cast<std::uint64_t>(n_queries) *
      (duplicates_per_query + (query_in_db ? 1u : 0u));
  if (planted > n_images) {
    throw Error("synthetic spec: " + std::to_string(planted) +
                " planted images do not fit in a database of " +
                std::to_string(n_images));
  }
}

namespace {

class MixtureModel {
 public:
  MixtureModel(const SyntheticSpec& spec, std::mt19937_64& rng)
      : dim_(spec.dim),
        spread_(static_cast<float>(spec.cluster_spread)),
        background_spread_(static_cast<float>(spec.background_spread)),
        background_fraction_(spec.background_fraction),
        background_per_image_(spec.background_per_image) {
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    centres_.resize(static_cast<std::size_t>(spec.n_clusters) * spec.dim);
    for (auto& v : centres_) v = gauss(rng);
    background_.resize(static_cast<std::size_t>(spec.background_clusters) * spec.dim);
    for (auto& v : background_) {
      v = static_cast<float>(spec.background_scale) * gauss(rng);
    }
  }

  ImageRecord sample_image(ImageId id, std::uint32_t features,
                           std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, centres_.size() / dim_ - 1);
    std::uniform_int_distribution<std::size_t> pick_background(
        0, background_.empty() ? 0 : background_.size() / dim_ - 1);
    std::vector<std::size_t> owned;
    if (!background_.empty()) {
      for (std::uint32_t b = 0; b < background_per_image_; ++b) {
        owned.push_back(pick_background(rng));
      }
    }
    std::uniform_int_distribution<std::size_t> pick_owned(
        0, owned.empty() ? 0 : owned.size() - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    ImageRecord image;
    image.image_id = id;
    image.values.reserve(static_cast<std::size_t>(features) * dim_);
    for (std::uint32_t f = 0; f < features; ++f) {
      const bool background = !owned.empty() && background_fraction_ > 0.0 &&
                              coin(rng) < background_fraction_;
      const float* centre = background
                                ? background_.data() + owned[pick_owned(rng)] * dim_
                                : centres_.data() + pick(rng) * dim_;
      const float spread = background ? background_spread_ : spread_;
      for (std::uint32_t j = 0; j < dim_; ++j) {
        image.values.push_back(centre[j] + spread * gauss(rng));
      }
    }
    return image;
  }

 private:
  std::uint32_t dim_;
  float spread_;
  float background_spread_;
  double background_fraction_;
  std::uint32_t background_per_image_;
  std::vector<float> centres_;
  std::vector<float> background_;
};

ImageRecord perturb(const ImageRecord& source, ImageId id, double noise,
                    std::mt19937_64& rng) {
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  ImageRecord copy;
  copy.image_id = id;
  copy.values = source.values;
  if (noise > 0.0) {
    for (auto& v : copy.values) v += static_cast<float>(noise) * gauss(rng);
  }
  return copy;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  // Separate streams so that, e.g., the training set does not change when
  // the database grows.
  std::seed_seq seq{spec.seed, std::uint64_t{0x5eed}};
  std::uint64_t seeds[4];
  {
    std::uint32_t raw[8];
    seq.generate(raw, raw + 8);
    for (int i = 0; i < 4; ++i) {
      seeds[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
    }
  }
  std::mt19937_64 model_rng(seeds[0]), train_rng(seeds[1]), query_rng(seeds[2]),
      db_rng(seeds[3]);
  const MixtureModel model(spec, model_rng);

  SyntheticData out;
  out.training.dim = out.database.dim = out.queries.dim = spec.dim;
  for (std::uint32_t i = 0; i < spec.training_images; ++i) {
    out.training.images.push_back(
        model.sample_image(i, spec.features_per_image, train_rng));
  }
  for (std::uint32_t q = 0; q < spec.n_queries; ++q) {
    out.queries.images.push_back(
        model.sample_image(q, spec.features_per_image, query_rng));
  }

  auto& db = out.database.images;
  db.reserve(spec.n_images);
  if (spec.query_in_db) {
    for (std::uint32_t q = 0; q < spec.n_queries; ++q) {
      db.push_back(perturb(out.queries.images[q], q, 0.0, db_rng));
      out.ground_truth[q].insert(q);
    }
  }
  for (std::uint32_t q = 0; q < spec.n_queries; ++q) {
    for (std::uint32_t d = 0; d < spec.duplicates_per_query; ++d) {
      const auto id = static_cast<ImageId>(db.size());
      db.push_back(perturb(out.queries.images[q], id, spec.noise, db_rng));
      out.ground_truth[q].insert(id);
    }
  }
  while (db.size() < spec.n_images) {
    db.push_back(model.sample_image(static_cast<ImageId>(db.size()),
                                    spec.features_per_image, db_rng));
  }
  return out;
}

}  // namespace vmerge
