#include "vmerge/index.hpp"

#include <cmath>
#include <string>

#include "binary.hpp"
#include "vmerge/error.hpp"
#include "vmerge/io.hpp"
#include "vmerge/parallel.hpp"

namespace vmerge {

namespace {

constexpr std::string_view kIndexMagic = "BMIX";
constexpr std::string_view kHammingMagic = "BMHE";

void check_vocabularies(const std::vector<Vocabulary>& vocabularies,
                        std::uint32_t dim) {
  if (vocabularies.empty()) throw Error("at least one vocabulary is required");
  for (std::size_t k = 0; k < vocabularies.size(); ++k) {
    vocabularies[k].validate();
    if (vocabularies[k].dim != dim) {
      throw Error("vocabulary " + std::to_string(k) + " has dimension " +
                  std::to_string(vocabularies[k].dim) + ", expected " +
                  std::to_string(dim));
    }
  }
}

std::vector<float> compute_image_norms(
    const std::vector<InvertedFile>& files, std::uint32_t image_count) {
  std::vector<double> total(image_count, 0.0);
  for (const auto& file : files) {
    std::vector<double> sq(image_count, 0.0);
    for (std::size_t w = 0; w < file.postings.size(); ++w) {
      const auto& features = file.postings[w].features;
      for (std::size_t i = 0; i < features.size();) {
        std::size_t j = i;
        while (j < features.size() &&
               features[j].image_id == features[i].image_id) {
          ++j;
        }
        const double weighted = static_cast<double>(j - i) * file.idf[w];
        sq[features[i].image_id] += weighted * weighted;
        i = j;
      }
    }
    for (std::uint32_t i = 0; i < image_count; ++i) total[i] += std::sqrt(sq[i]);
  }
  std::vector<float> norms(image_count);
  for (std::uint32_t i = 0; i < image_count; ++i) {
    const double mean = total[i] / static_cast<double>(files.size());
    // A zero norm (no features, or only zero-idf words) leaves scores as is.
    norms[i] = mean > 0.0 ? static_cast<float>(mean) : 1.0f;
  }
  return norms;
}

}  // namespace

std::size_t InvertedFile::entry_count() const {
  std::size_t total = 0;
  for (const auto& list : postings) total += list.size();
  return total;
}

std::vector<double> compute_idf(const std::vector<PostingList>& postings,
                                std::uint32_t image_count) {
  std::vector<double> idf(postings.size(), 0.0);
  for (std::size_t w = 0; w < postings.size(); ++w) {
    const auto& features = postings[w].features;
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (i == 0 || features[i].image_id != features[i - 1].image_id) {
        ++distinct;
      }
    }
    if (distinct > 0) {
      idf[w] = std::log(static_cast<double>(image_count) /
                        static_cast<double>(distinct));
    }
  }
  return idf;
}

IndexBundle build_index(const Corpus& db, std::vector<Vocabulary> vocabularies,
                        std::vector<HammingParams> hamming, unsigned threads) {
  db.validate();
  check_vocabularies(vocabularies, db.dim);
  const std::size_t K = vocabularies.size();
  if (!hamming.empty()) {
    if (hamming.size() != K) {
      throw Error("expected one hamming parameter set per vocabulary");
    }
    for (std::size_t k = 0; k < K; ++k) {
      hamming[k].validate();
      if (hamming[k].vocabulary_size() != vocabularies[k].size() ||
          hamming[k].dim != db.dim) {
        throw Error("hamming parameters " + std::to_string(k) +
                    " do not match vocabulary " + std::to_string(k));
      }
    }
  }

  IndexBundle index;
  index.image_count = static_cast<std::uint32_t>(db.image_count());
  for (const auto& v : vocabularies) index.quantizers.emplace_back(v);

  // Quantize every feature once per vocabulary; workers own whole images.
  std::vector<std::size_t> first_feature(db.image_count() + 1, 0);
  for (std::size_t i = 0; i < db.image_count(); ++i) {
    first_feature[i + 1] = first_feature[i] + db.images[i].feature_count(db.dim);
  }
  const std::size_t total = first_feature.back();
  std::vector<WordId> words(total * K);
  std::vector<std::uint64_t> signatures(hamming.empty() ? 0 : total * K);
  parallel_for(db.image_count(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& image = db.images[i];
      for (std::size_t f = 0; f < image.feature_count(db.dim); ++f) {
        const auto x = image.descriptor(f, db.dim);
        const std::size_t slot = (first_feature[i] + f) * K;
        for (std::size_t k = 0; k < K; ++k) {
          words[slot + k] = index.quantizers[k].nearest(x);
          if (!hamming.empty()) {
            signatures[slot + k] =
                compute_signature(x, words[slot + k], hamming[k]).bits;
          }
        }
      }
    }
  });

  // Images are visited in id order, so every posting list comes out sorted.
  for (std::size_t k = 0; k < K; ++k) {
    InvertedFile file;
    file.vocabulary_id = static_cast<std::uint32_t>(k);
    file.postings.resize(vocabularies[k].size());
    for (std::size_t i = 0; i < db.image_count(); ++i) {
      for (std::size_t f = 0; f < db.images[i].feature_count(db.dim); ++f) {
        const std::size_t slot = (first_feature[i] + f) * K + k;
        auto& list = file.postings[words[slot]];
        list.features.push_back(
            {static_cast<ImageId>(i), static_cast<FeatureId>(f)});
        if (!hamming.empty()) list.signatures.push_back(signatures[slot]);
      }
    }
    file.idf = compute_idf(file.postings, index.image_count);
    index.inverted_files.push_back(std::move(file));
  }
  index.image_norms = compute_image_norms(index.inverted_files, index.image_count);
  index.vocabularies = std::move(vocabularies);
  index.hamming = std::move(hamming);
  return index;
}

void attach_vocabularies(IndexBundle& index,
                         std::vector<Vocabulary> vocabularies) {
  if (vocabularies.size() != index.inverted_files.size()) {
    throw Error("index has " + std::to_string(index.inverted_files.size()) +
                " inverted files but " + std::to_string(vocabularies.size()) +
                " vocabularies were given");
  }
  for (std::size_t k = 0; k < vocabularies.size(); ++k) {
    vocabularies[k].validate();
    if (vocabularies[k].size() != index.inverted_files[k].postings.size()) {
      throw Error("vocabulary " + std::to_string(k) + " has " +
                  std::to_string(vocabularies[k].size()) +
                  " words but inverted file " + std::to_string(k) + " has " +
                  std::to_string(index.inverted_files[k].postings.size()));
    }
    if (vocabularies[k].dim != vocabularies[0].dim) {
      throw Error("vocabularies disagree on descriptor dimension");
    }
  }
  for (std::size_t k = 0; k < index.hamming.size(); ++k) {
    if (index.hamming[k].vocabulary_size() != vocabularies[k].size() ||
        index.hamming[k].dim != vocabularies[k].dim) {
      throw Error("hamming parameters " + std::to_string(k) +
                  " do not match vocabulary " + std::to_string(k));
    }
  }
  index.quantizers.clear();
  for (const auto& v : vocabularies) index.quantizers.emplace_back(v);
  index.vocabularies = std::move(vocabularies);
}

std::string serialize_index(const IndexBundle& index) {
  const bool with_sigs = index.has_signatures();
  detail::ByteWriter w;
  w.put_bytes(kIndexMagic);
  w.put<std::uint8_t>(with_sigs ? 1 : 0);
  w.put<std::uint32_t>(index.vocabulary_count());
  w.put<std::uint32_t>(index.image_count);
  for (const auto& file : index.inverted_files) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.postings.size()));
    for (const auto& list : file.postings) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
      for (std::size_t e = 0; e < list.size(); ++e) {
        w.put<std::uint32_t>(list.features[e].image_id);
        w.put<std::uint32_t>(list.features[e].feature_id);
        if (with_sigs) w.put<std::uint64_t>(list.signatures[e]);
      }
    }
  }
  w.put_floats(index.image_norms.data(), index.image_norms.size());
  return w.take();
}

IndexBundle parse_index(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kIndexMagic.size() ||
      r.get_bytes(kIndexMagic.size(), "magic") != kIndexMagic) {
    throw FormatError("bad magic", 0);
  }
  const auto flag = r.get<std::uint8_t>("header");
  if (flag > 1) throw FormatError("bad signature flag", 4);
  const bool with_sigs = flag == 1;
  const auto K = r.get<std::uint32_t>("header");
  const auto N = r.get<std::uint32_t>("header");
  if (K == 0 || N == 0) throw FormatError("K and N must be positive", 5);

  IndexBundle index;
  index.image_count = N;
  std::size_t expected_entries = 0;
  for (std::uint32_t k = 0; k < K; ++k) {
    InvertedFile file;
    file.vocabulary_id = k;
    const auto size = r.get<std::uint32_t>("inverted file header");
    if (size == 0) throw FormatError("empty vocabulary", r.offset() - 4);
    file.postings.resize(size);
    for (auto& list : file.postings) {
      const auto count = r.get<std::uint32_t>("posting list header");
      r.require(static_cast<std::size_t>(count) * (with_sigs ? 16 : 8),
                "posting list");
      list.features.resize(count);
      if (with_sigs) list.signatures.resize(count);
      for (std::uint32_t e = 0; e < count; ++e) {
        const std::size_t at = r.offset();
        FeatureRef ref;
        ref.image_id = r.get<std::uint32_t>("posting entry");
        ref.feature_id = r.get<std::uint32_t>("posting entry");
        if (ref.image_id >= N) throw FormatError("image id out of range", at);
        if (e > 0 && !(list.features[e - 1] < ref)) {
          throw FormatError("posting list not sorted or has duplicates", at);
        }
        list.features[e] = ref;
        if (with_sigs) list.signatures[e] = r.get<std::uint64_t>("signature");
      }
    }
    const std::size_t entries = file.entry_count();
    if (k == 0) {
      expected_entries = entries;
    } else if (entries != expected_entries) {
      throw FormatError("inverted files index different feature counts",
                        r.offset());
    }
    file.idf = compute_idf(file.postings, N);
    index.inverted_files.push_back(std::move(file));
  }
  index.image_norms.resize(N);
  r.get_floats(index.image_norms.data(), N, "image norms");
  if (!r.at_end()) throw FormatError("trailing bytes", r.offset());
  if (with_sigs) {
    // Placeholder until the sidecar is loaded; has_signatures() must hold.
    index.hamming.resize(K);
  }
  return index;
}

void write_index(const IndexBundle& index, const std::filesystem::path& path) {
  write_file(path, serialize_index(index));
  if (index.has_signatures()) {
    write_file(hamming_sidecar(path), serialize_hamming(index.hamming));
  }
}

IndexBundle read_index(const std::filesystem::path& path) {
  IndexBundle index;
  try {
    index = parse_index(read_file(path));
    if (index.has_signatures()) {
      index.hamming = parse_hamming(read_file(hamming_sidecar(path)));
      if (index.hamming.size() != index.vocabulary_count()) {
        throw Error("hamming sidecar has wrong vocabulary count");
      }
      for (std::size_t k = 0; k < index.hamming.size(); ++k) {
        if (index.hamming[k].vocabulary_size() !=
            index.inverted_files[k].postings.size()) {
          throw Error("hamming sidecar does not match inverted file " +
                      std::to_string(k));
        }
      }
    }
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
  return index;
}

std::filesystem::path hamming_sidecar(const std::filesystem::path& index_path) {
  auto p = index_path;
  p += ".he";
  return p;
}

// "BMHE" | u32 K | u32 bits | u64 projection_seed | u32 dim |
//   bits x dim f32 projection | per vocabulary: u32 size, size x bits f32.
std::string serialize_hamming(const std::vector<HammingParams>& params) {
  if (params.empty()) throw Error("no hamming parameters to serialize");
  detail::ByteWriter w;
  w.put_bytes(kHammingMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  w.put<std::uint32_t>(params[0].bits);
  w.put<std::uint64_t>(params[0].projection_seed);
  w.put<std::uint32_t>(params[0].dim);
  w.put_floats(params[0].projection.data(), params[0].projection.size());
  for (const auto& p : params) {
    if (p.bits != params[0].bits || p.dim != params[0].dim ||
        p.projection != params[0].projection) {
      throw Error("hamming parameters must share one projection");
    }
    w.put<std::uint32_t>(p.vocabulary_size());
    w.put_floats(p.thresholds.data(), p.thresholds.size());
  }
  return w.take();
}

std::vector<HammingParams> parse_hamming(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kHammingMagic.size() ||
      r.get_bytes(kHammingMagic.size(), "magic") != kHammingMagic) {
    throw FormatError("bad magic", 0);
  }
  const auto K = r.get<std::uint32_t>("header");
  HammingParams shared;
  shared.bits = r.get<std::uint32_t>("header");
  shared.projection_seed = r.get<std::uint64_t>("header");
  shared.dim = r.get<std::uint32_t>("header");
  if (K == 0 || shared.bits == 0 || shared.bits > 64 || shared.dim == 0) {
    throw FormatError("bad hamming header", 4);
  }
  shared.projection.resize(static_cast<std::size_t>(shared.bits) * shared.dim);
  r.get_floats(shared.projection.data(), shared.projection.size(), "projection");
  std::vector<HammingParams> params;
  for (std::uint32_t k = 0; k < K; ++k) {
    HammingParams p = shared;
    const auto size = r.get<std::uint32_t>("threshold header");
    p.thresholds.resize(static_cast<std::size_t>(size) * p.bits);
    r.get_floats(p.thresholds.data(), p.thresholds.size(), "thresholds");
    p.validate();
    params.push_back(std::move(p));
  }
  if (!r.at_end()) throw FormatError("trailing bytes", r.offset());
  return params;
}

}  // namespace vmerge
