#include "vmerge/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binary.hpp"
#include "vmerge/error.hpp"

namespace vmerge {

namespace {

constexpr std::string_view kDescriptorMagic = "BMV1";
constexpr std::string_view kVocabularyMagic = "BMVC";

void check_finite(const float* values, std::size_t n, std::size_t base_offset,
                  const std::string& where) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i])) {
      throw FormatError("non-finite value in " + where,
                        base_offset + i * sizeof(float));
    }
  }
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

ImageId parse_id(std::string_view token, std::size_t line) {
  ImageId value = 0;
  auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error("ground truth line " + std::to_string(line) +
                ": bad image id '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error("read failure on " + path.string());
  return std::move(buffer).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error("write failure on " + path.string());
}

std::string serialize_descriptors(const Corpus& corpus) {
  corpus.validate();
  detail::ByteWriter w;
  w.reserve(12 + corpus.images.size() * 8 +
            corpus.feature_count() * corpus.dim * sizeof(float));
  w.put_bytes(kDescriptorMagic);
  w.put<std::uint32_t>(corpus.dim);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(corpus.images.size()));
  for (const auto& image : corpus.images) {
    w.put<std::uint32_t>(image.image_id);
    w.put<std::uint32_t>(
        static_cast<std::uint32_t>(image.feature_count(corpus.dim)));
    w.put_floats(image.values.data(), image.values.size());
  }
  return w.take();
}

Corpus parse_descriptors(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kDescriptorMagic.size() ||
      r.get_bytes(kDescriptorMagic.size(), "magic") != kDescriptorMagic) {
    throw FormatError("bad magic", 0);
  }
  Corpus corpus;
  corpus.dim = r.get<std::uint32_t>("header");
  if (corpus.dim == 0) throw FormatError("zero descriptor dimension", 4);
  const auto count = r.get<std::uint32_t>("header");
  if (count == 0) throw FormatError("corpus has no images", 8);
  corpus.images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_offset = r.offset();
    if (r.remaining() < 8) {
      throw FormatError("truncated record for image " + std::to_string(i),
                        record_offset);
    }
    ImageRecord image;
    image.image_id = r.get<std::uint32_t>("image record");
    if (image.image_id != i) {
      throw FormatError("image ids must be dense: expected " +
                            std::to_string(i) + ", found " +
                            std::to_string(image.image_id),
                        record_offset);
    }
    const auto features = r.get<std::uint32_t>("image record");
    const std::size_t n = static_cast<std::size_t>(features) * corpus.dim;
    if (r.remaining() < n * sizeof(float)) {
      throw FormatError("truncated descriptors of image_id " +
                            std::to_string(image.image_id),
                        r.offset());
    }
    image.values.resize(n);
    const std::size_t payload = r.offset();
    r.get_floats(image.values.data(), n, "descriptors");
    check_finite(image.values.data(), n, payload,
                 "image_id " + std::to_string(image.image_id));
    corpus.images.push_back(std::move(image));
  }
  if (!r.at_end()) throw FormatError("trailing bytes", r.offset());
  return corpus;
}

void write_descriptors(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, serialize_descriptors(corpus));
}

Corpus read_descriptors(const std::filesystem::path& path) {
  try {
    return parse_descriptors(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string serialize_vocabulary(const Vocabulary& vocab) {
  vocab.validate();
  detail::ByteWriter w;
  w.put_bytes(kVocabularyMagic);
  w.put<std::uint32_t>(vocab.dim);
  w.put<std::uint32_t>(vocab.size());
  w.put<std::uint64_t>(vocab.seed);
  w.put_floats(vocab.centroids.data(), vocab.centroids.size());
  return w.take();
}

Vocabulary parse_vocabulary(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kVocabularyMagic.size() ||
      r.get_bytes(kVocabularyMagic.size(), "magic") != kVocabularyMagic) {
    throw FormatError("bad magic", 0);
  }
  Vocabulary vocab;
  vocab.dim = r.get<std::uint32_t>("header");
  const auto size = r.get<std::uint32_t>("header");
  vocab.seed = r.get<std::uint64_t>("header");
  if (vocab.dim == 0 || size == 0) {
    throw FormatError("vocabulary dim and size must be positive", 4);
  }
  const std::size_t n = static_cast<std::size_t>(size) * vocab.dim;
  vocab.centroids.resize(n);
  const std::size_t payload = r.offset();
  r.get_floats(vocab.centroids.data(), n, "centroids");
  check_finite(vocab.centroids.data(), n, payload, "centroids");
  if (!r.at_end()) throw FormatError("trailing bytes", r.offset());
  vocab.validate();
  return vocab;
}

void write_vocabulary(const Vocabulary& vocab,
                      const std::filesystem::path& path) {
  write_file(path, serialize_vocabulary(vocab));
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  try {
    return parse_vocabulary(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string format_ground_truth(const GroundTruth& gt) {
  std::string out;
  for (const auto& [query, relevant] : gt) {
    out += std::to_string(query);
    out += ':';
    for (ImageId id : relevant) {
      out += ' ';
      out += std::to_string(id);
    }
    out += '\n';
  }
  return out;
}

GroundTruth parse_ground_truth(std::string_view text) {
  GroundTruth gt;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto eol = text.find('\n');
    auto line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{}
                                         : text.substr(eol + 1);
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw Error("ground truth line " + std::to_string(line_no) +
                  ": missing ':'");
    }
    const ImageId query = parse_id(trim(line.substr(0, colon)), line_no);
    if (gt.contains(query)) {
      throw Error("ground truth line " + std::to_string(line_no) +
                  ": duplicate query " + std::to_string(query));
    }
    std::set<ImageId> relevant;
    auto rest = line.substr(colon + 1);
    while (true) {
      rest = trim(rest);
      if (rest.empty()) break;
      auto sp = rest.find_first_of(" \t");
      relevant.insert(parse_id(rest.substr(0, sp), line_no));
      if (sp == std::string_view::npos) break;
      rest = rest.substr(sp);
    }
    if (relevant.empty()) {
      throw Error("ground truth line " + std::to_string(line_no) +
                  ": query " + std::to_string(query) +
                  " has no relevant images");
    }
    gt.emplace(query, std::move(relevant));
  }
  return gt;
}

void write_ground_truth(const GroundTruth& gt,
                        const std::filesystem::path& path) {
  write_file(path, format_ground_truth(gt));
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_file(path));
}

}  // namespace vmerge
