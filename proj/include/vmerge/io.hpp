#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "vmerge/core.hpp"

namespace vmerge {

/// Relevant database images per query image.
using GroundTruth = std::map<ImageId, std::set<ImageId>>;

// Descriptor file: "BMV1" | u32 dim | u32 image_count |
//   per image: u32 image_id | u32 feature_count | feature_count*dim f32.
// Vocabulary file: "BMVC" | u32 dim | u32 size | u64 seed | size*dim f32.
// All integers and floats little-endian.

std::string serialize_descriptors(const Corpus& corpus);
Corpus parse_descriptors(std::string_view bytes);
void write_descriptors(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_descriptors(const std::filesystem::path& path);

std::string serialize_vocabulary(const Vocabulary& vocab);
Vocabulary parse_vocabulary(std::string_view bytes);
void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary read_vocabulary(const std::filesystem::path& path);

/// One line per query: "query_id: relevant_id relevant_id ...".
std::string format_ground_truth(const GroundTruth& gt);
GroundTruth parse_ground_truth(std::string_view text);
void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace vmerge
