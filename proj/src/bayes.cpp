#include "vmerge/bayes.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

#include "vmerge/io.hpp"

namespace vmerge {

void MergeConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("c must be positive");
  if (!(term2_slope >= 0.0)) throw Error("term-2 slope must be non-negative");
  if (!(term2_intercept > 0.0)) throw Error("term-2 intercept must be positive");
  if (term2_slope + term2_intercept > 1.0 + 1e-12) {
    throw Error("term-2 line must stay within [0, 1] (a + b <= 1)");
  }
}

std::string format_merge_config(const MergeConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "c = " << cfg.c << '\n'
      << "a = " << cfg.term2_slope << '\n'
      << "b = " << cfg.term2_intercept << '\n';
  if (cfg.image_count != 0) out << "N = " << cfg.image_count << '\n';
  out << "he_threshold = " << cfg.he_threshold << '\n';
  return out.str();
}

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <class T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("config: bad value for '" + std::string(key) + "': '" +
                std::string(text) + "'");
  }
  return value;
}

}  // namespace

MergeConfig parse_merge_config(std::string_view text, MergeConfig cfg) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    auto line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "c") {
      cfg.c = parse_number<double>(value, key);
    } else if (key == "a") {
      cfg.term2_slope = parse_number<double>(value, key);
    } else if (key == "b") {
      cfg.term2_intercept = parse_number<double>(value, key);
    } else if (key == "N") {
      cfg.image_count = parse_number<std::uint32_t>(value, key);
    } else if (key == "he_threshold") {
      cfg.he_threshold = parse_number<std::uint32_t>(value, key);
    } else {
      throw Error("config line " + std::to_string(line_no) + ": unknown key '" +
                  std::string(key) + "'");
    }
  }
  return cfg;
}

MergeConfig read_merge_config(const std::filesystem::path& path,
                              MergeConfig base) {
  return parse_merge_config(read_file(path), base);
}

double term1(std::size_t inter_card, std::size_t union_card) {
  if (union_card == 0) throw Error("term1: empty union");
  if (inter_card > union_card) throw Error("term1: intersection exceeds union");
  return static_cast<double>(inter_card) / static_cast<double>(union_card);
}

double term2(double ratio, const MergeConfig& cfg) {
  const double line = cfg.term2_slope * ratio + cfg.term2_intercept;
  return std::clamp(line, kTerm2Floor, 1.0);
}

double term3(std::uint64_t image_count, double c) {
  const double prior = static_cast<double>(image_count) * c;
  if (image_count == 0 || !(prior >= 1.0)) {
    throw Error("term3: N * c must be at least 1");
  }
  return std::log(prior);
}

double bayes_weight(std::size_t inter_card, std::size_t union_card,
                    const MergeConfig& cfg) {
  const double t1 = term1(inter_card, union_card);
  const double t3 = term3(cfg.image_count, cfg.c);
  if (t1 == 0.0) return 1.0;
  return 1.0 / (1.0 + t1 / term2(t1, cfg) * t3);
}

SubsetCardinalities subset_cardinalities(
    std::span<const std::size_t> exact_counts, std::size_t list_count) {
  const std::size_t masks = std::size_t{1} << list_count;
  if (exact_counts.size() != masks) {
    throw Error("exact membership counts must have 2^K entries");
  }
  // Superset sums give intersections; subset sums of the complement give
  // everything outside a union.
  std::vector<std::size_t> superset(exact_counts.begin(), exact_counts.end());
  std::vector<std::size_t> subset(exact_counts.begin(), exact_counts.end());
  for (std::size_t bit = 0; bit < list_count; ++bit) {
    for (std::size_t m = 0; m < masks; ++m) {
      if (m >> bit & 1u) {
        subset[m] += subset[m ^ (std::size_t{1} << bit)];
      } else {
        superset[m] += superset[m | (std::size_t{1} << bit)];
      }
    }
  }
  SubsetCardinalities out;
  out.list_count = list_count;
  out.intersection = std::move(superset);
  out.union_size.resize(masks);
  const std::size_t total = subset[masks - 1];
  for (std::size_t m = 0; m < masks; ++m) {
    out.union_size[m] = total - subset[(masks - 1) ^ m];
  }
  return out;
}

double SetDecomposition::ratio(ListMask subset) const {
  return term1(strict_intersection_card(subset), union_card(subset));
}

std::size_t SetDecomposition::difference_size() const {
  std::size_t n = 0;
  for (std::size_t m = 1; m < exact_counts.size(); ++m) {
    if (std::popcount(m) == 1) n += exact_counts[m];
  }
  return n;
}

std::size_t SetDecomposition::total() const {
  std::size_t n = 0;
  for (auto c : exact_counts) n += c;
  return n;
}

SetDecomposition decompose(std::span<const std::span<const FeatureRef>> lists) {
  SetDecomposition out;
  out.list_count = lists.size();
  const std::size_t masks = std::size_t{1} << std::min(lists.size(), kMaxVocabularies);
  out.exact_counts.assign(masks, 0);
  out.members.resize(masks);
  sweep_union(lists, [&](FeatureRef ref, ListMask mask, const std::uint32_t*) {
    ++out.exact_counts[mask];
    out.members[mask].push_back(ref);
  });
  out.cardinalities = subset_cardinalities(out.exact_counts, lists.size());
  return out;
}

}  // namespace vmerge
