#include "vmerge/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <numeric>

#include "vmerge/error.hpp"
#include "vmerge/io.hpp"
#include "vmerge/parallel.hpp"

namespace vmerge {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::B0: return "b0";
    case Method::B1: return "b1";
    case Method::B2: return "b2";
    case Method::Bayes: return "bayes";
    case Method::RankAggregation: return "ra";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "b0") return Method::B0;
  if (name == "b1") return Method::B1;
  if (name == "b2") return Method::B2;
  if (name == "bayes") return Method::Bayes;
  if (name == "ra") return Method::RankAggregation;
  throw Error("unknown method '" + std::string(name) + "'");
}

void ScoringMethod::validate(std::uint32_t vocabulary_count) const {
  if (vocabulary_count == 0 || vocabulary_count > kMaxVocabularies) {
    throw Error("index must hold between 1 and " +
                std::to_string(kMaxVocabularies) + " vocabularies");
  }
  if (method == Method::B0 && b0_vocabulary >= vocabulary_count) {
    throw Error("B0 vocabulary " + std::to_string(b0_vocabulary) +
                " out of range for K = " + std::to_string(vocabulary_count));
  }
  if (use_burstiness && method != Method::Bayes && method != Method::B1) {
    throw Error("burstiness weighting applies to bayes and b1 only");
  }
}

void sort_ranked(RankedResult& result) {
  std::sort(result.begin(), result.end(),
            [](const ScoredImage& a, const ScoredImage& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.image_id < b.image_id;
            });
}

int match_b0(WordId x_word, WordId y_word) { return x_word == y_word ? 1 : 0; }

int match_b1(std::span<const WordId> x_words, std::span<const WordId> y_words) {
  if (x_words.size() != y_words.size()) throw Error("word tuples differ in K");
  int n = 0;
  for (std::size_t k = 0; k < x_words.size(); ++k) n += match_b0(x_words[k], y_words[k]);
  return n;
}

int match_b2(std::span<const WordId> x_words, std::span<const WordId> y_words) {
  if (x_words.size() != y_words.size()) throw Error("word tuples differ in K");
  for (std::size_t k = 0; k < x_words.size(); ++k) {
    if (x_words[k] != y_words[k]) return 0;
  }
  return 1;
}

std::vector<QueryFeature> prepare_query(const ImageRecord& query,
                                        std::uint32_t dim,
                                        const IndexBundle& index) {
  const std::uint32_t K = index.vocabulary_count();
  if (index.quantizers.size() != K) {
    throw Error("index has no vocabularies attached");
  }
  if (K == 0 || K > kMaxVocabularies) throw Error("unsupported vocabulary count");
  if (dim != index.quantizers[0].dim()) {
    throw Error("query dimension " + std::to_string(dim) +
                " does not match index dimension " +
                std::to_string(index.quantizers[0].dim()));
  }
  std::vector<QueryFeature> features(query.feature_count(dim));
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto x = query.descriptor(f, dim);
    for (std::uint32_t k = 0; k < K; ++k) {
      features[f].words[k] = index.quantizers[k].nearest(x);
      if (index.has_signatures()) {
        features[f].signatures[k] =
            compute_signature(x, features[f].words[k], index.hamming[k]).bits;
      }
    }
  }
  return features;
}

namespace {

struct PendingVote {
  ImageId image_id;
  ListMask mask;
  bool pass;
};

// Per-query accumulation state, sized once per query.
class Accumulator {
 public:
  explicit Accumulator(std::uint32_t image_count)
      : scores_(image_count, 0.0), touched_(image_count, 0) {}

  void add(ImageId image, double value) {
    scores_[image] += value;
    touched_[image] = 1;
  }

  double* scores() { return scores_.data(); }
  std::uint32_t* touched() { return touched_.data(); }

  RankedResult finish(const std::vector<float>& norms) const {
    RankedResult out;
    for (std::size_t id = 0; id < scores_.size(); ++id) {
      if (touched_[id]) {
        out.push_back({static_cast<ImageId>(id),
                       scores_[id] / static_cast<double>(norms[id])});
      }
    }
    sort_ranked(out);
    return out;
  }

 private:
  std::vector<double> scores_;
  std::vector<std::uint32_t> touched_;
};

// One list only: B0 ignores the other vocabularies entirely.
template <bool kHamming>
void sweep_single(std::span<const FeatureRef> list, const std::uint64_t* sigs,
                  std::uint64_t query_sig, std::uint32_t he_threshold, double vote,
                  Accumulator& acc) {
  double* const scores = acc.scores();
  std::uint32_t* const touched = acc.touched();
  for (std::size_t i = 0; i < list.size(); ++i) {
    if constexpr (kHamming) {
      if (static_cast<std::uint32_t>(std::popcount(sigs[i] ^ query_sig)) >= he_threshold) {
        continue;
      }
    }
    scores[list[i].image_id] += vote;
    touched[list[i].image_id] = 1;
  }
}

// Multi-list sweep. Difference-set members vote immediately; every
// intersection member is buffered with its Hamming outcome, so the caller
// can count exact memberships and weigh the buffered votes afterwards.
struct SweepState {
  std::uint32_t K = 0;
  ListMask full = 0;
  bool b2 = false;
  std::uint32_t he_threshold = 0;
  Accumulator* acc = nullptr;
  PendingVote* pending = nullptr;
  std::size_t pending_count = 0;
  const double* vote = nullptr;
  const std::uint64_t* const* sigs = nullptr;
  const std::uint64_t* query_sigs = nullptr;

  // Burstiness run for the image currently under the sweep.
  ImageId run_image = 0;
  bool run_open = false;
  std::array<std::uint32_t, kMaxVocabularies> run_matches{};
  std::array<double, kMaxVocabularies> run_difference{};
  ListMask run_difference_lists = 0;

  void flush_run() {
    if (!run_open) return;
    for (std::uint32_t k = 0; k < K; ++k) {
      if (run_difference_lists >> k & 1u) {
        acc->add(run_image, run_difference[k] / std::sqrt(static_cast<double>(run_matches[k])));
      }
      run_matches[k] = 0;
      run_difference[k] = 0.0;
    }
    run_difference_lists = 0;
    run_open = false;
  }

  template <bool kHamming, bool kBurst>
  void sweep(std::span<const std::span<const FeatureRef>> lists) {
    double* const scores = acc->scores();
    std::uint32_t* const touched = acc->touched();
    PendingVote* const buf = pending;
    const double* const votes = vote;
    const bool direct_votes = !b2;
    const std::uint32_t k_count = K;
    const std::uint32_t threshold = he_threshold;
    std::size_t n = 0;
    auto visit = [&](FeatureRef ref, ListMask mask, const std::uint32_t* pos) {
      const bool difference = (mask & (mask - 1)) == 0;
      bool pass = true;
      if constexpr (kHamming) {
        pass = false;
        for (std::uint32_t k = 0; k < k_count && !pass; ++k) {
          if (mask >> k & 1u) {
            pass = static_cast<std::uint32_t>(
                       std::popcount(sigs[k][pos[k]] ^ query_sigs[k])) < threshold;
          }
        }
      }
      buf[n] = {ref.image_id, mask, pass};
      n += !difference;
      if constexpr (kBurst) {
        if (!pass) return;
        if (!run_open || run_image != ref.image_id) {
          flush_run();
          run_image = ref.image_id;
          run_open = true;
        }
        for (std::uint32_t k = 0; k < k_count; ++k) {
          if (mask >> k & 1u) ++run_matches[k];
        }
        if (difference) {
          run_difference[std::countr_zero(mask)] += votes[mask];
          run_difference_lists |= mask;
        }
      } else {
        const bool direct = difference & pass & direct_votes;
        scores[ref.image_id] += direct ? votes[mask] : 0.0;
        touched[ref.image_id] |= static_cast<std::uint32_t>(direct);
      }
    };
    if constexpr (kBurst) {
      sweep_union<false>(lists, visit);
      flush_run();
    } else if (lists.size() == 2) {
      detail::sweep_two_interleaved<4>(lists[0], lists[1], visit);
    } else {
      sweep_union<false>(lists, visit);
    }
    pending_count = n;
  }
};

}  // namespace

RankedResult score_prepared(std::span<const QueryFeature> features,
                            const IndexBundle& index,
                            const ScoringMethod& method,
                            const MergeConfig& cfg) {
  const std::uint32_t K = index.vocabulary_count();
  method.validate(K);
  if (method.use_hamming && !index.has_signatures()) {
    throw Error("hamming filtering requested but the index has no signatures");
  }
  if (method.method == Method::RankAggregation) {
    std::vector<RankedResult> per_vocab;
    for (std::uint32_t k = 0; k < K; ++k) {
      ScoringMethod single = method;
      single.method = Method::B0;
      single.b0_vocabulary = k;
      per_vocab.push_back(score_prepared(features, index, single, cfg));
    }
    return rank_aggregate(per_vocab, index.image_count);
  }

  MergeConfig effective = cfg;
  if (effective.image_count == 0) effective.image_count = index.image_count;
  if (method.method == Method::Bayes && !effective.force_unit_weight) {
    effective.validate();
  }

  const std::size_t masks = std::size_t{1} << K;
  const ListMask full = static_cast<ListMask>(masks - 1);
  const bool b0 = method.method == Method::B0;

  Accumulator acc(index.image_count);
  std::vector<PendingVote> pending;
  std::vector<std::size_t> exact_counts(masks);
  std::vector<double> idf_weight(masks), vote(masks);
  std::array<std::span<const FeatureRef>, kMaxVocabularies> lists;
  std::array<const std::uint64_t*, kMaxVocabularies> sigs{};

  SweepState state;
  state.K = K;
  state.full = full;
  state.b2 = method.method == Method::B2;
  state.he_threshold = effective.he_threshold;
  state.acc = &acc;
  state.vote = vote.data();
  state.sigs = sigs.data();

  for (const auto& qf : features) {
    std::size_t total = 0;
    for (std::uint32_t k = 0; k < K; ++k) {
      const auto& list = index.inverted_files[k].postings.at(qf.words[k]);
      lists[k] = list.features;
      sigs[k] = list.signatures.empty() ? nullptr : list.signatures.data();
      total += list.size();
    }
    std::array<double, kMaxVocabularies> idf2{};
    for (std::uint32_t k = 0; k < K; ++k) {
      const double idf = index.inverted_files[k].idf[qf.words[k]];
      idf2[k] = idf * idf;
    }

    if (b0) {
      const std::uint32_t k0 = method.b0_vocabulary;
      if (method.use_hamming) {
        sweep_single<true>(lists[k0], sigs[k0], qf.signatures[k0], effective.he_threshold,
                           idf2[k0], acc);
      } else {
        sweep_single<false>(lists[k0], nullptr, 0, 0, idf2[k0], acc);
      }
      continue;
    }

    for (std::size_t m = 1; m < masks; ++m) {
      double sum = 0.0;
      for (std::uint32_t k = 0; k < K; ++k) {
        if (m >> k & 1u) sum += idf2[k];
      }
      idf_weight[m] = sum / std::popcount(m);
      if (method.method == Method::B2) {
        vote[m] = m == full ? idf_weight[m] : 0.0;
      } else {
        vote[m] = std::popcount(m) * idf_weight[m];
      }
    }
    if (pending.size() < total) pending.resize(total);
    state.pending = pending.data();
    state.query_sigs = qf.signatures.data();

    const std::span<const std::span<const FeatureRef>> view(lists.data(), K);
    if (method.use_hamming) {
      if (method.use_burstiness) {
        state.sweep<true, true>(view);
      } else {
        state.sweep<true, false>(view);
      }
    } else if (method.use_burstiness) {
      state.sweep<false, true>(view);
    } else {
      state.sweep<false, false>(view);
    }
    const std::span<const PendingVote> buffered(pending.data(), state.pending_count);

    if (method.method == Method::Bayes && !effective.force_unit_weight) {
      // Exact membership counts: intersections from the buffer, single-list
      // members by subtraction from the list lengths.
      std::fill(exact_counts.begin(), exact_counts.end(), 0);
      for (const auto& p : buffered) ++exact_counts[p.mask];
      for (std::uint32_t k = 0; k < K; ++k) {
        std::size_t shared = 0;
        for (std::size_t m = 1; m < masks; ++m) {
          if ((m >> k & 1u) && std::popcount(m) >= 2) shared += exact_counts[m];
        }
        exact_counts[std::size_t{1} << k] = lists[k].size() - shared;
      }
      const auto cards = subset_cardinalities(exact_counts, K);
      for (std::size_t m = 1; m < masks; ++m) {
        if (std::popcount(m) < 2 || exact_counts[m] == 0) continue;
        const double w = bayes_weight(cards.intersection[m], cards.union_size[m], effective);
        vote[m] = std::popcount(m) * w * idf_weight[m];
      }
    }
    const bool b2 = method.method == Method::B2;
    for (const auto& p : buffered) {
      if (p.pass && (!b2 || p.mask == full)) acc.add(p.image_id, vote[p.mask]);
    }
  }
  return acc.finish(index.image_norms);
}

RankedResult score_query(const ImageRecord& query, std::uint32_t dim,
                         const IndexBundle& index, const ScoringMethod& method,
                         const MergeConfig& cfg) {
  const auto features = prepare_query(query, dim, index);
  return score_prepared(features, index, method, cfg);
}

RankedResult rank_aggregate(std::span<const RankedResult> per_vocabulary,
                            std::size_t universe_size) {
  if (per_vocabulary.empty()) throw Error("rank aggregation needs at least one ranking");
  const std::size_t K = per_vocabulary.size();
  const double missing = static_cast<double>(universe_size) + 1.0;
  std::map<ImageId, std::vector<double>> ranks;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t pos = 0; pos < per_vocabulary[k].size(); ++pos) {
      auto& r = ranks[per_vocabulary[k][pos].image_id];
      r.resize(K, missing);
      r[k] = static_cast<double>(pos + 1);
    }
  }
  struct Fused {
    ImageId id;
    double median;
    double mean;
  };
  std::vector<Fused> fused;
  fused.reserve(ranks.size());
  for (auto& [id, r] : ranks) {
    r.resize(K, missing);
    std::sort(r.begin(), r.end());
    const double median =
        K % 2 == 1 ? r[K / 2] : 0.5 * (r[K / 2 - 1] + r[K / 2]);
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(K);
    fused.push_back({id, median, mean});
  }
  std::sort(fused.begin(), fused.end(), [](const Fused& a, const Fused& b) {
    if (a.median != b.median) return a.median < b.median;
    if (a.mean != b.mean) return a.mean < b.mean;
    return a.id < b.id;
  });
  RankedResult out;
  out.reserve(fused.size());
  for (std::size_t pos = 0; pos < fused.size(); ++pos) {
    out.push_back({fused[pos].id,
                   static_cast<double>(universe_size) - static_cast<double>(pos)});
  }
  return out;
}

namespace {

void append_double(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, ptr);
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

std::string format_results(const ResultSet& results, std::size_t topk) {
  std::string out;
  for (const auto& [query, ranked] : results) {
    out += std::to_string(query);
    out += ':';
    const std::size_t n = topk == 0 ? ranked.size() : std::min(topk, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
      out += ' ';
      out += std::to_string(ranked[i].image_id);
      out += ' ';
      append_double(out, ranked[i].score);
    }
    out += '\n';
  }
  return out;
}

ResultSet parse_results(std::string_view text) {
  ResultSet results;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    auto line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    auto fail = [&](const std::string& what) {
      return Error("results line " + std::to_string(line_no) + ": " + what);
    };
    if (colon == std::string_view::npos) throw fail("missing ':'");
    ImageId query = 0;
    const auto head = trim(line.substr(0, colon));
    if (auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), query);
        ec != std::errc() || p != head.data() + head.size()) {
      throw fail("bad query id");
    }
    RankedResult ranked;
    auto rest = line.substr(colon + 1);
    std::vector<std::string_view> tokens;
    while (true) {
      rest = trim(rest);
      if (rest.empty()) break;
      const auto sp = rest.find_first_of(" \t");
      tokens.push_back(rest.substr(0, sp));
      if (sp == std::string_view::npos) break;
      rest = rest.substr(sp);
    }
    if (tokens.size() % 2 != 0) throw fail("odd number of tokens");
    for (std::size_t i = 0; i < tokens.size(); i += 2) {
      ScoredImage entry;
      auto id = tokens[i];
      auto sc = tokens[i + 1];
      if (auto [p, ec] = std::from_chars(id.data(), id.data() + id.size(), entry.image_id);
          ec != std::errc() || p != id.data() + id.size()) {
        throw fail("bad image id");
      }
      if (auto [p, ec] = std::from_chars(sc.data(), sc.data() + sc.size(), entry.score);
          ec != std::errc() || p != sc.data() + sc.size() || !std::isfinite(entry.score)) {
        throw fail("bad score");
      }
      ranked.push_back(entry);
    }
    if (!results.emplace(query, std::move(ranked)).second) {
      throw fail("duplicate query " + std::to_string(query));
    }
  }
  return results;
}

void write_results(const ResultSet& results, std::size_t topk,
                   const std::filesystem::path& path) {
  write_file(path, format_results(results, topk));
}

ResultSet read_results(const std::filesystem::path& path) {
  return parse_results(read_file(path));
}

ResultSet run_queries(const Corpus& queries, const IndexBundle& index,
                      const ScoringMethod& method, const MergeConfig& cfg,
                      unsigned threads) {
  std::vector<RankedResult> ranked(queries.image_count());
  parallel_for(queries.image_count(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t q = begin; q < end; ++q) {
                   ranked[q] = score_query(queries.images[q], queries.dim,
                                           index, method, cfg);
                 }
               });
  ResultSet out;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    out.emplace(queries.images[q].image_id, std::move(ranked[q]));
  }
  return out;
}

}  // namespace vmerge
