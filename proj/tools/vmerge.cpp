// Command-line driver: synthetic data, vocabulary training, indexing,
// querying, evaluation, term-2 calibration and ratio histograms.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vmerge/bayes.hpp"
#include "vmerge/error.hpp"
#include "vmerge/eval.hpp"
#include "vmerge/hamming.hpp"
#include "vmerge/index.hpp"
#include "vmerge/io.hpp"
#include "vmerge/retrieval.hpp"
#include "vmerge/synthetic.hpp"
#include "vmerge/vocab.hpp"

namespace fs = std::filesystem;
using namespace vmerge;

namespace {

void log_line(const std::string& msg) { std::cerr << "vmerge: " << msg << '\n'; }

void require_files(const std::vector<std::string>& paths) {
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw Error("missing input file " + p);
  }
}

std::vector<Vocabulary> load_vocabularies(const std::vector<std::string>& paths) {
  std::vector<Vocabulary> vocabs;
  for (const auto& p : paths) vocabs.push_back(read_vocabulary(p));
  return vocabs;
}

// Key=value sidecar written next to a results file.
struct RunInfo {
  std::string method;
  std::uint32_t k = 0;
  std::uint32_t vocab_size = 0;
  double query_time_ms_mean = 0.0;
};

fs::path info_path(const fs::path& results) {
  auto p = results;
  p += ".info";
  return p;
}

void write_info(const RunInfo& info, const fs::path& results) {
  std::ostringstream out;
  out << "method = " << info.method << "\nK = " << info.k
      << "\nvocab_size = " << info.vocab_size
      << "\nquery_time_ms_mean = " << info.query_time_ms_mean << '\n';
  write_file(info_path(results), out.str());
}

RunInfo read_info(const fs::path& results) {
  RunInfo info;
  if (!fs::exists(info_path(results))) return info;
  std::istringstream in(read_file(info_path(results)));
  std::string key, eq, value;
  while (in >> key >> eq >> value) {
    if (key == "method") info.method = value;
    else if (key == "K") info.k = static_cast<std::uint32_t>(std::stoul(value));
    else if (key == "vocab_size") info.vocab_size = static_cast<std::uint32_t>(std::stoul(value));
    else if (key == "query_time_ms_mean") info.query_time_ms_mean = std::stod(value);
  }
  return info;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-vocabulary bag-of-words retrieval with Bayes merging"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic benchmark");
  SyntheticSpec spec;
  std::string gen_out = ".";
  gen->add_option("--images", spec.n_images, "Database images")->capture_default_str();
  gen->add_option("--queries", spec.n_queries, "Query images")->capture_default_str();
  gen->add_option("--features", spec.features_per_image, "Features per image")->capture_default_str();
  gen->add_option("--dim", spec.dim, "Descriptor dimension")->capture_default_str();
  gen->add_option("--clusters", spec.n_clusters, "Mixture components")->capture_default_str();
  gen->add_option("--spread", spec.cluster_spread, "Within-component std dev")->capture_default_str();
  gen->add_option("--dups", spec.duplicates_per_query, "Near-duplicates per query")->capture_default_str();
  gen->add_option("--noise", spec.noise, "Near-duplicate noise std dev")->capture_default_str();
  gen->add_option("--bg-clusters", spec.background_clusters, "Tight background components")
      ->capture_default_str();
  gen->add_option("--bg-fraction", spec.background_fraction, "Share of features drawn from background")
      ->capture_default_str();
  gen->add_option("--bg-spread", spec.background_spread, "Background std dev")->capture_default_str();
  gen->add_option("--bg-per-image", spec.background_per_image, "Background components owned per image")
      ->capture_default_str();
  gen->add_option("--bg-scale", spec.background_scale, "Background centre scale")->capture_default_str();
  gen->add_option("--train-images", spec.training_images, "Training images")->capture_default_str();
  gen->add_flag("--query-in-db", spec.query_in_db, "Also store each query in the database");
  gen->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train K vocabularies with k-means");
  std::string train_path;
  std::vector<std::string> train_out;
  std::uint32_t vocab_size = 256, iters = 25, train_k = 0;
  std::uint64_t train_seed = 1;
  train->add_option("--train", train_path, "Training descriptor file")->required();
  train->add_option("--size", vocab_size, "Words per vocabulary")->capture_default_str();
  train->add_option("--iters", iters, "Maximum Lloyd iterations")->capture_default_str();
  train->add_option("--seed", train_seed, "Seed of the first vocabulary; vocabulary k uses seed + k")
      ->capture_default_str();
  train->add_option("--k", train_k, "Number of vocabularies (default: one per --out path)");
  train->add_option("--out", train_out,
                    "One path per vocabulary, or a single path expanded to <stem>_<k><ext>")
      ->required();

  // index
  auto* index_cmd = app.add_subcommand("index", "Build the K inverted files");
  std::string db_path, index_out, he_train;
  std::vector<std::string> vocab_paths;
  bool index_he = false;
  std::uint32_t he_bits = 64;
  std::uint64_t he_seed = 1;
  index_cmd->add_option("--db", db_path, "Database descriptor file")->required();
  index_cmd->add_option("--vocab", vocab_paths, "Vocabulary files, in order")->required();
  index_cmd->add_flag("--he", index_he, "Store Hamming signatures");
  index_cmd->add_option("--he-bits", he_bits, "Signature width")->capture_default_str();
  index_cmd->add_option("--he-train", he_train, "Descriptors for Hamming medians (default: --db)");
  index_cmd->add_option("--seed", he_seed, "Projection seed")->capture_default_str();
  index_cmd->add_option("--out", index_out, "Index file")->required();

  // query
  auto* query = app.add_subcommand("query", "Score query images");
  std::string index_path, queries_path, results_out, config_path, method_name_str = "bayes";
  std::vector<std::string> query_vocabs;
  ScoringMethod method;
  MergeConfig cfg;
  std::size_t topk = 100;
  double c_flag = 0, a_flag = -1, b_flag = -1;
  std::uint32_t he_thresh = 0;
  query->add_option("--index", index_path, "Index file")->required();
  query->add_option("--vocab", query_vocabs, "Vocabulary files, in index order")->required();
  query->add_option("--queries", queries_path, "Query descriptor file")->required();
  query->add_option("--method", method_name_str, "b0, b1, b2, bayes or ra")
      ->check(CLI::IsMember({"b0", "b1", "b2", "bayes", "ra"}))
      ->capture_default_str();
  query->add_option("--b0-vocab", method.b0_vocabulary, "Vocabulary used by b0")->capture_default_str();
  query->add_option("--config", config_path, "Merge configuration file");
  query->add_option("--c", c_flag, "Term-3 weight c");
  query->add_option("--term2-a", a_flag, "Term-2 slope");
  query->add_option("--term2-b", b_flag, "Term-2 intercept");
  query->add_flag("--he", method.use_hamming, "Filter matches by Hamming distance");
  query->add_option("--he-thresh", he_thresh, "Hamming acceptance threshold");
  query->add_flag("--burst", method.use_burstiness, "Burstiness weighting on the difference set");
  query->add_flag("--force-w1", cfg.force_unit_weight, "Set every Bayes weight to 1");
  query->add_option("--topk", topk, "Results kept per query (0 = all)")->capture_default_str();
  query->add_option("--out", results_out, "Results file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a results file against ground truth");
  std::string results_path, gt_path, protocol = "map", metrics_out, eval_method;
  bool exclude_self = false;
  eval->add_option("--results", results_path, "Results file")->required();
  eval->add_option("--gt", gt_path, "Ground-truth file")->required();
  eval->add_option("--protocol", protocol, "map or ns")
      ->check(CLI::IsMember({"map", "ns"}))->capture_default_str();
  eval->add_flag("--exclude-self", exclude_self, "Drop the query id from its ranking (map only)");
  eval->add_option("--method", eval_method, "Method label (default: from the results run)");
  eval->add_option("--out", metrics_out, "Append a CSV row here (default: stdout)");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit the term-2 line on ground truth");
  std::string cal_index, cal_queries, cal_gt, cal_out;
  std::vector<std::string> cal_vocabs;
  std::uint32_t cal_thresh = kDefaultHeThreshold;
  calibrate->add_option("--index", cal_index, "Index file with signatures")->required();
  calibrate->add_option("--vocab", cal_vocabs, "The two vocabulary files")->required();
  calibrate->add_option("--queries", cal_queries, "Query descriptor file")->required();
  calibrate->add_option("--gt", cal_gt, "Ground-truth file")->required();
  calibrate->add_option("--he-thresh", cal_thresh, "True-match Hamming threshold")->capture_default_str();
  calibrate->add_option("--out", cal_out, "Write a merge configuration here");

  // ratio-hist
  auto* hist = app.add_subcommand("ratio-hist", "Cardinality-ratio histogram per database size");
  std::string hist_db, hist_queries, hist_out;
  std::vector<std::string> hist_vocabs;
  std::vector<std::uint32_t> hist_sizes;
  hist->add_option("--db", hist_db, "Database descriptor file")->required();
  hist->add_option("--vocab", hist_vocabs, "Vocabulary files")->required();
  hist->add_option("--queries", hist_queries, "Query descriptor file")->required();
  hist->add_option("--sizes", hist_sizes, "Database prefix sizes")->delimiter(',')->required();
  hist->add_option("--out", hist_out, "CSV output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (spec.n_images == 0) throw Error("--images must be positive");
      const auto data = generate_synthetic(spec);
      fs::create_directories(gen_out);
      const fs::path dir(gen_out);
      write_descriptors(data.training, dir / "train.bmv");
      write_descriptors(data.database, dir / "db.bmv");
      write_descriptors(data.queries, dir / "queries.bmv");
      write_ground_truth(data.ground_truth, dir / "gt.txt");
      log_line("wrote " + std::to_string(data.database.image_count()) +
               " database images to " + dir.string());
    } else if (*train) {
      require_files({train_path});
      if (train_k == 0) train_k = static_cast<std::uint32_t>(train_out.size());
      if (train_k > kMaxVocabularies) {
        throw Error("--k must be at most " + std::to_string(kMaxVocabularies));
      }
      if (train_out.size() == 1 && train_k > 1) {
        const fs::path base(train_out[0]);
        train_out.clear();
        for (std::uint32_t k = 0; k < train_k; ++k) {
          auto name = base.stem().string() + "_" + std::to_string(k) + base.extension().string();
          train_out.push_back((base.parent_path() / name).string());
        }
      } else if (train_out.size() != train_k) {
        throw Error("--k " + std::to_string(train_k) + " needs " + std::to_string(train_k) +
                    " --out paths or a single one, got " + std::to_string(train_out.size()));
      }
      const auto training = read_descriptors(train_path);
      for (std::size_t k = 0; k < train_out.size(); ++k) {
        const auto vocab = train_vocabulary(training, vocab_size, train_seed + k, iters, threads);
        write_vocabulary(vocab, train_out[k]);
        log_line("trained vocabulary " + std::to_string(k) + " -> " + train_out[k]);
      }
    } else if (*index_cmd) {
      require_files(vocab_paths);
      require_files({db_path});
      if (!he_train.empty()) require_files({he_train});
      auto vocabs = load_vocabularies(vocab_paths);
      const auto db = read_descriptors(db_path);
      std::vector<HammingParams> hamming;
      if (index_he) {
        const auto training = he_train.empty() ? db : read_descriptors(he_train);
        for (const auto& v : vocabs) {
          hamming.push_back(train_hamming(training, v, he_bits, he_seed, threads));
        }
      }
      const auto index = build_index(db, std::move(vocabs), std::move(hamming), threads);
      write_index(index, index_out);
      log_line("indexed " + std::to_string(index.image_count) + " images -> " + index_out);
    } else if (*query) {
      require_files({index_path, queries_path});
      require_files(query_vocabs);
      if (!config_path.empty()) require_files({config_path});
      auto index = read_index(index_path);
      attach_vocabularies(index, load_vocabularies(query_vocabs));
      if (!config_path.empty()) {
        const bool force = cfg.force_unit_weight;
        cfg = read_merge_config(config_path, cfg);
        cfg.force_unit_weight = force;
      }
      if (c_flag > 0) cfg.c = c_flag;
      if (a_flag >= 0) cfg.term2_slope = a_flag;
      if (b_flag >= 0) cfg.term2_intercept = b_flag;
      if (he_thresh > 0) cfg.he_threshold = he_thresh;
      method.method = parse_method(method_name_str);
      method.validate(index.vocabulary_count());
      if (method.use_hamming && !index.has_signatures()) {
        throw Error("--he requested but the index has no signatures");
      }
      const auto queries = read_descriptors(queries_path);
      if (queries.dim != index.vocabularies[0].dim) {
        throw Error("query dimension does not match the vocabularies");
      }
      const auto start = std::chrono::steady_clock::now();
      const auto results = run_queries(queries, index, method, cfg, threads);
      const std::chrono::duration<double, std::milli> elapsed =
          std::chrono::steady_clock::now() - start;
      write_results(results, topk, results_out);
      RunInfo info;
      info.method = std::string(method_name(method.method));
      if (method.use_hamming) info.method += "+he";
      if (method.use_burstiness) info.method += "+burst";
      if (cfg.force_unit_weight) info.method += "+w1";
      info.k = index.vocabulary_count();
      info.vocab_size = index.vocabularies[0].size();
      info.query_time_ms_mean = elapsed.count() / static_cast<double>(queries.image_count());
      write_info(info, results_out);
      log_line("scored " + std::to_string(queries.image_count()) + " queries -> " + results_out);
    } else if (*eval) {
      require_files({results_path, gt_path});
      const auto results = read_results(results_path);
      const auto gt = read_ground_truth(gt_path);
      const bool ns = protocol == "ns";
      MetricsRow row;
      const auto info = read_info(results_path);
      row.method = eval_method.empty() ? (info.method.empty() ? "unknown" : info.method) : eval_method;
      row.vocabulary_count = info.k;
      row.vocabulary_size = info.vocab_size;
      row.query_time_ms_mean = info.query_time_ms_mean;
      row.value = ns ? mean_ns_score(results, gt)
                     : mean_average_precision(results, gt, exclude_self);
      const auto header = metrics_csv_header(ns ? "NS" : "mAP");
      const auto line = metrics_csv_row(row);
      if (metrics_out.empty()) {
        std::cout << header << line;
      } else {
        const bool fresh = !fs::exists(metrics_out) || fs::file_size(metrics_out) == 0;
        std::string existing = fresh ? header : read_file(metrics_out);
        write_file(metrics_out, existing + line);
      }
    } else if (*calibrate) {
      require_files({cal_index, cal_queries, cal_gt});
      require_files(cal_vocabs);
      auto index = read_index(cal_index);
      attach_vocabularies(index, load_vocabularies(cal_vocabs));
      const auto raw = calibrate_term2(read_descriptors(cal_queries),
                                       read_ground_truth(cal_gt), index, cal_thresh);
      const auto fit = feasible_term2(raw);
      std::ostringstream text;
      text.precision(17);
      text << "# term-2 line fitted on " << fit.samples << " query features, rms "
           << fit.rms << '\n';
      if (fit.constrained) {
        text << "# unconstrained fit a = " << raw.slope << ", b = " << raw.intercept
             << ", rms " << raw.rms << "; refitted to keep a + b <= 1, b > 0\n";
      }
      MergeConfig fitted;
      fitted.term2_slope = fit.slope;
      fitted.term2_intercept = fit.intercept;
      fitted.he_threshold = cal_thresh;
      text << format_merge_config(fitted);
      if (cal_out.empty()) {
        std::cout << text.str();
      } else {
        write_file(cal_out, text.str());
      }
    } else if (*hist) {
      require_files({hist_db, hist_queries});
      require_files(hist_vocabs);
      const auto db = read_descriptors(hist_db);
      const auto index = build_index(db, load_vocabularies(hist_vocabs), {}, threads);
      const auto histograms = ratio_histogram(index, hist_sizes, read_descriptors(hist_queries));
      const auto csv = histogram_csv(histograms);
      if (hist_out.empty()) std::cout << csv;
      else write_file(hist_out, csv);
      for (const auto& h : histograms) {
        log_line("size " + std::to_string(h.database_size) + ": mean ratio " +
                 std::to_string(h.mean) + " over " + std::to_string(h.samples) + " features");
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "vmerge: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
