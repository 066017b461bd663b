#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vmerge/bayes.hpp"
#include "vmerge/error.hpp"
#include "vmerge/eval.hpp"
#include "vmerge/hamming.hpp"
#include "vmerge/index.hpp"
#include "vmerge/io.hpp"
#include "vmerge/retrieval.hpp"
#include "vmerge/synthetic.hpp"
#include "vmerge/vocab.hpp"

namespace py = pybind11;
using namespace vmerge;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray rows(const std::vector<float>& values, std::uint32_t dim) {
  const std::size_t n = dim == 0 ? 0 : values.size() / dim;
  FloatArray out({n, static_cast<std::size_t>(dim)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

ImageRecord record_from(const FloatArray& a, ImageId id) {
  if (a.ndim() != 2) throw Error("descriptors must be a 2-D array (features x dim)");
  ImageRecord r;
  r.image_id = id;
  r.values.assign(a.data(), a.data() + a.size());
  return r;
}

Corpus corpus_from(const std::vector<FloatArray>& images, std::uint32_t dim) {
  Corpus c;
  c.dim = dim;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].ndim() != 2 || static_cast<std::uint32_t>(images[i].shape(1)) != dim) {
      throw Error("image " + std::to_string(i) + " is not an (n, " + std::to_string(dim) +
                  ") array");
    }
    c.images.push_back(record_from(images[i], static_cast<ImageId>(i)));
  }
  c.validate();
  return c;
}

py::list ranked_to_list(const RankedResult& r) {
  py::list out;
  for (const auto& e : r) out.append(py::make_tuple(e.image_id, e.score));
  return out;
}

py::dict results_to_dict(const ResultSet& rs) {
  py::dict out;
  for (const auto& [q, r] : rs) out[py::int_(q)] = ranked_to_list(r);
  return out;
}

ResultSet results_from_dict(const std::map<ImageId, std::vector<std::pair<ImageId, double>>>& d) {
  ResultSet rs;
  for (const auto& [q, entries] : d) {
    auto& r = rs[q];
    for (auto [id, s] : entries) r.push_back({id, s});
  }
  return rs;
}

}  // namespace

PYBIND11_MODULE(_vmerge, m) {
  m.doc() = "Multi-vocabulary bag-of-words retrieval with Bayes merging";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init(&corpus_from), py::arg("images"), py::arg("dim"),
           "Corpus from a list of (features x dim) float arrays; image i gets id i.")
      .def_readonly("dim", &Corpus::dim)
      .def_property_readonly("image_count", &Corpus::image_count)
      .def_property_readonly("feature_count", &Corpus::feature_count)
      .def("descriptors",
           [](const Corpus& c, std::size_t i) { return rows(c.images.at(i).values, c.dim); },
           py::arg("image"))
      .def("__len__", &Corpus::image_count)
      .def(py::self == py::self)
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { write_descriptors(c, p); })
      .def_static("load", &read_descriptors);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("n_images", &SyntheticSpec::n_images)
      .def_readwrite("n_queries", &SyntheticSpec::n_queries)
      .def_readwrite("features_per_image", &SyntheticSpec::features_per_image)
      .def_readwrite("dim", &SyntheticSpec::dim)
      .def_readwrite("n_clusters", &SyntheticSpec::n_clusters)
      .def_readwrite("cluster_spread", &SyntheticSpec::cluster_spread)
      .def_readwrite("duplicates_per_query", &SyntheticSpec::duplicates_per_query)
      .def_readwrite("noise", &SyntheticSpec::noise)
      .def_readwrite("background_clusters", &SyntheticSpec::background_clusters)
      .def_readwrite("background_fraction", &SyntheticSpec::background_fraction)
      .def_readwrite("background_spread", &SyntheticSpec::background_spread)
      .def_readwrite("background_per_image", &SyntheticSpec::background_per_image)
      .def_readwrite("background_scale", &SyntheticSpec::background_scale)
      .def_readwrite("query_in_db", &SyntheticSpec::query_in_db)
      .def_readwrite("training_images", &SyntheticSpec::training_images)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("training", &SyntheticData::training)
      .def_readonly("database", &SyntheticData::database)
      .def_readonly("queries", &SyntheticData::queries)
      .def_readonly("ground_truth", &SyntheticData::ground_truth);

  m.def("generate_synthetic", &generate_synthetic, py::arg("spec") = SyntheticSpec{});

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_readonly("dim", &Vocabulary::dim)
      .def_readonly("seed", &Vocabulary::seed)
      .def_property_readonly("size", &Vocabulary::size)
      .def_property_readonly("centroids",
                             [](const Vocabulary& v) { return rows(v.centroids, v.dim); })
      .def("save", [](const Vocabulary& v, const std::filesystem::path& p) { write_vocabulary(v, p); })
      .def_static("load", &read_vocabulary);

  m.def("train_vocabulary",
        [](const Corpus& training, std::uint32_t size, std::uint64_t seed, std::uint32_t iters,
           unsigned threads) {
          py::gil_scoped_release release;
          return train_vocabulary(training, size, seed, iters, threads);
        },
        py::arg("training"), py::arg("size"), py::arg("seed") = 1, py::arg("max_iters") = 25,
        py::arg("threads") = 1);

  m.def("quantize",
        [](const FloatArray& x, const std::vector<Vocabulary>& vocabs) {
          if (x.ndim() != 1) throw Error("descriptor must be 1-D");
          return quantize(DescriptorView(x.data(), static_cast<std::size_t>(x.size())), vocabs);
        },
        py::arg("descriptor"), py::arg("vocabularies"));

  py::class_<HammingParams>(m, "HammingParams")
      .def_readonly("bits", &HammingParams::bits)
      .def_readonly("dim", &HammingParams::dim);

  m.def("train_hamming",
        [](const Corpus& training, const Vocabulary& v, std::uint32_t bits, std::uint64_t seed,
           unsigned threads) {
          py::gil_scoped_release release;
          return train_hamming(training, v, bits, seed, threads);
        },
        py::arg("training"), py::arg("vocabulary"), py::arg("bits") = 64, py::arg("seed") = 1,
        py::arg("threads") = 1);

  py::class_<IndexBundle>(m, "Index")
      .def_property_readonly("vocabulary_count", &IndexBundle::vocabulary_count)
      .def_readonly("image_count", &IndexBundle::image_count)
      .def_property_readonly("has_signatures", &IndexBundle::has_signatures)
      .def_property_readonly("image_norms",
                             [](const IndexBundle& i) {
                               return py::array_t<float>(i.image_norms.size(),
                                                         i.image_norms.data());
                             })
      .def("posting_list",
           [](const IndexBundle& i, std::uint32_t k, WordId w) {
             std::vector<std::pair<ImageId, FeatureId>> out;
             for (auto f : i.inverted_files.at(k).postings.at(w).features) {
               out.emplace_back(f.image_id, f.feature_id);
             }
             return out;
           },
           py::arg("vocabulary"), py::arg("word"))
      .def("idf", [](const IndexBundle& i, std::uint32_t k) { return i.inverted_files.at(k).idf; })
      .def("save", [](const IndexBundle& i, const std::filesystem::path& p) { write_index(i, p); })
      .def_static("load",
                  [](const std::filesystem::path& p, std::vector<Vocabulary> vocabs) {
                    auto index = read_index(p);
                    attach_vocabularies(index, std::move(vocabs));
                    return index;
                  },
                  py::arg("path"), py::arg("vocabularies"));

  m.def("build_index",
        [](const Corpus& db, std::vector<Vocabulary> vocabs, std::vector<HammingParams> he,
           unsigned threads) {
          py::gil_scoped_release release;
          return build_index(db, std::move(vocabs), std::move(he), threads);
        },
        py::arg("database"), py::arg("vocabularies"), py::arg("hamming") = std::vector<HammingParams>{},
        py::arg("threads") = 1);

  py::enum_<Method>(m, "Method")
      .value("B0", Method::B0)
      .value("B1", Method::B1)
      .value("B2", Method::B2)
      .value("BAYES", Method::Bayes)
      .value("RA", Method::RankAggregation);

  py::class_<ScoringMethod>(m, "ScoringMethod")
      .def(py::init([](Method method, std::uint32_t b0_vocabulary, bool hamming, bool burst) {
             ScoringMethod s;
             s.method = method;
             s.b0_vocabulary = b0_vocabulary;
             s.use_hamming = hamming;
             s.use_burstiness = burst;
             return s;
           }),
           py::arg("method") = Method::Bayes, py::arg("b0_vocabulary") = 0,
           py::arg("hamming") = false, py::arg("burstiness") = false)
      .def_readwrite("method", &ScoringMethod::method)
      .def_readwrite("b0_vocabulary", &ScoringMethod::b0_vocabulary)
      .def_readwrite("hamming", &ScoringMethod::use_hamming)
      .def_readwrite("burstiness", &ScoringMethod::use_burstiness);

  py::class_<MergeConfig>(m, "MergeConfig")
      .def(py::init<>())
      .def_readwrite("c", &MergeConfig::c)
      .def_readwrite("a", &MergeConfig::term2_slope)
      .def_readwrite("b", &MergeConfig::term2_intercept)
      .def_readwrite("image_count", &MergeConfig::image_count)
      .def_readwrite("he_threshold", &MergeConfig::he_threshold)
      .def_readwrite("force_unit_weight", &MergeConfig::force_unit_weight)
      .def("validate", &MergeConfig::validate)
      .def("__str__", &format_merge_config)
      .def_static("parse", [](const std::string& text) { return parse_merge_config(text); })
      .def_static("load", [](const std::filesystem::path& p) { return read_merge_config(p); });

  m.def("term1", &term1, py::arg("inter_card"), py::arg("union_card"));
  m.def("term2", &term2, py::arg("ratio"), py::arg("config"));
  m.def("term3", &term3, py::arg("image_count"), py::arg("c"));
  m.def("bayes_weight", &bayes_weight, py::arg("inter_card"), py::arg("union_card"),
        py::arg("config"));

  m.def("score_query",
        [](const FloatArray& query, const IndexBundle& index, const ScoringMethod& method,
           const MergeConfig& cfg) {
          const auto record = record_from(query, 0);
          const auto dim = static_cast<std::uint32_t>(query.shape(1));
          RankedResult r;
          {
            py::gil_scoped_release release;
            r = score_query(record, dim, index, method, cfg);
          }
          return ranked_to_list(r);
        },
        py::arg("descriptors"), py::arg("index"), py::arg("method") = ScoringMethod{},
        py::arg("config") = MergeConfig{},
        "Ranked (image_id, score) pairs for one query image.");

  m.def("run_queries",
        [](const Corpus& queries, const IndexBundle& index, const ScoringMethod& method,
           const MergeConfig& cfg, unsigned threads) {
          ResultSet rs;
          {
            py::gil_scoped_release release;
            rs = run_queries(queries, index, method, cfg, threads);
          }
          return results_to_dict(rs);
        },
        py::arg("queries"), py::arg("index"), py::arg("method") = ScoringMethod{},
        py::arg("config") = MergeConfig{}, py::arg("threads") = 1);

  m.def("average_precision",
        [](const std::vector<std::pair<ImageId, double>>& ranked, const std::set<ImageId>& rel) {
          RankedResult r;
          for (auto [id, s] : ranked) r.push_back({id, s});
          return average_precision(r, rel);
        },
        py::arg("ranked"), py::arg("relevant"));
  m.def("ns_score",
        [](const std::vector<std::pair<ImageId, double>>& ranked, const std::set<ImageId>& rel) {
          RankedResult r;
          for (auto [id, s] : ranked) r.push_back({id, s});
          return ns_score(r, rel);
        },
        py::arg("ranked"), py::arg("relevant"));
  m.def("mean_average_precision",
        [](const std::map<ImageId, std::vector<std::pair<ImageId, double>>>& results,
           const GroundTruth& gt, bool exclude_self) {
          return mean_average_precision(results_from_dict(results), gt, exclude_self);
        },
        py::arg("results"), py::arg("ground_truth"), py::arg("exclude_self") = false);

  py::class_<Term2Fit>(m, "Term2Fit")
      .def_readonly("a", &Term2Fit::slope)
      .def_readonly("b", &Term2Fit::intercept)
      .def_readonly("rms", &Term2Fit::rms)
      .def_readonly("samples", &Term2Fit::samples)
      .def_readonly("constrained", &Term2Fit::constrained);

  m.def("calibrate_term2", &calibrate_term2, py::arg("queries"), py::arg("ground_truth"),
        py::arg("index"), py::arg("he_threshold") = kDefaultHeThreshold);
  m.def("feasible_term2", &feasible_term2, py::arg("fit"));

  m.def("ratio_histogram",
        [](const IndexBundle& index, const std::vector<std::uint32_t>& sizes,
           const Corpus& queries) {
          py::list out;
          for (const auto& h : ratio_histogram(index, sizes, queries)) {
            py::dict d;
            d["database_size"] = h.database_size;
            d["counts"] = h.counts;
            d["samples"] = h.samples;
            d["mean"] = h.mean;
            out.append(d);
          }
          return out;
        },
        py::arg("index"), py::arg("sizes"), py::arg("queries"));
}
