#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsketch/analysis.hpp"
#include "fedsketch/cli.hpp"
#include "fedsketch/config.hpp"
#include "fedsketch/data.hpp"
#include "fedsketch/errors.hpp"
#include "fedsketch/federation.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/metrics.hpp"
#include "fedsketch/model.hpp"

namespace py = pybind11;
using namespace fedsketch;

namespace {

model::Precision precision_from_name(const std::string& name) {
  if (name == "f32") return model::Precision::f32;
  if (name == "f64") return model::Precision::f64;
  throw std::invalid_argument("precision must be 'f32' or 'f64'");
}

hashing::MergeMode merge_mode_from_name(const std::string& name) {
  if (name == "mean") return hashing::MergeMode::mean;
  if (name == "median") return hashing::MergeMode::median;
  throw std::invalid_argument("merge mode must be 'mean' or 'median'");
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m)
      throw std::invalid_argument("rows must all have the same length");
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = rows[i][j];
  }
  return out;
}

py::dict report_to_dict(const analysis::VerificationReport& r) {
  py::dict d;
  d["statement"] = r.statement;
  d["trials"] = r.trials;
  d["statistic"] = r.statistic;
  d["bound"] = r.bound;
  d["margin"] = r.margin;
  d["stderr"] = r.stderr_val;
  d["pass"] = r.pass;
  return d;
}

py::dict run_experiment(const std::string& config_text, const std::string& out_dir) {
  auto cfg = config::parse_config(config_text);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  auto run = cli::prepare_run(cfg);
  const auto result = cli::execute_run(run);
  if (!cfg.out_dir.empty()) cli::write_run_artifacts(cfg, run, result);

  py::dict d;
  d["algorithm"] = std::string(config::algorithm_name(cfg.algorithm));
  d["train_samples"] = run.train.size();
  d["test_samples"] = run.test.size();
  d["param_count"] = result.param_count;
  d["payload_bytes_per_client_round"] = result.payload_bytes_per_client;
  d["rounds_run"] = result.history.size();
  d["best_round"] = result.best_round;
  const auto to_best = fed::ledger_totals(result.ledger, result.best_round);
  d["upload_bytes_to_best"] = to_best.upload;
  d["download_bytes_to_best"] = to_best.download;
  d["upload_bytes_total"] = result.ledger.total_upload;
  d["download_bytes_total"] = result.ledger.total_download;
  if (result.best_round > 0) {
    const auto& ev = result.history[result.best_round - 1].eval;
    d["best_top1"] = ev.top1;
    d["best_top3"] = ev.top3;
    d["best_top5"] = ev.top5;
  }
  py::list history;
  for (const auto& rec : result.history) {
    py::dict row;
    row["round"] = rec.round;
    row["evaluated"] = rec.evaluated;
    row["top1"] = rec.eval.top1;
    row["top3"] = rec.eval.top3;
    row["top5"] = rec.eval.top5;
    history.append(std::move(row));
  }
  d["history"] = std::move(history);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated extreme multi-label learning simulator core";

  py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<data_error>(m, "DataError", PyExc_ValueError);

  py::class_<hashing::LabelHashScheme>(m, "Scheme",
                                       "R independent hash tables mapping p "
                                       "class labels into B buckets each")
      .def(py::init([](std::uint32_t p, std::uint32_t B, std::uint32_t R,
                       std::uint64_t seed) {
             return hashing::make_scheme(p, B, R, seed);
           }),
           py::arg("p"), py::arg("B"), py::arg("R"), py::arg("seed") = 1)
      .def_readonly("p", &hashing::LabelHashScheme::p)
      .def_readonly("B", &hashing::LabelHashScheme::B)
      .def_readonly("R", &hashing::LabelHashScheme::R)
      .def_readonly("seed", &hashing::LabelHashScheme::seed)
      .def(
          "bucket",
          [](const hashing::LabelHashScheme& s, std::uint32_t table,
             std::uint32_t label) {
            if (table >= s.R) throw std::out_of_range("table index out of range");
            if (label >= s.p) throw std::out_of_range("label out of range");
            return s.bucket(table, label);
          },
          py::arg("table"), py::arg("label"))
      .def("to_text", [](const hashing::LabelHashScheme& s) {
        return hashing::scheme_to_text(s);
      })
      .def_static("from_text", &hashing::scheme_from_text, py::arg("text"))
      .def("save", &hashing::save_scheme, py::arg("path"),
           py::call_guard<py::gil_scoped_release>())
      .def_static("load", &hashing::load_scheme, py::arg("path"));

  m.def(
      "bucket_labels",
      [](const hashing::LabelHashScheme& scheme,
         const std::vector<std::uint32_t>& positives) {
        const auto mat = hashing::bucket_labels(scheme, positives);
        std::vector<std::vector<int>> rows(mat.rows());
        for (Eigen::Index j = 0; j < mat.rows(); ++j) {
          rows[j].resize(mat.cols());
          for (Eigen::Index i = 0; i < mat.cols(); ++i) rows[j][i] = mat(j, i);
        }
        return rows;
      },
      py::arg("scheme"), py::arg("positives"),
      "Union bucket targets: R x B binary matrix as nested lists");

  m.def(
      "merge_scores",
      [](const hashing::LabelHashScheme& scheme,
         const std::vector<std::vector<double>>& table_scores,
         const std::string& mode) {
        std::vector<Eigen::VectorXd> cols;
        cols.reserve(table_scores.size());
        for (const auto& t : table_scores) cols.push_back(to_vector(t));
        const auto merged =
            hashing::merge_scores(scheme, cols, merge_mode_from_name(mode));
        return std::vector<double>(merged.data(), merged.data() + merged.size());
      },
      py::arg("scheme"), py::arg("table_scores"), py::arg("mode") = "mean",
      "Recover per-class scores from R per-bucket score vectors");

  m.def("min_table_size", &hashing::min_table_size, py::arg("p"),
        py::arg("delta"), py::arg("R"),
        "Smallest bucket count keeping the all-tables collision probability "
        "of any class pair below delta");

  py::class_<hashing::CountSketch>(m, "CountSketch")
      .def(py::init([](std::uint32_t width, std::uint32_t depth,
                       std::uint64_t seed) {
             return hashing::make_sketch(width, depth, seed);
           }),
           py::arg("width"), py::arg("depth"), py::arg("seed") = 1)
      .def_readonly("width", &hashing::CountSketch::width)
      .def_readonly("depth", &hashing::CountSketch::depth)
      .def("insert", &hashing::sketch_insert_one, py::arg("key"), py::arg("value"))
      .def("insert_vector", &hashing::sketch_insert, py::arg("indices"),
           py::arg("values"))
      .def("retrieve", &hashing::sketch_retrieve, py::arg("key"));

  py::class_<data::SparseDataset>(m, "Dataset")
      .def_property_readonly(
          "n", [](const data::SparseDataset& ds) { return ds.size(); })
      .def_readonly("d", &data::SparseDataset::d)
      .def_readonly("p", &data::SparseDataset::p)
      .def(
          "positives",
          [](const data::SparseDataset& ds, std::size_t i) {
            if (i >= ds.size()) throw std::out_of_range("sample index out of range");
            return ds.samples[i].positives;
          },
          py::arg("i"), "Sorted positive class indices of sample i")
      .def(
          "features",
          [](const data::SparseDataset& ds, std::size_t i) {
            if (i >= ds.size()) throw std::out_of_range("sample index out of range");
            const auto& f = ds.samples[i].features;
            return std::make_pair(f.indices, f.values);
          },
          py::arg("i"), "Sparse feature (indices, values) of sample i")
      .def("to_text", &data::dataset_to_text)
      .def_static("from_text", &data::dataset_from_text, py::arg("text"))
      .def("save", &data::save_xc_dataset, py::arg("path"),
           py::call_guard<py::gil_scoped_release>())
      .def_static("load", &data::load_xc_dataset, py::arg("path"),
                  py::call_guard<py::gil_scoped_release>());

  m.def(
      "generate_synthetic",
      [](std::uint32_t N, std::uint32_t d, std::uint32_t p, double zipf,
         std::uint32_t features_per_class, double noise_rate,
         std::uint32_t labels_per_sample, std::uint64_t seed) {
        data::SyntheticSpec spec;
        spec.N = N;
        spec.d = d;
        spec.p = p;
        spec.zipf_exponent = zipf;
        spec.features_per_class = features_per_class;
        spec.noise_rate = noise_rate;
        spec.labels_per_sample = labels_per_sample;
        spec.seed = seed;
        return data::generate_synthetic(spec);
      },
      py::arg("N"), py::arg("d"), py::arg("p"), py::arg("zipf") = 1.0,
      py::arg("features_per_class") = 4, py::arg("noise_rate") = 0.0,
      py::arg("labels_per_sample") = 1, py::arg("seed") = 1,
      "Power-law multi-label dataset from per-class feature prototypes");

  m.def("feature_hash", &data::feature_hash, py::arg("dataset"),
        py::arg("d_tilde"), py::arg("seed"),
        "Signed hashing-trick reduction of the feature dimension");
  m.def("split_holdout", &data::split_holdout, py::arg("dataset"),
        py::arg("fraction"), py::arg("seed"),
        "Deterministic (train, test) split");
  m.def("class_frequencies", &data::class_frequencies, py::arg("dataset"),
        "Per-class positive counts and their sum");
  m.def("top_frequent_classes", &data::top_frequent_classes, py::arg("dataset"),
        py::arg("F"));
  m.def("default_frequent_count", &data::default_frequent_count,
        py::arg("dataset"),
        "Smallest F whose top classes cover 30% of the positive labels");

  py::class_<data::PartitionPlan>(m, "Plan")
      .def_readonly("K", &data::PartitionPlan::K)
      .def_readonly("F", &data::PartitionPlan::F)
      .def_readonly("seed", &data::PartitionPlan::seed)
      .def_readonly("frequent_set", &data::PartitionPlan::frequent_set)
      .def_readonly("assignments", &data::PartitionPlan::assignments)
      .def("to_text", &data::plan_to_text)
      .def_static("from_text", &data::plan_from_text, py::arg("text"))
      .def("save", &data::save_plan, py::arg("path"),
           py::call_guard<py::gil_scoped_release>())
      .def_static("load", &data::load_plan, py::arg("path"));

  m.def("partition_noniid", &data::partition_noniid, py::arg("dataset"),
        py::arg("K"), py::arg("F"), py::arg("seed"),
        "Frequent-class non-iid partition across K clients");

  m.def(
      "topk_accuracy",
      [](const std::vector<std::vector<double>>& scores,
         const std::vector<std::vector<std::uint32_t>>& labels, std::uint32_t k) {
        return metrics::topk_accuracy(to_matrix(scores), labels, k);
      },
      py::arg("scores"), py::arg("labels"), py::arg("k"));
  m.def(
      "kl_divergence",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return metrics::kl_divergence(to_vector(a), to_vector(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "smoothed_distribution",
      [](const std::vector<std::uint64_t>& counts, double eps) {
        const auto v = metrics::smoothed_distribution(counts, eps);
        return std::vector<double>(v.data(), v.data() + v.size());
      },
      py::arg("counts"), py::arg("eps") = 0.0);

  m.def(
      "model_bytes",
      [](std::uint32_t input_dim, std::uint32_t h1, std::uint32_t h2,
         std::uint32_t output_dim, const std::string& precision) {
        model::MLPConfig c;
        c.input_dim = input_dim;
        c.h1 = h1;
        c.h2 = h2;
        c.output_dim = output_dim;
        c.precision = precision_from_name(precision);
        return model::byte_size(c);
      },
      py::arg("input_dim"), py::arg("h1"), py::arg("h2"), py::arg("output_dim"),
      py::arg("precision") = "f32",
      "Parameter payload bytes of one model with the given shape");

  m.def(
      "verify_collision_rate",
      [](std::uint32_t p, std::uint64_t B, std::uint32_t R, double delta,
         std::uint64_t trials, std::uint64_t seed) {
        return report_to_dict(
            analysis::verify_collision_rate(p, B, R, delta, trials, seed));
      },
      py::arg("p"), py::arg("B"), py::arg("R"), py::arg("delta"),
      py::arg("trials") = 2000, py::arg("seed") = 1);
  m.def(
      "verify_kl_contraction",
      [](const std::vector<double>& pi_a, const std::vector<double>& pi_b,
         std::uint32_t B, std::uint64_t schemes, std::uint64_t seed) {
        return report_to_dict(analysis::verify_kl_contraction(
            to_vector(pi_a), to_vector(pi_b), B, schemes, seed));
      },
      py::arg("pi_a"), py::arg("pi_b"), py::arg("B"), py::arg("schemes") = 500,
      py::arg("seed") = 1);
  m.def(
      "mse_scaling",
      [](const std::vector<std::uint64_t>& sizes, const std::vector<double>& sigmas,
         std::uint64_t trials, std::uint64_t seed) {
        std::vector<double> mse;
        auto d = report_to_dict(
            analysis::mse_scaling_demo(sizes, sigmas, trials, seed, &mse));
        d["mse"] = mse;
        return d;
      },
      py::arg("sizes"), py::arg("sigmas"), py::arg("trials") = 2000,
      py::arg("seed") = 1);

  m.def("run_experiment", &run_experiment, py::arg("config_text"),
        py::arg("out_dir") = std::string(),
        "Run a federated experiment from config text; returns the summary "
        "and the per-round history. Artifacts are written when an output "
        "directory is configured.");
}
