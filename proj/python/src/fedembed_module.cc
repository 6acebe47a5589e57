// Copyright 2026 The fedembed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings for the fedembed core. Arrays cross as float64 numpy
// arrays; embeddings are row-major [n, d].

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "fedembed/config.h"
#include "fedembed/data.h"
#include "fedembed/downstream.h"
#include "fedembed/error.h"
#include "fedembed/eval.h"
#include "fedembed/federation.h"
#include "fedembed/models.h"
#include "fedembed/pipeline.h"
#include "fedembed/privacy.h"
#include "fedembed/rng.h"

namespace py = pybind11;

namespace fedembed {
namespace {

EmbeddingDataset MakeDataset(const Matrix& x, const std::vector<int>& y,
                             int num_classes) {
  EmbeddingDataset d;
  d.x = x;
  d.y = y;
  int k = num_classes;
  for (int label : y) k = std::max(k, label + 1);
  d.meta.num_classes = k;
  d.Validate();
  return d;
}

LinearParams Linear(const Matrix& weight, const Vector& bias) {
  return LinearParams::FromWeights(weight, bias);
}

RngStream Stream(std::uint64_t seed, Purpose purpose) {
  return RngStream(seed, {kServerStream, 0, purpose});
}

py::dict SummaryToDict(const RunSummary& s) {
  py::dict out;
  out["method"] = s.method;
  out["dataset_id"] = s.dataset_id;
  out["extractor_id"] = s.extractor_id;
  out["clients"] = s.clients;
  out["param_count"] = s.param_count;
  py::dict metrics;
  for (const auto& [name, r] : s.metrics) {
    py::dict m;
    m["mean"] = r.mean;
    m["std"] = r.stddev;
    m["per_seed_means"] = r.per_seed_means;
    m["per_client"] = r.per_client;
    metrics[name.c_str()] = m;
  }
  out["metrics"] = metrics;
  return out;
}

}  // namespace
}  // namespace fedembed

PYBIND11_MODULE(_fedembed, m) {
  using namespace fedembed;
  m.doc() = "Federated embedding sharing with DP conditional generators.";

  // Translators registered later are tried first, so the base class goes
  // first.
  const auto error = py::register_exception<Error>(m, "FedembedError");
  py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<ShapeError>(m, "ShapeError", error);
  py::register_exception<NumericError>(m, "NumericError", error);
  py::register_exception<CalibrationError>(m, "CalibrationError", error);
  py::register_exception<PrivacyBudgetError>(m, "PrivacyBudgetError", error);

  // Data.
  m.def(
      "load_dataset",
      [](const std::filesystem::path& path) {
        const EmbeddingDataset d = LoadDataset(path);
        py::dict meta;
        meta["extractor_id"] = d.meta.extractor_id;
        meta["source"] = d.meta.source;
        meta["num_classes"] = d.meta.num_classes;
        return py::make_tuple(d.x, d.y, meta);
      },
      py::arg("path"), "Returns (X, y, meta) from a .femb or .csv file.");
  m.def(
      "save_dataset",
      [](const std::filesystem::path& path, const Matrix& x,
         const std::vector<int>& y, int num_classes,
         const std::string& extractor_id) {
        EmbeddingDataset d = MakeDataset(x, y, num_classes);
        d.meta.extractor_id = extractor_id;
        SaveDataset(d, path);
      },
      py::arg("path"), py::arg("x"), py::arg("y"), py::arg("num_classes") = 0,
      py::arg("extractor_id") = "none");
  m.def(
      "synth_blobs",
      [](int classes, int dim, int per_class, double separation,
         std::uint64_t seed) {
        RngStream rng = Stream(seed, Purpose::kData);
        const EmbeddingDataset d =
            SynthBlobs(classes, dim, per_class, separation, rng);
        return py::make_tuple(d.x, d.y);
      },
      py::arg("classes"), py::arg("dim"), py::arg("per_class"),
      py::arg("separation"), py::arg("seed") = 0);
  m.def(
      "partition_iid",
      [](const std::vector<int>& y, int clients, std::uint64_t seed) {
        const EmbeddingDataset d = MakeDataset(Matrix::Zero(y.size(), 1), y, 0);
        RngStream rng = Stream(seed, Purpose::kPartition);
        return PartitionIid(d, clients, rng).assignment;
      },
      py::arg("y"), py::arg("clients"), py::arg("seed") = 0,
      "Client id of every sample.");
  m.def(
      "partition_dirichlet",
      [](const std::vector<int>& y, int clients, double alpha,
         std::uint64_t seed, int min_client_size) {
        const EmbeddingDataset d = MakeDataset(Matrix::Zero(y.size(), 1), y, 0);
        RngStream rng = Stream(seed, Purpose::kPartition);
        return PartitionDirichlet(d, clients, alpha, rng, 10, min_client_size)
            .assignment;
      },
      py::arg("y"), py::arg("clients"), py::arg("alpha"), py::arg("seed") = 0,
      py::arg("min_client_size") = 1);
  m.def(
      "split_train_val_test",
      [](const std::vector<int>& y, std::uint64_t seed, bool stratified) {
        int k = 1;
        for (int label : y) k = std::max(k, label + 1);
        SplitSpec spec;
        spec.stratified = stratified;
        RngStream rng(seed, {0, 0, Purpose::kSplit});
        const SplitIndices s = SplitTrainValTest(y, k, spec, rng);
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("y"), py::arg("seed") = 0, py::arg("stratified") = true,
      "60:20:20 index split, remainder to train.");

  // Privacy.
  m.def("rdp_subsampled_gaussian", &RdpSubsampledGaussian, py::arg("q"),
        py::arg("sigma"), py::arg("order"));
  m.def(
      "compute_epsilon",
      [](double q, double sigma, std::int64_t steps, double delta) {
        const DpGuarantee g =
            ComposedEpsilon(q, sigma, steps, delta, DefaultOrders());
        return py::make_tuple(g.epsilon, g.order);
      },
      py::arg("q"), py::arg("sigma"), py::arg("steps"), py::arg("delta"),
      "Returns (epsilon, best order).");
  m.def(
      "calibrate_noise",
      [](double epsilon, double delta, double q, std::int64_t steps) {
        return CalibrateNoise(epsilon, delta, q, steps, DefaultOrders());
      },
      py::arg("epsilon"), py::arg("delta"), py::arg("q"), py::arg("steps"));
  m.def(
      "clip_per_sample",
      [](const Matrix& grads, double clip_norm) {
        std::vector<Gradients> per_sample;
        for (Eigen::Index i = 0; i < grads.rows(); ++i) {
          LayerGrad g;
          g.weight = grads.row(i);
          g.bias = Vector::Zero(0);
          per_sample.push_back({g});
        }
        per_sample = ClipPerSample(std::move(per_sample), clip_norm);
        Matrix out(grads.rows(), grads.cols());
        for (Eigen::Index i = 0; i < grads.rows(); ++i) {
          out.row(i) = per_sample[i][0].weight;
        }
        return out;
      },
      py::arg("grads"), py::arg("clip_norm"),
      "Rows are flattened per-sample gradients.");
  m.def(
      "noisy_aggregate",
      [](const Matrix& grads, double clip_norm, double noise_multiplier,
         std::uint64_t seed) {
        std::vector<Gradients> per_sample;
        for (Eigen::Index i = 0; i < grads.rows(); ++i) {
          LayerGrad g;
          g.weight = grads.row(i);
          g.bias = Vector::Zero(0);
          per_sample.push_back({g});
        }
        per_sample = ClipPerSample(std::move(per_sample), clip_norm);
        RngStream rng = Stream(seed, Purpose::kDpNoise);
        const Gradients out =
            NoisyAggregate(per_sample, clip_norm, noise_multiplier, rng);
        return Vector(out[0].weight.row(0).transpose());
      },
      py::arg("grads"), py::arg("clip_norm"), py::arg("noise_multiplier"),
      py::arg("seed") = 0,
      "Clips each row, sums, adds N(0, (sigma C)^2) and divides by n.");

  // Federation.
  m.def(
      "aggregate_shared",
      [](const std::vector<std::pair<Matrix, Vector>>& weights,
         const std::vector<int>& n_train) {
        std::vector<SharedWeights> payloads;
        for (const auto& [w, b] : weights) {
          Layer layer;
          layer.weight = w;
          layer.bias = b;
          payloads.push_back({MlpStack({layer})});
        }
        ServerState server;
        const SharedWeights out = AggregateShared(server, payloads, n_train);
        const Layer& l = out.stack.layers()[0];
        return py::make_tuple(l.weight, l.bias, server.aggregation_weights);
      },
      py::arg("weights"), py::arg("n_train"),
      "Weighted average of (W, b) pairs; returns (W, b, weights).");

  // Downstream.
  m.def(
      "train_linear",
      [](const Matrix& x, const std::vector<int>& y, int num_classes,
         int epochs, double learning_rate, int batch_size, std::uint64_t seed) {
        TrainSpec spec{epochs, learning_rate, batch_size, seed};
        const LinearParams p =
            TrainLinear(MakeDataset(x, y, num_classes), spec);
        return py::make_tuple(p.weight(), p.bias());
      },
      py::arg("x"), py::arg("y"), py::arg("num_classes") = 0,
      py::arg("epochs") = 100, py::arg("learning_rate") = 1e-3,
      py::arg("batch_size") = 32, py::arg("seed") = 0);
  m.def(
      "interpolate_proba",
      [](const Matrix& wl, const Vector& bl, const Matrix& wg, const Vector& bg,
         double lambda, const Matrix& x) {
        return InterpolateProba({Linear(wl, bl), Linear(wg, bg), lambda}, x);
      },
      py::arg("local_weight"), py::arg("local_bias"), py::arg("global_weight"),
      py::arg("global_bias"), py::arg("lam"), py::arg("x"));
  m.def(
      "select_lambda",
      [](const Matrix& wl, const Vector& bl, const Matrix& wg, const Vector& bg,
         const Matrix& x, const std::vector<int>& y) {
        const LambdaSelection s =
            SelectLambda(Linear(wl, bl), Linear(wg, bg),
                         MakeDataset(x, y, static_cast<int>(wl.rows())));
        return py::make_tuple(s.lambda, s.score);
      },
      py::arg("local_weight"), py::arg("local_bias"), py::arg("global_weight"),
      py::arg("global_bias"), py::arg("x"), py::arg("y"),
      "Returns (lambda, validation balanced accuracy).");

  // Evaluation.
  m.def("accuracy", [](const std::vector<int>& p, const std::vector<int>& t) {
    return Accuracy(p, t);
  });
  m.def(
      "balanced_accuracy",
      [](const std::vector<int>& p, const std::vector<int>& t, int k) {
        for (int label : t) k = std::max(k, label + 1);
        for (int label : p) k = std::max(k, label + 1);
        return BalancedAccuracy(p, t, k);
      },
      py::arg("predicted"), py::arg("truth"), py::arg("num_classes") = 0);
  m.def("wasserstein_1d",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return Wasserstein1d(a, b);
        });
  m.def(
      "wasserstein_avg",
      [](const Matrix& real, const Matrix& synthetic) {
        const EmbeddingDataset a =
            MakeDataset(real, std::vector<int>(real.rows(), 0), 1);
        const EmbeddingDataset b =
            MakeDataset(synthetic, std::vector<int>(synthetic.rows(), 0), 1);
        return WassersteinAvg(a, b);
      },
      py::arg("real"), py::arg("synthetic"));
  m.def(
      "param_count",
      [](const std::string& kind, int dim, int num_classes) -> std::int64_t {
        RngStream rng(0, {0, 0, Purpose::kInit});
        if (kind == "cvae") {
          CvaeDims d;
          d.input_dim = dim;
          d.num_classes = num_classes;
          return ParamCount(CvaeParams::Create(d, rng));
        }
        if (kind == "cgan") {
          CganDims d;
          d.input_dim = dim;
          d.num_classes = num_classes;
          return ParamCount(CganParams::Create(d, rng));
        }
        if (kind == "linear") {
          return ParamCount(LinearParams::Zeros(dim, num_classes));
        }
        throw ValidationError("unknown model kind '" + kind + "'");
      },
      py::arg("kind"), py::arg("dim"), py::arg("num_classes"),
      "Parameters of the default-sized cvae, cgan or linear model.");

  // Pipeline.
  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        ExperimentConfig c = ParseConfig(config_json);
        ApplyEnvironmentOverrides(c);
        RunSummary s;
        {
          py::gil_scoped_release release;
          s = RunExperiment(c);
        }
        return SummaryToDict(s);
      },
      py::arg("config_json"),
      "Runs every stage for every seed; returns the metric summary.");
  m.def(
      "canonical_config",
      [](const std::string& config_json) {
        return ConfigToJson(ParseConfig(config_json));
      },
      py::arg("config_json"), "Validated config with every default filled in.");
  m.def(
      "report",
      [](const std::vector<std::filesystem::path>& runs,
         const std::filesystem::path& out) { ReportTables(runs, out); },
      py::arg("runs"), py::arg("out"));
}
