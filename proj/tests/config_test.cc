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

#include "fedembed/config.h"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "fedembed/error.h"

namespace fedembed {
namespace {

constexpr char kMinimal[] = R"({
  "config_version": 1,
  "method": "cvae",
  "dataset": {"blobs": {"classes": 3, "dim": 16}}
})";

std::string ConfigErrorField(const std::string& text) {
  try {
    ParseConfig(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(Config, DefaultsFollowTheExperimentProtocol) {
  const ExperimentConfig c = ParseConfig(kMinimal);
  EXPECT_EQ(c.method, Method::kCvae);
  EXPECT_EQ(c.rounds.rounds, 50);
  EXPECT_EQ(c.rounds.local_epochs, 5);
  EXPECT_EQ(c.rounds.learning_rate, 1e-3);
  EXPECT_EQ(c.dp.epsilon, 1.0);
  EXPECT_EQ(c.dp.delta, 1e-4);
  EXPECT_EQ(c.dp.clip_norm, 1.5);
  EXPECT_EQ(c.partition.kind, PartitionKind::kDirichlet);
  EXPECT_EQ(c.partition.alpha, 0.3);
  EXPECT_EQ(c.split.train, 0.6);
  EXPECT_EQ(c.downstream.epochs, 100);
  EXPECT_EQ(c.rounds.fedprox_mu, 0.01);
  ASSERT_TRUE(c.dataset.blobs.has_value());
  EXPECT_EQ(c.dataset.blobs->per_class, 600);
}

TEST(Config, UnknownKeyNamesDottedPath) {
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "rounds": {"bogus": 1}})"),
            "rounds.bogus");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {"colour": 1}}})"),
            "dataset.blobs.colour");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1, "extra": true,
      "dataset": {"blobs": {}}})"),
            "extra");
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "rounds": {"rounds": "ten"}})"),
            "rounds.rounds");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "rounds": {"rounds": 0}})"),
            "rounds.rounds");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "method": "knn"})"),
            "method");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "dp": {"delta": 1.5}})"),
            "dp.delta");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"blobs": {}}, "partition": {"kind": "shards"}})"),
            "partition.kind");
  EXPECT_EQ(ConfigErrorField(R"({"dataset": {"blobs": {}}})"),
            "config_version");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 2,
      "dataset": {"blobs": {}}})"),
            "config_version");
  EXPECT_THROW(ParseConfig("{not json"), ConfigError);
}

TEST(Config, DatasetPathMustExist) {
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1})"), "dataset.path");
  EXPECT_EQ(ConfigErrorField(R"({"config_version": 1,
      "dataset": {"path": "/nonexistent/x.femb"}})"),
            "dataset.path");
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = ParseConfig(kMinimal);
  c.method = Method::kFedProx;
  c.dp.enabled = false;
  c.seeds = {4, 9};
  c.synthesis.class_distribution = "explicit";
  c.synthesis.class_weights = {1.0, 2.0, 3.0};
  const std::string text = ConfigToJson(c);
  const ExperimentConfig back = ParseConfig(text);
  EXPECT_EQ(ConfigToJson(back), text);
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
}

TEST(Config, HashIgnoresOutputDirAndWorkers) {
  ExperimentConfig a = ParseConfig(kMinimal);
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.workers = 8;
  EXPECT_EQ(ConfigHash(a), ConfigHash(b));
  b.rounds.rounds = 49;
  EXPECT_NE(ConfigHash(a), ConfigHash(b));
  EXPECT_EQ(HashHex(0xABCull), "0000000000000abc");
}

TEST(Config, Fnv1aReferenceValues) {
  EXPECT_EQ(Fnv1a64(""), 0xCBF29CE484222325ull);
  EXPECT_EQ(Fnv1a64("a"), 0xAF63DC4C8601EC8Cull);
  EXPECT_EQ(Fnv1a64("foobar"), 0x85944171F73967E8ull);
}

TEST(Config, LabelsAndIds) {
  ExperimentConfig c = ParseConfig(kMinimal);
  EXPECT_EQ(MethodLabel(c), "dp-cvae");
  c.dp.enabled = false;
  EXPECT_EQ(MethodLabel(c), "cvae");
  c.method = Method::kFedLambda;
  EXPECT_EQ(MethodName(c.method), "fedlambda");
  EXPECT_EQ(DatasetId(c), "blobs(K=3,d=16,n=600,s=8,seed=0)");
  c.dataset.name = "ct-dinov2";
  EXPECT_EQ(DatasetId(c), "ct-dinov2");
}

TEST(Config, RoundConfigMirrorsSections) {
  ExperimentConfig c = ParseConfig(kMinimal);
  RoundConfig r = MakeRoundConfig(c);
  EXPECT_EQ(r.model_kind, ModelKind::kCvae);
  ASSERT_TRUE(r.dp.has_value());
  EXPECT_EQ(r.dp->epsilon_target, 1.0);
  c.dp.enabled = false;
  c.method = Method::kFedProx;
  r = MakeRoundConfig(c);
  EXPECT_FALSE(r.dp.has_value());
  EXPECT_EQ(r.model_kind, ModelKind::kLinear);
  EXPECT_EQ(r.baseline, BaselineKind::kFedProx);
}

TEST(Config, LoadFileAndEnvironmentOverrides) {
  const auto path =
      std::filesystem::temp_directory_path() / "fedembed_config_test.json";
  std::ofstream(path) << kMinimal;
  ExperimentConfig c = LoadConfig(path);
  EXPECT_EQ(c.output_dir, "runs/default");
  setenv("FEDEMBED_OUTPUT_DIR", "/tmp/override", 1);
  setenv("FEDEMBED_WORKERS", "3", 1);
  ApplyEnvironmentOverrides(c);
  EXPECT_EQ(c.output_dir, "/tmp/override");
  EXPECT_EQ(c.workers, 3);
  setenv("FEDEMBED_WORKERS", "many", 1);
  EXPECT_THROW(ApplyEnvironmentOverrides(c), ConfigError);
  unsetenv("FEDEMBED_OUTPUT_DIR");
  unsetenv("FEDEMBED_WORKERS");
  std::filesystem::remove(path);
  EXPECT_THROW(LoadConfig(path), ConfigError);
}

}  // namespace
}  // namespace fedembed
