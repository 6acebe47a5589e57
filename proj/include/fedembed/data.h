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
#ifndef FEDEMBED_DATA_H_
#define FEDEMBED_DATA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedembed/matrix.h"
#include "fedembed/rng.h"

namespace fedembed {

struct DatasetMeta {
  // Feature extractor that produced the embeddings, e.g. "dinov2-base".
  std::string extractor_id = "none";
  std::string source;
  int num_classes = 0;
};

// Rows of (embedding, label). Immutable once built; subsets are copies.
struct EmbeddingDataset {
  Matrix x;
  std::vector<int> y;
  DatasetMeta meta;

  int size() const { return static_cast<int>(y.size()); }
  int dim() const { return static_cast<int>(x.cols()); }
  int num_classes() const { return meta.num_classes; }

  // Throws ValidationError if labels, sizes or finiteness are off.
  void Validate() const;
  EmbeddingDataset Subset(std::span<const int> indices) const;
  std::vector<int> ClassCounts() const;
};

// Rows of `parts` stacked in order; metadata from the first part.
EmbeddingDataset Concatenate(std::span<const EmbeddingDataset> parts);

enum class FileFormat { kFemb, kCsv };

// ".csv" selects CSV, anything else FEMB.
FileFormat FormatFromPath(const std::filesystem::path& path);

// FEMB layout (little-endian): "FEMB", u32 version=1, u32 n, u32 d, u32 K,
// u16 extractor_id length + utf-8 bytes, n*d float32 row-major, n u32
// labels. CSV: header "label,f0,...,f{d-1}", one row per sample; K is the
// largest label + 1.
EmbeddingDataset LoadDataset(const std::filesystem::path& path,
                             FileFormat format);
EmbeddingDataset LoadDataset(const std::filesystem::path& path);
void SaveDataset(const EmbeddingDataset& dataset,
                 const std::filesystem::path& path, FileFormat format);
void SaveDataset(const EmbeddingDataset& dataset,
                 const std::filesystem::path& path);

// In-memory codecs behind Load/Save.
std::string EncodeFemb(const EmbeddingDataset& dataset);
EmbeddingDataset DecodeFemb(std::string_view bytes);
std::string EncodeCsv(const EmbeddingDataset& dataset);
EmbeddingDataset DecodeCsv(std::string_view text);

// Gaussian blobs: class c ~ N(mu_c, I) with class means at pairwise
// distance exactly `separation` (random orthonormal directions scaled by
// separation / sqrt(2)). Requires num_classes <= dim.
EmbeddingDataset SynthBlobs(int num_classes, int dim, int per_class,
                            double separation, RngStream& rng);

struct PartitionPlan {
  int client_count = 0;
  std::vector<int> assignment;  // sample -> client
  std::vector<int> counts;      // per client

  std::vector<std::vector<int>> ClientIndices() const;
};

PartitionPlan PartitionIid(const EmbeddingDataset& dataset, int clients,
                           RngStream& rng);

// Per class, proportions p_c ~ Dir(alpha 1_M) and each sample of that class
// goes to a client drawn from p_c. An allocation that leaves a client with
// fewer than `min_client_size` samples (empty, by default) is redrawn up to
// `max_redraws` times; after that samples are moved one at a time from the
// largest client into each undersized one.
PartitionPlan PartitionDirichlet(const EmbeddingDataset& dataset, int clients,
                                 double alpha, RngStream& rng,
                                 int max_redraws = 10, int min_client_size = 1);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  bool stratified = true;

  void Validate() const;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Val and test receive floor(ratio * n) samples each, train the remainder.
// Stratified splits allocate each class proportionally (largest remainder)
// and fall back to an unstratified split, with a warning, when some class
// has fewer than 3 samples.
SplitIndices SplitTrainValTest(std::span<const int> labels, int num_classes,
                               const SplitSpec& spec, RngStream& rng);

// Fisher-Yates, fixed so permutations are identical across standard
// libraries.
void Shuffle(std::vector<int>& values, RngStream& rng);

}  // namespace fedembed

#endif  // FEDEMBED_DATA_H_
