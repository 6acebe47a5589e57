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
#include "fedembed/data.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "fedembed/error.h"
#include "fedembed/log.h"

namespace fedembed {
namespace {

constexpr char kFembMagic[4] = {'F', 'E', 'M', 'B'};
constexpr std::uint32_t kFembVersion = 1;

void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  std::string_view Take(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(
          std::string("truncated FEMB file while reading ") + what, pos_);
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint16_t U16(const char* what) {
    const std::string_view b = Take(2, what);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
  }

  std::uint32_t U32(const char* what) {
    const std::string_view b = Take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i]))
           << (8 * i);
    }
    return v;
  }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void WriteFile(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

// Allocates `total` across classes proportionally to `counts`, largest
// remainder first, never exceeding `capacity`.
std::vector<int> Apportion(int total, const std::vector<int>& counts,
                           const std::vector<int>& capacity) {
  const int n = std::accumulate(counts.begin(), counts.end(), 0);
  std::vector<int> out(counts.size(), 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (size_t c = 0; c < counts.size(); ++c) {
    const double exact =
        static_cast<double>(total) * counts[c] / static_cast<double>(n);
    out[c] = std::min(static_cast<int>(std::floor(exact + 1e-9)), capacity[c]);
    assigned += out[c];
    remainders.emplace_back(exact - out[c], static_cast<int>(c));
  }
  std::stable_sort(
      remainders.begin(), remainders.end(),
      [](const auto& a, const auto& b) { return a.first > b.first; });
  while (assigned < total) {
    bool progressed = false;
    for (const auto& [frac, c] : remainders) {
      if (assigned == total) break;
      if (out[c] < capacity[c]) {
        ++out[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return out;
}

}  // namespace

void EmbeddingDataset::Validate() const {
  if (y.empty()) throw ValidationError("dataset is empty");
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw ValidationError("dataset has " + std::to_string(x.rows()) +
                          " embeddings but " + std::to_string(y.size()) +
                          " labels");
  }
  if (meta.num_classes < 1) throw ValidationError("K must be >= 1");
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= meta.num_classes) {
      throw ValidationError("label " + std::to_string(y[i]) + " at row " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(meta.num_classes) + ")");
    }
  }
  if (!x.allFinite()) throw ValidationError("non-finite embedding values");
}

EmbeddingDataset EmbeddingDataset::Subset(std::span<const int> indices) const {
  EmbeddingDataset out;
  out.meta = meta;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.resize(indices.size());
  for (size_t k = 0; k < indices.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(indices[k]);
    out.y[k] = y[indices[k]];
  }
  return out;
}

std::vector<int> EmbeddingDataset::ClassCounts() const {
  std::vector<int> counts(std::max(meta.num_classes, 0), 0);
  for (int label : y) {
    if (label >= 0 && label < meta.num_classes) ++counts[label];
  }
  return counts;
}

EmbeddingDataset Concatenate(std::span<const EmbeddingDataset> parts) {
  if (parts.empty()) throw ValidationError("nothing to concatenate");
  EmbeddingDataset out;
  out.meta = parts.front().meta;
  Eigen::Index rows = 0;
  for (const EmbeddingDataset& p : parts) {
    if (p.dim() != parts.front().dim()) {
      throw ShapeError("cannot concatenate datasets of different widths");
    }
    rows += p.x.rows();
  }
  out.x.resize(rows, parts.front().dim());
  Eigen::Index at = 0;
  for (const EmbeddingDataset& p : parts) {
    out.x.middleRows(at, p.x.rows()) = p.x;
    at += p.x.rows();
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    out.meta.num_classes = std::max(out.meta.num_classes, p.meta.num_classes);
  }
  return out;
}

FileFormat FormatFromPath(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::kCsv : FileFormat::kFemb;
}

std::string EncodeFemb(const EmbeddingDataset& dataset) {
  dataset.Validate();
  if (dataset.meta.extractor_id.size() > 0xFFFF) {
    throw ValidationError("extractor id longer than 65535 bytes");
  }
  std::string out(kFembMagic, 4);
  PutU32(out, kFembVersion);
  PutU32(out, static_cast<std::uint32_t>(dataset.size()));
  PutU32(out, static_cast<std::uint32_t>(dataset.dim()));
  PutU32(out, static_cast<std::uint32_t>(dataset.num_classes()));
  PutU16(out, static_cast<std::uint16_t>(dataset.meta.extractor_id.size()));
  out += dataset.meta.extractor_id;
  out.reserve(out.size() + 4 * dataset.x.size() + 4 * dataset.y.size());
  for (Eigen::Index i = 0; i < dataset.x.size(); ++i) {
    PutU32(out, std::bit_cast<std::uint32_t>(
                    static_cast<float>(dataset.x.data()[i])));
  }
  for (int label : dataset.y) PutU32(out, static_cast<std::uint32_t>(label));
  return out;
}

EmbeddingDataset DecodeFemb(std::string_view bytes) {
  ByteReader reader(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFembMagic, 4) != 0) {
    throw FormatError("bad FEMB magic", 0);
  }
  reader.Take(4, "magic");
  const std::uint64_t version_offset = reader.offset();
  const std::uint32_t version = reader.U32("version");
  if (version != kFembVersion) {
    throw FormatError("unsupported FEMB version " + std::to_string(version),
                      version_offset);
  }
  const std::uint32_t n = reader.U32("n");
  const std::uint32_t d = reader.U32("d");
  const std::uint32_t k = reader.U32("K");
  const std::uint16_t id_len = reader.U16("extractor id length");
  EmbeddingDataset out;
  out.meta.extractor_id = std::string(reader.Take(id_len, "extractor id"));
  out.meta.num_classes = static_cast<int>(k);
  out.meta.source = "femb";
  const std::uint64_t body =
      static_cast<std::uint64_t>(n) * d * 4 + static_cast<std::uint64_t>(n) * 4;
  if (bytes.size() - reader.offset() < body) {
    throw FormatError(
        "truncated FEMB payload: need " + std::to_string(body) + " bytes",
        reader.offset());
  }
  out.x.resize(n, d);
  for (Eigen::Index i = 0; i < out.x.size(); ++i) {
    out.x.data()[i] = std::bit_cast<float>(reader.U32("embedding"));
  }
  out.y.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint64_t at = reader.offset();
    const std::uint32_t label = reader.U32("label");
    if (label >= k) {
      throw ValidationError("label " + std::to_string(label) +
                            " >= K=" + std::to_string(k) + " at byte offset " +
                            std::to_string(at));
    }
    out.y[i] = static_cast<int>(label);
  }
  if (!reader.at_end()) {
    throw FormatError("trailing bytes after FEMB payload", reader.offset());
  }
  out.Validate();
  return out;
}

std::string EncodeCsv(const EmbeddingDataset& dataset) {
  dataset.Validate();
  std::string out = "label";
  for (int j = 0; j < dataset.dim(); ++j) out += ",f" + std::to_string(j);
  out += "\n";
  char buf[64];
  for (int i = 0; i < dataset.size(); ++i) {
    out += std::to_string(dataset.y[i]);
    for (int j = 0; j < dataset.dim(); ++j) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf),
                                           static_cast<float>(dataset.x(i, j)));
      out += ',';
      out.append(buf, end);
    }
    out += "\n";
  }
  return out;
}

EmbeddingDataset DecodeCsv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::vector<std::uint64_t> offsets;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      lines.push_back(line);
      offsets.push_back(pos);
    }
    pos = end + 1;
  }
  if (lines.empty()) throw FormatError("empty CSV file", 0);

  auto split = [](std::string_view line) {
    std::vector<std::string_view> cells;
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return cells;
  };

  const std::vector<std::string_view> header = split(lines[0]);
  if (header.empty() || header[0] != "label") {
    throw FormatError("CSV header must start with 'label'", 0);
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    if (header[j + 1] != "f" + std::to_string(j)) {
      throw FormatError("CSV header column " + std::to_string(j + 1) +
                            " must be f" + std::to_string(j),
                        0);
    }
  }
  const int n = static_cast<int>(lines.size()) - 1;
  EmbeddingDataset out;
  out.x.resize(n, d);
  out.y.resize(n);
  int max_label = -1;
  for (int i = 0; i < n; ++i) {
    const std::vector<std::string_view> cells = split(lines[i + 1]);
    const std::uint64_t at = offsets[i + 1];
    if (static_cast<int>(cells.size()) != d + 1) {
      throw FormatError("CSV row " + std::to_string(i + 1) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(d + 1),
                        at);
    }
    int label = 0;
    const auto lr = std::from_chars(cells[0].data(),
                                    cells[0].data() + cells[0].size(), label);
    if (lr.ec != std::errc() || lr.ptr != cells[0].data() + cells[0].size() ||
        label < 0) {
      throw FormatError("bad label in CSV row " + std::to_string(i + 1), at);
    }
    out.y[i] = label;
    max_label = std::max(max_label, label);
    for (int j = 0; j < d; ++j) {
      const std::string_view cell = cells[j + 1];
      double value = 0.0;
      const auto r =
          std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (r.ec != std::errc() || r.ptr != cell.data() + cell.size()) {
        throw FormatError("bad number in CSV row " + std::to_string(i + 1) +
                              ", column f" + std::to_string(j),
                          at);
      }
      out.x(i, j) = static_cast<float>(value);
    }
  }
  out.meta.num_classes = max_label + 1;
  out.meta.source = "csv";
  out.Validate();
  return out;
}

EmbeddingDataset LoadDataset(const std::filesystem::path& path,
                             FileFormat format) {
  const std::string bytes = ReadFile(path);
  return format == FileFormat::kCsv ? DecodeCsv(bytes) : DecodeFemb(bytes);
}

EmbeddingDataset LoadDataset(const std::filesystem::path& path) {
  return LoadDataset(path, FormatFromPath(path));
}

void SaveDataset(const EmbeddingDataset& dataset,
                 const std::filesystem::path& path, FileFormat format) {
  WriteFile(path, format == FileFormat::kCsv ? EncodeCsv(dataset)
                                             : EncodeFemb(dataset));
}

void SaveDataset(const EmbeddingDataset& dataset,
                 const std::filesystem::path& path) {
  SaveDataset(dataset, path, FormatFromPath(path));
}

EmbeddingDataset SynthBlobs(int num_classes, int dim, int per_class,
                            double separation, RngStream& rng) {
  if (num_classes < 2 || dim < 2) {
    throw ValidationError("blobs need K >= 2 and d >= 2");
  }
  if (num_classes > dim) {
    throw ValidationError("blobs need K <= d for orthogonal class means");
  }
  if (per_class < 1) throw ValidationError("n_per_class must be >= 1");
  if (!(separation >= 0.0)) throw ValidationError("separation must be >= 0");

  const Matrix directions = GaussianSample(rng, dim, num_classes);
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(directions))
          .householderQ() *
      Eigen::MatrixXd::Identity(dim, num_classes);
  const double radius = separation / std::sqrt(2.0);

  EmbeddingDataset out;
  out.meta.num_classes = num_classes;
  out.meta.source = "blobs";
  out.meta.extractor_id = "synthetic-blobs";
  const int n = num_classes * per_class;
  out.x = GaussianSample(rng, n, dim);
  out.y.resize(n);
  for (int c = 0; c < num_classes; ++c) {
    const RowVector mean = radius * q.col(c).transpose();
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      out.x.row(row) += mean;
      out.y[row] = c;
    }
  }
  return out;
}

std::vector<std::vector<int>> PartitionPlan::ClientIndices() const {
  std::vector<std::vector<int>> out(client_count);
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    out[assignment[i]].push_back(i);
  }
  return out;
}

void Shuffle(std::vector<int>& values, RngStream& rng) {
  for (size_t i = values.size(); i > 1; --i) {
    const size_t j = rng.UniformIndex(i);
    std::swap(values[i - 1], values[j]);
  }
}

PartitionPlan PartitionIid(const EmbeddingDataset& dataset, int clients,
                           RngStream& rng) {
  const int n = dataset.size();
  if (clients < 1) throw ValidationError("need at least one client");
  if (clients > n) {
    throw ValidationError("cannot split " + std::to_string(n) +
                          " samples across " + std::to_string(clients) +
                          " clients");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Shuffle(order, rng);
  PartitionPlan plan;
  plan.client_count = clients;
  plan.assignment.assign(n, 0);
  plan.counts.assign(clients, 0);
  const int base = n / clients;
  const int extra = n % clients;
  int at = 0;
  for (int m = 0; m < clients; ++m) {
    const int size = base + (m < extra ? 1 : 0);
    for (int k = 0; k < size; ++k) plan.assignment[order[at++]] = m;
    plan.counts[m] = size;
  }
  return plan;
}

PartitionPlan PartitionDirichlet(const EmbeddingDataset& dataset, int clients,
                                 double alpha, RngStream& rng, int max_redraws,
                                 int min_client_size) {
  const int n = dataset.size();
  if (!(alpha > 0.0)) throw ValidationError("Dirichlet alpha must be > 0");
  if (clients < 1) throw ValidationError("need at least one client");
  if (min_client_size < 1) min_client_size = 1;
  if (static_cast<std::int64_t>(clients) * min_client_size > n) {
    throw ValidationError("Dirichlet partition cannot give each of " +
                          std::to_string(clients) + " clients " +
                          std::to_string(min_client_size) + " of " +
                          std::to_string(n) + " samples");
  }
  const int classes = dataset.num_classes();
  std::vector<std::vector<int>> by_class(classes);
  for (int i = 0; i < n; ++i) by_class[dataset.y[i]].push_back(i);

  PartitionPlan plan;
  plan.client_count = clients;
  for (int attempt = 0;; ++attempt) {
    plan.assignment.assign(n, 0);
    plan.counts.assign(clients, 0);
    for (int c = 0; c < classes; ++c) {
      if (by_class[c].empty()) continue;
      std::vector<double> logp(clients);
      for (double& v : logp) v = rng.LogGamma(alpha);
      const double m = *std::max_element(logp.begin(), logp.end());
      std::vector<double> cumulative(clients);
      double total = 0.0;
      for (int k = 0; k < clients; ++k) {
        total += std::exp(logp[k] - m);
        cumulative[k] = total;
      }
      for (int i : by_class[c]) {
        const double u = rng.Uniform() * total;
        const int client = static_cast<int>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) -
            cumulative.begin());
        const int chosen = std::min(client, clients - 1);
        plan.assignment[i] = chosen;
        ++plan.counts[chosen];
      }
    }
    const bool has_small =
        *std::min_element(plan.counts.begin(), plan.counts.end()) <
        min_client_size;
    if (!has_small) return plan;
    if (attempt >= max_redraws) break;
  }
  // Repair: an undersized client repeatedly takes the highest-index sample
  // of the currently largest client.
  for (int m = 0; m < clients; ++m) {
    while (plan.counts[m] < min_client_size) {
      const int largest = static_cast<int>(
          std::max_element(plan.counts.begin(), plan.counts.end()) -
          plan.counts.begin());
      for (int i = n - 1; i >= 0; --i) {
        if (plan.assignment[i] == largest) {
          plan.assignment[i] = m;
          --plan.counts[largest];
          ++plan.counts[m];
          break;
        }
      }
    }
  }
  return plan;
}

void SplitSpec::Validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-12) {
    throw ValidationError("split ratios must sum to 1");
  }
}

SplitIndices SplitTrainValTest(std::span<const int> labels, int num_classes,
                               const SplitSpec& spec, RngStream& rng) {
  spec.Validate();
  const int n = static_cast<int>(labels.size());
  const int n_val = static_cast<int>(std::floor(spec.val * n + 1e-9));
  const int n_test = static_cast<int>(std::floor(spec.test * n + 1e-9));

  bool stratified = spec.stratified;
  std::vector<std::vector<int>> by_class(num_classes);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("label outside class range in split");
    }
    by_class[labels[i]].push_back(i);
  }
  if (stratified) {
    for (int c = 0; c < num_classes; ++c) {
      const int count = static_cast<int>(by_class[c].size());
      if (count > 0 && count < 3) {
        Warn("class " + std::to_string(c) + " has only " +
             std::to_string(count) +
             " samples; falling back to an unstratified split");
        stratified = false;
        break;
      }
    }
  }

  SplitIndices out;
  if (!stratified) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Shuffle(order, rng);
    out.val.assign(order.begin(), order.begin() + n_val);
    out.test.assign(order.begin() + n_val, order.begin() + n_val + n_test);
    out.train.assign(order.begin() + n_val + n_test, order.end());
  } else {
    std::vector<int> counts(num_classes);
    for (int c = 0; c < num_classes; ++c) {
      counts[c] = static_cast<int>(by_class[c].size());
    }
    const std::vector<int> val_quota = Apportion(n_val, counts, counts);
    std::vector<int> left(num_classes);
    for (int c = 0; c < num_classes; ++c) left[c] = counts[c] - val_quota[c];
    const std::vector<int> test_quota = Apportion(n_test, counts, left);
    for (int c = 0; c < num_classes; ++c) {
      std::vector<int>& members = by_class[c];
      Shuffle(members, rng);
      const int v = val_quota[c];
      const int t = test_quota[c];
      out.val.insert(out.val.end(), members.begin(), members.begin() + v);
      out.test.insert(out.test.end(), members.begin() + v,
                      members.begin() + v + t);
      out.train.insert(out.train.end(), members.begin() + v + t, members.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace fedembed
