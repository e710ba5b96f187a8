#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geosdg/ingest/survey.hpp"

namespace geosdg::knn {

using ingest::Task;

inline const std::vector<std::size_t> kDefaultKs = {5, 10, 50, 100, 200};

/// Immutable row store. Rows keep insertion order; ties are resolved by row
/// id, never by position, so predictions do not depend on row order.
class KnnIndex {
 public:
  KnnIndex() = default;

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  Task task() const { return task_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  /// Set when every row carries the same label.
  bool degenerate() const { return degenerate_; }
  const std::string& warning() const { return warning_; }

 private:
  friend KnnIndex build_index(std::vector<std::vector<float>>, std::vector<int>, std::vector<std::string>, Task);

  std::size_t dim_ = 0;
  Task task_ = Task::piped_water;
  std::vector<float> data_;
  std::vector<int> labels_;
  std::vector<std::string> ids_;
  bool degenerate_ = false;
  std::string warning_;
};

/// ShapeError on ragged rows or length mismatch; InvalidValue on empty
/// input, labels outside {0,1} or duplicate ids. A single-class label set is
/// accepted with a DegenerateIndex warning carried on the index.
KnnIndex build_index(std::vector<std::vector<float>> embeddings, std::vector<int> labels, std::vector<std::string> ids,
                     Task task);

struct Neighbor {
  std::size_t row = 0;
  std::string id;
  double distance = 0;  ///< Euclidean
};

struct Classification {
  int label = 0;
  std::size_t votes[2] = {0, 0};
  std::vector<Neighbor> neighbors;  ///< ascending (distance, id)
};

/// Squared Euclidean distance: float differences, double accumulation.
double squared_distance(std::span<const float> a, std::span<const float> b);

/// Majority vote over the k nearest rows. Vote ties go to the class of the
/// first neighbor in (distance, id) order. ConfigError unless 1 <= k <= size.
Classification classify(const KnnIndex& index, std::span<const float> query, std::size_t k);

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_zero_denominator = false;
  bool recall_zero_denominator = false;
  std::size_t k = 0;
  Task task = Task::piped_water;
};

/// Positive class is 1 ("has access"). Undefined precision or recall is
/// reported as 0 with its ZeroDenominator flag set.
MetricsReport evaluate(std::span<const int> predictions, std::span<const int> truth);

struct LabeledSet {
  std::vector<std::vector<float>> embeddings;
  std::vector<int> labels;
  std::vector<std::string> ids;
};

struct SweepResult {
  std::vector<MetricsReport> rows;  ///< one per k, input order
  std::size_t best_k = 0;           ///< max accuracy, then f1, then smaller k
};

/// InvalidValue on an empty validation set or ids shared with the index;
/// ConfigError when a k exceeds the index size.
SweepResult sweep_k(const KnnIndex& index, const LabeledSet& validation,
                    const std::vector<std::size_t>& ks = kDefaultKs);

std::string format_sweep(const SweepResult& s);

// ---------------------------------------------------------------------------
// embedding store: row_id,task,label,dim,e_0,...,e_{dim-1}

struct EmbeddingRow {
  std::string row_id;
  std::string task;          ///< empty when unlabeled
  std::optional<int> label;  ///< empty when unlabeled
  std::vector<float> values;
};

std::string format_embeddings(const std::vector<EmbeddingRow>& rows, std::size_t dim);
std::vector<EmbeddingRow> parse_embeddings(std::string_view text, const std::string& source);
std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

/// Labeled rows of one task.
LabeledSet select_task(const std::vector<EmbeddingRow>& rows, Task task);

}  // namespace geosdg::knn
