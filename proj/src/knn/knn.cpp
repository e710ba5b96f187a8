#include "geosdg/knn/knn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "geosdg/csv.hpp"
#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::knn {

KnnIndex build_index(std::vector<std::vector<float>> embeddings, std::vector<int> labels, std::vector<std::string> ids,
                     Task task) {
  if (embeddings.empty()) throw InvalidValue("build_index: no rows");
  if (labels.size() != embeddings.size() || ids.size() != embeddings.size()) {
    throw ShapeError("build_index: " + std::to_string(embeddings.size()) + " rows, " + std::to_string(labels.size()) +
                     " labels, " + std::to_string(ids.size()) + " ids");
  }
  KnnIndex idx;
  idx.dim_ = embeddings.front().size();
  if (idx.dim_ == 0) throw ShapeError("build_index: zero-length embeddings");
  idx.task_ = task;
  idx.data_.reserve(embeddings.size() * idx.dim_);
  std::unordered_set<std::string> seen;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != idx.dim_) {
      throw ShapeError("build_index: row " + ids[i] + " has dim " + std::to_string(embeddings[i].size()) +
                       ", expected " + std::to_string(idx.dim_));
    }
    if (labels[i] != 0 && labels[i] != 1) throw InvalidValue("build_index: label of " + ids[i] + " is not 0/1");
    if (!seen.insert(ids[i]).second) throw InvalidValue("build_index: duplicate row id " + ids[i]);
    for (float v : embeddings[i])
      if (!std::isfinite(v)) throw InvalidValue("build_index: non-finite value in row " + ids[i]);
    idx.data_.insert(idx.data_.end(), embeddings[i].begin(), embeddings[i].end());
    positives += static_cast<std::size_t>(labels[i]);
  }
  idx.labels_ = std::move(labels);
  idx.ids_ = std::move(ids);
  if (positives == 0 || positives == idx.size()) {
    idx.degenerate_ = true;
    idx.warning_ = "DegenerateIndex: all " + std::to_string(idx.size()) + " rows carry label " +
                   std::to_string(idx.labels_.front());
  }
  return idx;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    s += static_cast<double>(d) * static_cast<double>(d);
  }
  return s;
}

namespace {

// First k rows in (squared distance, id) order.
std::vector<std::pair<double, std::size_t>> nearest(const KnnIndex& index, std::span<const float> query,
                                                    std::size_t k) {
  if (query.size() != index.dim()) {
    throw ShapeError("classify: query dim " + std::to_string(query.size()) + ", index dim " +
                     std::to_string(index.dim()));
  }
  std::vector<std::pair<double, std::size_t>> d(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) d[i] = {squared_distance(index.row(i), query), i};
  auto less = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return index.id(a.second) < index.id(b.second);
  };
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end(), less);
  d.resize(k);
  return d;
}

int vote(const KnnIndex& index, const std::vector<std::pair<double, std::size_t>>& nn, std::size_t k,
         std::size_t votes[2]) {
  votes[0] = votes[1] = 0;
  for (std::size_t i = 0; i < k; ++i) ++votes[index.label(nn[i].second)];
  if (votes[1] != votes[0]) return votes[1] > votes[0] ? 1 : 0;
  return index.label(nn.front().second);
}

void check_k(const KnnIndex& index, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw ConfigError("k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "] (index size)");
  }
}

}  // namespace

Classification classify(const KnnIndex& index, std::span<const float> query, std::size_t k) {
  check_k(index, k);
  const auto nn = nearest(index, query, k);
  Classification c;
  c.label = vote(index, nn, k, c.votes);
  for (const auto& [d2, row] : nn) c.neighbors.push_back({row, index.id(row), std::sqrt(d2)});
  return c;
}

MetricsReport evaluate(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  MetricsReport m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((predictions[i] != 0 && predictions[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
      throw InvalidValue("evaluate: values must be 0 or 1");
    }
    if (predictions[i] == 1) {
      ++(truth[i] == 1 ? m.tp : m.fp);
    } else {
      ++(truth[i] == 1 ? m.fn : m.tn);
    }
  }
  const auto total = static_cast<double>(truth.size());
  m.accuracy = total > 0 ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  if (m.tp + m.fp == 0) {
    m.precision_zero_denominator = true;
  } else {
    m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  }
  if (m.tp + m.fn == 0) {
    m.recall_zero_denominator = true;
  } else {
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  }
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

SweepResult sweep_k(const KnnIndex& index, const LabeledSet& validation, const std::vector<std::size_t>& ks) {
  if (validation.embeddings.empty()) throw InvalidValue("sweep_k: empty validation set");
  if (validation.labels.size() != validation.embeddings.size() || validation.ids.size() != validation.embeddings.size()) {
    throw ShapeError("sweep_k: validation rows, labels and ids differ in length");
  }
  if (ks.empty()) throw ConfigError("sweep_k: no k values");
  std::size_t max_k = 0;
  for (auto k : ks) {
    check_k(index, k);
    max_k = std::max(max_k, k);
  }
  std::unordered_set<std::string> index_ids;
  for (std::size_t i = 0; i < index.size(); ++i) index_ids.insert(index.id(i));
  for (const auto& id : validation.ids)
    if (index_ids.count(id)) throw InvalidValue("sweep_k: validation id " + id + " is also in the index");

  std::vector<std::vector<int>> preds(ks.size(), std::vector<int>(validation.embeddings.size()));
  for (std::size_t q = 0; q < validation.embeddings.size(); ++q) {
    const auto nn = nearest(index, validation.embeddings[q], max_k);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      std::size_t votes[2];
      preds[j][q] = vote(index, nn, ks[j], votes);
    }
  }
  SweepResult s;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    auto m = evaluate(preds[j], validation.labels);
    m.k = ks[j];
    m.task = index.task();
    s.rows.push_back(m);
  }
  const MetricsReport* best = &s.rows.front();
  for (const auto& r : s.rows) {
    if (r.accuracy > best->accuracy || (r.accuracy == best->accuracy && r.f1 > best->f1) ||
        (r.accuracy == best->accuracy && r.f1 == best->f1 && r.k < best->k)) {
      best = &r;
    }
  }
  s.best_k = best->k;
  return s;
}

std::string format_sweep(const SweepResult& s) {
  std::string out = "k,accuracy,precision,recall,f1\n";
  for (const auto& r : s.rows) {
    out += csv::join({std::to_string(r.k), csv::shortest(r.accuracy), csv::shortest(r.precision),
                      csv::shortest(r.recall), csv::shortest(r.f1)}) +
           "\n";
  }
  return out;
}

std::string format_embeddings(const std::vector<EmbeddingRow>& rows, std::size_t dim) {
  std::string out = "row_id,task,label,dim";
  for (std::size_t i = 0; i < dim; ++i) out += ",e_" + std::to_string(i);
  out += '\n';
  for (const auto& r : rows) {
    if (r.values.size() != dim) throw ShapeError("format_embeddings: row " + r.row_id + " has the wrong dim");
    out += r.row_id + ',' + r.task + ',' + (r.label ? std::to_string(*r.label) : std::string()) + ',' +
           std::to_string(dim);
    for (float v : r.values) out += ',' + csv::shortest(v);
    out += '\n';
  }
  return out;
}

std::vector<EmbeddingRow> parse_embeddings(std::string_view text, const std::string& source) {
  const auto t = csv::parse(text, source);
  csv::require_header_prefix(t, {"row_id", "task", "label", "dim"});
  const std::size_t dim = t.header.size() - 4;
  for (std::size_t i = 0; i < dim; ++i) {
    if (t.header[4 + i] != "e_" + std::to_string(i)) throw FormatError(source + ": bad embedding column header");
  }
  std::vector<EmbeddingRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EmbeddingRow r;
    r.row_id = t.rows[i][0];
    r.task = t.rows[i][1];
    if (!t.rows[i][2].empty()) r.label = csv::to_bool01(t, i, 2) ? 1 : 0;
    if (static_cast<std::size_t>(csv::to_int(t, i, 3)) != dim) {
      throw FormatError(source + " row " + std::to_string(t.lines[i]) + ": dim column disagrees with header");
    }
    r.values.reserve(dim);
    for (std::size_t j = 0; j < dim; ++j) r.values.push_back(csv::to_float(t, i, 4 + j));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(io::read_file(path), path.string());
}

LabeledSet select_task(const std::vector<EmbeddingRow>& rows, Task task) {
  LabeledSet s;
  for (const auto& r : rows) {
    if (!r.label || r.task.empty() || ingest::parse_task(r.task) != task) continue;
    s.embeddings.push_back(r.values);
    s.labels.push_back(*r.label);
    s.ids.push_back(r.row_id);
  }
  return s;
}

}  // namespace geosdg::knn
