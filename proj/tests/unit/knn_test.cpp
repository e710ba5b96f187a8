#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "geosdg/error.hpp"
#include "geosdg/knn/knn.hpp"
#include "geosdg/numerics/rng.hpp"

namespace {

using geosdg::Rng;
namespace knn = geosdg::knn;
using knn::Task;

std::string rid(std::size_t i) { return "r" + std::to_string(i); }

struct Instance {
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  std::vector<std::string> ids;
};

Instance random_instance(Rng& rng, std::size_t n, std::size_t dim) {
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> row(dim);
    // coarse grid values make exact distance ties common
    for (auto& v : row) v = static_cast<float>(rng.below(5)) * 0.5f;
    in.x.push_back(row);
    in.y.push_back(static_cast<int>(rng.below(2)));
    in.ids.push_back(rid(i));
  }
  return in;
}

// Exhaustive reference: all distances, stable order by (distance, id).
int brute_force(const Instance& in, const std::vector<float>& q, std::size_t k) {
  std::vector<std::pair<double, std::string>> d;
  for (std::size_t i = 0; i < in.x.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double diff = static_cast<double>(in.x[i][j]) - q[j];
      s += diff * diff;
    }
    d.emplace_back(s, in.ids[i]);
  }
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a] < d[b]; });
  std::size_t ones = 0;
  for (std::size_t i = 0; i < k; ++i) ones += in.y[order[i]];
  if (2 * ones == k) return in.y[order[0]];
  return 2 * ones > k ? 1 : 0;
}

TEST(Knn, AgreesWithBruteForce) {
  Rng rng(11);
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t n = 200 + rng.below(101), dim = 1 + rng.below(16);
    const auto in = random_instance(rng, n, dim);
    const auto idx = knn::build_index(in.x, in.y, in.ids, Task::piped_water);
    for (int qi = 0; qi < 10; ++qi) {
      std::vector<float> q(dim);
      for (auto& v : q) v = static_cast<float>(rng.below(5)) * 0.5f;
      for (std::size_t k : knn::kDefaultKs) {
        EXPECT_EQ(knn::classify(idx, q, k).label, brute_force(in, q, k)) << "instance " << inst << " k " << k;
      }
    }
  }
}

TEST(Knn, HandOrderedFivePoints) {
  // points on a line at distances 1..5 from the origin
  std::vector<std::vector<float>> x = {{1}, {2}, {3}, {4}, {5}};
  const auto idx = knn::build_index(x, {1, 1, 0, 0, 0}, {"a", "b", "c", "d", "e"}, Task::piped_water);
  const float q[] = {0};
  const auto c = knn::classify(idx, q, 3);
  EXPECT_EQ(c.label, 1);
  EXPECT_EQ(c.votes[1], 2u);
  EXPECT_EQ(c.votes[0], 1u);
  ASSERT_EQ(c.neighbors.size(), 3u);
  EXPECT_EQ(c.neighbors[2].id, "c");
  EXPECT_EQ(c.neighbors[2].distance, 3.0);
  EXPECT_EQ(knn::classify(idx, q, 5).label, 0);
}

TEST(Knn, SelfQueryAndErrors) {
  Rng rng(12);
  const auto in = random_instance(rng, 10, 3);
  const auto idx = knn::build_index(in.x, in.y, in.ids, Task::sewage);
  EXPECT_EQ(idx.size(), 10u);
  auto shifted = in.x[4];
  shifted[0] += 0.125f;  // break exact duplicates from the coarse grid
  auto x2 = in.x;
  x2[4] = shifted;
  const auto idx2 = knn::build_index(x2, in.y, in.ids, Task::sewage);
  const auto c = knn::classify(idx2, shifted, 1);
  EXPECT_EQ(c.label, in.y[4]);
  EXPECT_EQ(c.neighbors[0].distance, 0.0);
  EXPECT_THROW(knn::classify(idx, in.x[0], 0), geosdg::ConfigError);
  EXPECT_THROW(knn::classify(idx, in.x[0], 11), geosdg::ConfigError);
  EXPECT_THROW(knn::build_index({{1, 2}, {1}}, {0, 1}, {"a", "b"}, Task::sewage), geosdg::ShapeError);
  EXPECT_THROW(knn::build_index({{1}, {2}}, {0, 2}, {"a", "b"}, Task::sewage), geosdg::InvalidValue);
  EXPECT_THROW(knn::build_index({{1}, {2}}, {0, 1}, {"a", "a"}, Task::sewage), geosdg::InvalidValue);
  EXPECT_TRUE(knn::build_index({{1}, {2}}, {1, 1}, {"a", "b"}, Task::sewage).degenerate());
}

TEST(Knn, PredictionsIgnoreRowOrder) {
  Rng rng(13);
  auto in = random_instance(rng, 120, 4);
  const auto a = knn::build_index(in.x, in.y, in.ids, Task::piped_water);
  std::vector<std::size_t> perm(in.x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm.begin(), perm.end());
  Instance p;
  for (auto i : perm) {
    p.x.push_back(in.x[i]);
    p.y.push_back(in.y[i]);
    p.ids.push_back(in.ids[i]);
  }
  const auto b = knn::build_index(p.x, p.y, p.ids, Task::piped_water);
  for (int qi = 0; qi < 20; ++qi) {
    std::vector<float> q(4);
    for (auto& v : q) v = static_cast<float>(rng.below(5)) * 0.5f;
    for (std::size_t k : {1u, 4u, 10u}) {
      const auto ca = knn::classify(a, q, k), cb = knn::classify(b, q, k);
      EXPECT_EQ(ca.label, cb.label);
      for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(ca.neighbors[i].id, cb.neighbors[i].id);
    }
  }
}

// ---------------------------------------------------------------------------
// metrics

TEST(Metrics, HandComputedConfusion) {
  // TP=2, FP=1, FN=1, TN=6
  const std::vector<int> pred = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<int> truth = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  const auto m = knn::evaluate(pred, truth);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 6u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
}

TEST(Metrics, PerfectAndDegenerate) {
  const std::vector<int> t = {1, 0, 1};
  const auto m = knn::evaluate(t, t);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  const std::vector<int> zeros = {0, 0, 0};
  const auto d = knn::evaluate(zeros, t);
  EXPECT_EQ(d.precision, 0.0);
  EXPECT_TRUE(d.precision_zero_denominator);
  EXPECT_EQ(d.recall, 0.0);
  EXPECT_FALSE(d.recall_zero_denominator);
  EXPECT_THROW(knn::evaluate(zeros, std::vector<int>{0, 1}), geosdg::ShapeError);
}

// ---------------------------------------------------------------------------
// k sweep

TEST(Sweep, SmallKWinsOnTwoClusters) {
  // 10 positives near 0, 60 negatives near 10: k=50 is swamped by the large cluster
  Rng rng(14);
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  std::vector<std::string> ids;
  for (int i = 0; i < 70; ++i) {
    const bool pos = i < 10;
    x.push_back({static_cast<float>((pos ? 0 : 10) + rng.normal(0, 0.3)), static_cast<float>(rng.normal(0, 0.3))});
    y.push_back(pos);
    ids.push_back(rid(i));
  }
  const auto idx = knn::build_index(x, y, ids, Task::piped_water);
  knn::LabeledSet val;
  for (int i = 0; i < 20; ++i) {
    const bool pos = i % 2 == 0;
    val.embeddings.push_back({static_cast<float>((pos ? 0 : 10) + rng.normal(0, 0.3)), 0.0f});
    val.labels.push_back(pos);
    val.ids.push_back("v" + std::to_string(i));
  }
  const auto s = knn::sweep_k(idx, val, {50, 5});
  EXPECT_EQ(s.best_k, 5u);
  EXPECT_EQ(s.rows[1].accuracy, 1.0);
  EXPECT_EQ(s.rows[0].accuracy, 0.5);
}

TEST(Sweep, CopyOfIndexAtKOneIsPerfect) {
  Rng rng(15);
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  std::vector<std::string> ids;
  knn::LabeledSet val;
  for (int i = 0; i < 250; ++i) {
    std::vector<float> row(3);
    for (auto& v : row) v = static_cast<float>(rng.normal());
    x.push_back(row);
    y.push_back(static_cast<int>(rng.below(2)));
    ids.push_back(rid(i));
    val.embeddings.push_back(row);
    val.labels.push_back(y.back());
    val.ids.push_back("copy" + std::to_string(i));
  }
  const auto idx = knn::build_index(x, y, ids, Task::sewage);
  EXPECT_EQ(knn::sweep_k(idx, val, {1}).rows[0].accuracy, 1.0);
  const auto s = knn::sweep_k(idx, val);
  EXPECT_EQ(s.rows.size(), 5u);
  const auto text = knn::format_sweep(s);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  EXPECT_THROW(knn::sweep_k(idx, knn::LabeledSet{}), geosdg::InvalidValue);
  EXPECT_THROW(knn::sweep_k(idx, val, {251}), geosdg::ConfigError);
  knn::LabeledSet shared = val;
  shared.ids[0] = "r0";
  EXPECT_THROW(knn::sweep_k(idx, shared), geosdg::InvalidValue);
}

// ---------------------------------------------------------------------------
// embeddings CSV

TEST(Embeddings, RoundTripKeepsPredictions) {
  Rng rng(16);
  std::vector<knn::EmbeddingRow> rows;
  for (int i = 0; i < 40; ++i) {
    knn::EmbeddingRow r;
    r.row_id = rid(i);
    r.task = "piped_water";
    r.label = static_cast<int>(rng.below(2));
    for (int j = 0; j < 8; ++j) r.values.push_back(static_cast<float>(rng.normal()));
    rows.push_back(r);
  }
  rows.push_back({"unlabeled", "", std::nullopt, std::vector<float>(8, 0.5f)});
  const auto back = knn::parse_embeddings(knn::format_embeddings(rows, 8), "mem");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].values, rows[i].values);
    EXPECT_EQ(back[i].label, rows[i].label);
  }
  const auto a = knn::select_task(rows, Task::piped_water), b = knn::select_task(back, Task::piped_water);
  EXPECT_EQ(a.ids.size(), 40u);
  EXPECT_TRUE(knn::select_task(back, Task::sewage).ids.empty());
  const auto ia = knn::build_index(a.embeddings, a.labels, a.ids, Task::piped_water);
  const auto ib = knn::build_index(b.embeddings, b.labels, b.ids, Task::piped_water);
  for (int qi = 0; qi < 10; ++qi) {
    std::vector<float> q(8);
    for (auto& v : q) v = static_cast<float>(rng.normal());
    EXPECT_EQ(knn::classify(ia, q, 5).neighbors[4].id, knn::classify(ib, q, 5).neighbors[4].id);
  }
}

TEST(Embeddings, MalformedRows) {
  EXPECT_THROW(knn::parse_embeddings("row_id,task,label,dim,e_0\na,piped_water,1,1\n", "mem"), geosdg::FormatError);
  EXPECT_THROW(knn::parse_embeddings("row_id,task,label,dim,e_0\na,piped_water,1,1,x\n", "mem"), geosdg::FormatError);
}

}  // namespace
