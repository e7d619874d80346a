#include "crossview/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "crossview/ops.hpp"

namespace crossview::evaluation {

double top1_accuracy(const std::vector<std::size_t>& pred,
                     const std::vector<std::size_t>& gold) {
  if (pred.size() != gold.size())
    fail(ErrKind::parameter, "top1_accuracy: label lists differ in length");
  if (pred.empty()) fail(ErrKind::parameter, "top1_accuracy: empty label lists");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

MapResult mean_average_precision(const Mat& scores,
                                 const std::vector<std::vector<std::uint32_t>>& gold) {
  const std::size_t n = scores.rows;
  const std::size_t c_count = scores.cols;
  if (n == 0 || c_count == 0)
    fail(ErrKind::parameter, "mean_average_precision: empty score matrix");
  if (gold.size() != n)
    fail(ErrKind::parameter, "mean_average_precision: label count does not match rows");
  for (const auto& labels : gold)
    for (const auto c : labels)
      if (c >= c_count)
        fail(ErrKind::reference, "label " + std::to_string(c) + " outside the score matrix");

  MapResult res;
  res.per_class_ap.assign(c_count, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) {
    std::vector<char> positive(n, 0);
    std::size_t pos_count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::find(gold[i].begin(), gold[i].end(), static_cast<std::uint32_t>(c)) !=
          gold[i].end()) {
        positive[i] = 1;
        ++pos_count;
      }
    if (pos_count == 0) {
      res.skipped.push_back(c);
      continue;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores.at(a, c) > scores.at(b, c);
    });
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r)
      if (positive[order[r]]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    ap /= static_cast<double>(pos_count);
    res.per_class_ap[c] = ap;
    res.evaluated.push_back(c);
    total += ap;
  }
  if (res.evaluated.empty())
    fail(ErrKind::parameter, "mean_average_precision: no class has a positive example");
  res.map = total / static_cast<double>(res.evaluated.size());
  return res;
}

std::vector<std::vector<RetrievalHit>> retrieve_topk(const Mat& queries, const Mat& gallery,
                                                     std::size_t k) {
  if (gallery.rows == 0) fail(ErrKind::parameter, "retrieve_topk: empty gallery");
  if (k < 1 || k > gallery.rows)
    fail(ErrKind::parameter, "retrieve_topk: k " + std::to_string(k) +
                                 " out of range [1," + std::to_string(gallery.rows) + "]");
  if (queries.cols != gallery.cols)
    fail(ErrKind::dimension, "retrieve_topk: query dim does not match gallery dim");
  for (std::size_t r = 0; r < queries.rows; ++r)
    if (!numcore::is_unit(queries.row(r), queries.cols))
      fail(ErrKind::contract, "query row " + std::to_string(r) + " is not unit norm");
  for (std::size_t r = 0; r < gallery.rows; ++r)
    if (!numcore::is_unit(gallery.row(r), gallery.cols))
      fail(ErrKind::contract, "gallery row " + std::to_string(r) + " is not unit norm");

  std::vector<std::vector<RetrievalHit>> out(queries.rows);
  for (std::size_t qi = 0; qi < queries.rows; ++qi) {
    std::vector<RetrievalHit> all(gallery.rows);
    for (std::size_t g = 0; g < gallery.rows; ++g) {
      double sim = 0.0;
      const double* a = queries.row(qi);
      const double* b = gallery.row(g);
      for (std::size_t d = 0; d < gallery.cols; ++d) sim += a[d] * b[d];
      all[g] = {g, sim};
    }
    std::stable_sort(all.begin(), all.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
      return a.sim > b.sim;
    });
    all.resize(k);
    out[qi] = std::move(all);
  }
  return out;
}

}  // namespace crossview::evaluation
