#pragma once

#include <cstdint>
#include <vector>

#include "crossview/tensor.hpp"

namespace crossview::evaluation {

using numcore::Mat;
using numcore::Vec;

double top1_accuracy(const std::vector<std::size_t>& pred,
                     const std::vector<std::size_t>& gold);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_class_ap;     // 0 for skipped classes
  std::vector<std::size_t> evaluated;   // classes with at least one positive
  std::vector<std::size_t> skipped;     // classes without positives, reported not scored
};

// AP per class: rank rows by score descending (ties by lowest index), average
// the precision at each positive rank. mAP averages the evaluated classes.
MapResult mean_average_precision(const Mat& scores,
                                 const std::vector<std::vector<std::uint32_t>>& gold);

struct RetrievalHit {
  std::size_t index = 0;
  double sim = 0.0;
};

// Exact cosine top-k per query row; ties broken by lower gallery index.
std::vector<std::vector<RetrievalHit>> retrieve_topk(const Mat& queries, const Mat& gallery,
                                                     std::size_t k);

}  // namespace crossview::evaluation
