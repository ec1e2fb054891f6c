#pragma once

#include <utility>
#include <vector>

#include "ufo/common.hpp"

namespace ufo {

// Retrieval output: entries sorted by score descending, ties broken by
// ascending id so every ranking is a strict total order.
struct RankedList {
  ObjectId query_id = 0;
  std::vector<std::pair<ObjectId, double>> entries;
};

inline bool ranked_before(const std::pair<ObjectId, double>& a,
                          const std::pair<ObjectId, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

}  // namespace ufo
