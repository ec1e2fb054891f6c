#pragma once

#include <string>
#include <vector>

#include "ufo/numerics.hpp"
#include "ufo/ranking.hpp"

namespace ufo {

// Vector index over unit-norm rows: exact brute force, or an inverted-file
// over spherical k-means cells probing only the n_probe nearest cells.

enum class IndexKind { exact = 0, clustered = 1 };

struct IndexParams {
  IndexKind kind = IndexKind::exact;
  int n_list = 0;  // 0 -> round(sqrt(N))
  int n_probe = 4;
  int kmeans_iters = 25;
  std::uint64_t seed = 0;
};

class VectorIndex {
 public:
  static VectorIndex build(const Mat& vectors, const std::vector<ObjectId>& ids,
                           const IndexParams& params);

  // Top-k by cosine descending, ties by ascending id. k is clamped to size().
  RankedList query(const Vec& q, int k) const;

  IndexKind kind() const { return kind_; }
  Index dim() const { return vectors_.cols(); }
  std::size_t size() const { return ids_.size(); }
  int n_list() const { return int(centroids_.rows()); }
  int n_probe() const { return n_probe_; }
  void set_n_probe(int n);

  void save(const std::string& path) const;
  static VectorIndex load(const std::string& path);

 private:
  IndexKind kind_ = IndexKind::exact;
  int n_probe_ = 4;
  Mat vectors_;                 // exact: input order; clustered: grouped by cell
  std::vector<ObjectId> ids_;   // aligned with vectors_ rows
  Mat centroids_;               // n_list x dim, unit rows (clustered only)
  std::vector<std::size_t> cell_offsets_;  // n_list + 1 (clustered only)

  void top_k_from_scores(const Vec& scores, std::size_t base, int k,
                         std::vector<std::pair<ObjectId, double>>& heap) const;
};

struct BenchReport {
  int n_queries = 0;
  int k = 0;
  double recall_at_k = 0.0;
  double mean_us_exact = 0.0, p99_us_exact = 0.0;
  double mean_us_clustered = 0.0, p99_us_clustered = 0.0;
};

// Runs the same queries against both indexes; recall is measured for the
// clustered index against the exact one. Scores/ids are deterministic,
// wall-times are not.
BenchReport bench(const VectorIndex& exact, const VectorIndex& clustered,
                  const Mat& queries, int k);

}  // namespace ufo
