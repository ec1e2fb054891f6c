#include "ufo/vindex.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "ufo/io.hpp"

namespace ufo {

namespace {

constexpr double kUnitRowTol = 1e-9;

void validate_rows(const Mat& vectors, const std::vector<ObjectId>& ids) {
  if (std::size_t(vectors.rows()) != ids.size()) {
    throw ShapeMismatchError("index build: rows vs ids count mismatch");
  }
  std::unordered_set<ObjectId> seen;
  seen.reserve(ids.size());
  for (ObjectId id : ids) {
    if (!seen.insert(id).second) {
      throw DuplicateIdError("index build: duplicate id " + std::to_string(id));
    }
  }
  for (Index i = 0; i < vectors.rows(); ++i) {
    if (std::abs(vectors.row(i).norm() - 1.0) > kUnitRowTol) {
      throw NonUnitRowError("index build: row " + std::to_string(i) +
                            " has norm " + format_double(vectors.row(i).norm()));
    }
  }
}

// Spherical k-means: assignment by max cosine (ties to the lowest cell),
// centroids renormalized each iteration, empty cells reseeded from the data.
std::vector<int> spherical_kmeans(const Mat& rows, int n_list, int iters,
                                  std::uint64_t seed, Mat& centroids) {
  const Index n = rows.rows();
  Rng rng(seed);
  // Seed centroids with distinct sampled rows.
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  centroids = Mat(n_list, rows.cols());
  for (int c = 0; c < n_list; ++c) centroids.row(c) = rows.row(Index(order[std::size_t(c)]));

  std::vector<int> assign(std::size_t(n), 0);
  for (int it = 0; it < iters; ++it) {
    const Mat scores = rows * centroids.transpose();  // n x n_list
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_s = scores(i, 0);
      for (int c = 1; c < n_list; ++c) {
        if (scores(i, c) > best_s) {
          best_s = scores(i, c);
          best = c;
        }
      }
      assign[std::size_t(i)] = best;
    }
    Mat sums = Mat::Zero(n_list, rows.cols());
    std::vector<int> counts(std::size_t(n_list), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[std::size_t(i)]) += rows.row(i);
      counts[std::size_t(assign[std::size_t(i)])]++;
    }
    for (int c = 0; c < n_list; ++c) {
      if (counts[std::size_t(c)] == 0) {
        centroids.row(c) = rows.row(Index(rng.below(std::uint64_t(n))));
        continue;
      }
      const double norm = sums.row(c).norm();
      if (norm > kZeroNormEps) {
        centroids.row(c) = sums.row(c) / norm;
      } else {
        centroids.row(c) = rows.row(Index(rng.below(std::uint64_t(n))));
      }
    }
  }
  // Final assignment against the final centroids.
  const Mat scores = rows * centroids.transpose();
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    double best_s = scores(i, 0);
    for (int c = 1; c < n_list; ++c) {
      if (scores(i, c) > best_s) {
        best_s = scores(i, c);
        best = c;
      }
    }
    assign[std::size_t(i)] = best;
  }
  return assign;
}

}  // namespace

VectorIndex VectorIndex::build(const Mat& vectors, const std::vector<ObjectId>& ids,
                               const IndexParams& params) {
  validate_rows(vectors, ids);
  VectorIndex idx;
  idx.kind_ = params.kind;
  idx.n_probe_ = params.n_probe;
  if (params.kind == IndexKind::exact || vectors.rows() == 0) {
    idx.vectors_ = vectors;
    idx.ids_ = ids;
    return idx;
  }

  const Index n = vectors.rows();
  int n_list = params.n_list > 0 ? params.n_list
                                 : std::max(1, int(std::lround(std::sqrt(double(n)))));
  n_list = std::min<int>(n_list, int(n));

  Mat centroids;
  const std::vector<int> assign =
      spherical_kmeans(vectors, n_list, params.kmeans_iters, params.seed, centroids);

  // Group rows by cell, ascending id inside each cell.
  std::vector<std::vector<std::size_t>> cells(static_cast<std::size_t>(n_list));
  for (Index i = 0; i < n; ++i) cells[std::size_t(assign[std::size_t(i)])].push_back(std::size_t(i));
  for (auto& cell : cells) {
    std::sort(cell.begin(), cell.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  }

  idx.vectors_ = Mat(n, vectors.cols());
  idx.ids_.resize(std::size_t(n));
  idx.centroids_ = centroids;
  idx.cell_offsets_.assign(std::size_t(n_list) + 1, 0);
  std::size_t pos = 0;
  for (int c = 0; c < n_list; ++c) {
    idx.cell_offsets_[std::size_t(c)] = pos;
    for (std::size_t src : cells[std::size_t(c)]) {
      idx.vectors_.row(Index(pos)) = vectors.row(Index(src));
      idx.ids_[pos] = ids[src];
      ++pos;
    }
  }
  idx.cell_offsets_[std::size_t(n_list)] = pos;
  return idx;
}

void VectorIndex::set_n_probe(int n) {
  if (n < 1) throw ValidationError("n_probe must be >= 1");
  n_probe_ = n;
}

void VectorIndex::top_k_from_scores(const Vec& scores, std::size_t base, int k,
                                    std::vector<std::pair<ObjectId, double>>& out) const {
  for (Index i = 0; i < scores.size(); ++i) {
    out.emplace_back(ids_[base + std::size_t(i)], std::clamp(scores[i], -1.0, 1.0));
  }
  (void)k;
}

RankedList VectorIndex::query(const Vec& q, int k) const {
  if (k < 1) throw ValidationError("query: k must be >= 1");
  if (ids_.empty()) throw EmptyIndexError("query on empty index");
  if (q.size() != dim()) {
    throw DimMismatchError("query: dim " + std::to_string(q.size()) + " vs index dim " +
                           std::to_string(dim()));
  }
  const int kk = std::min<int>(k, int(ids_.size()));

  std::vector<std::pair<ObjectId, double>> candidates;
  if (kind_ == IndexKind::exact) {
    const Vec scores = vectors_ * q;
    candidates.reserve(ids_.size());
    top_k_from_scores(scores, 0, kk, candidates);
  } else {
    const Vec cscores = centroids_ * q;
    std::vector<int> cells(std::size_t(centroids_.rows()));
    std::iota(cells.begin(), cells.end(), 0);
    const int probes = std::min<int>(n_probe_, int(cells.size()));
    std::partial_sort(cells.begin(), cells.begin() + probes, cells.end(),
                      [&](int a, int b) {
                        if (cscores[a] != cscores[b]) return cscores[a] > cscores[b];
                        return a < b;
                      });
    for (int p = 0; p < probes; ++p) {
      const std::size_t off = cell_offsets_[std::size_t(cells[std::size_t(p)])];
      const std::size_t len = cell_offsets_[std::size_t(cells[std::size_t(p)]) + 1] - off;
      if (len == 0) continue;
      const Vec scores = vectors_.middleRows(Index(off), Index(len)) * q;
      top_k_from_scores(scores, off, kk, candidates);
    }
  }

  const std::size_t take = std::min<std::size_t>(std::size_t(kk), candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + std::ptrdiff_t(take),
                    candidates.end(), ranked_before);
  candidates.resize(take);

  RankedList out;
  out.entries = std::move(candidates);
  return out;
}

// Snapshot layout: 24-byte header (magic "UFOI", kind, dim, N, n_list,
// n_probe), centroid block, id + inverted-list offset block, vector block.
// Vectors are stored as f32 and renormalized on load.
void VectorIndex::save(const std::string& path) const {
  std::string bytes;
  bytes.reserve(32 + std::size_t(vectors_.size()) * 4);
  auto put_u32 = [&](std::uint32_t v) { bytes.append(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { bytes.append(reinterpret_cast<const char*>(&v), 8); };
  bytes.append("UFOI", 4);
  put_u32(std::uint32_t(kind_));
  put_u32(std::uint32_t(dim()));
  put_u32(std::uint32_t(ids_.size()));
  put_u32(std::uint32_t(centroids_.rows()));
  put_u32(std::uint32_t(n_probe_));
  for (Index i = 0; i < centroids_.rows(); ++i) {
    for (Index j = 0; j < centroids_.cols(); ++j) {
      const float f = float(centroids_(i, j));
      bytes.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  for (ObjectId id : ids_) put_u64(id);
  for (std::size_t off : cell_offsets_) put_u64(off);
  for (Index i = 0; i < vectors_.rows(); ++i) {
    for (Index j = 0; j < vectors_.cols(); ++j) {
      const float f = float(vectors_(i, j));
      bytes.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  write_text_file(path, bytes);
}

VectorIndex VectorIndex::load(const std::string& path) {
  const std::string bytes = read_text_file(path);
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("truncated index snapshot: " + path);
  };
  auto get_u32 = [&]() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  };
  auto get_u64 = [&]() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  };
  need(4);
  if (bytes.compare(0, 4, "UFOI") != 0) throw IoError("bad magic in " + path);
  pos = 4;

  VectorIndex idx;
  idx.kind_ = IndexKind(get_u32());
  const std::uint32_t dim = get_u32();
  const std::uint32_t n = get_u32();
  const std::uint32_t n_list = get_u32();
  idx.n_probe_ = int(get_u32());

  idx.centroids_ = Mat(n_list, dim);
  for (std::uint32_t i = 0; i < n_list; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      float f;
      need(4);
      std::memcpy(&f, bytes.data() + pos, 4);
      pos += 4;
      idx.centroids_(i, j) = double(f);
    }
    const double norm = idx.centroids_.row(i).norm();
    if (norm > kZeroNormEps) idx.centroids_.row(i) /= norm;
  }
  idx.ids_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) idx.ids_[i] = get_u64();
  if (idx.kind_ == IndexKind::clustered) {
    idx.cell_offsets_.resize(std::size_t(n_list) + 1);
    for (auto& off : idx.cell_offsets_) off = get_u64();
  }
  idx.vectors_ = Mat(n, dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      float f;
      need(4);
      std::memcpy(&f, bytes.data() + pos, 4);
      pos += 4;
      idx.vectors_(i, j) = double(f);
    }
    const double norm = idx.vectors_.row(i).norm();
    if (norm > kZeroNormEps) idx.vectors_.row(i) /= norm;
  }
  return idx;
}

BenchReport bench(const VectorIndex& exact, const VectorIndex& clustered,
                  const Mat& queries, int k) {
  using Clock = std::chrono::steady_clock;
  BenchReport rep;
  rep.n_queries = int(queries.rows());
  rep.k = k;
  std::vector<double> us_exact, us_clustered;
  double recall_sum = 0.0;
  for (Index i = 0; i < queries.rows(); ++i) {
    const Vec q = queries.row(i).transpose();
    const auto t0 = Clock::now();
    const RankedList ex = exact.query(q, k);
    const auto t1 = Clock::now();
    const RankedList cl = clustered.query(q, k);
    const auto t2 = Clock::now();
    us_exact.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    us_clustered.push_back(std::chrono::duration<double, std::micro>(t2 - t1).count());
    std::unordered_set<ObjectId> truth;
    for (const auto& [id, s] : ex.entries) truth.insert(id);
    std::size_t hit = 0;
    for (const auto& [id, s] : cl.entries) hit += truth.count(id);
    recall_sum += truth.empty() ? 1.0 : double(hit) / double(truth.size());
  }
  auto p99 = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[std::size_t(std::ceil(0.99 * double(v.size()))) - 1];
  };
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  };
  rep.recall_at_k = queries.rows() ? recall_sum / double(queries.rows()) : 0.0;
  rep.mean_us_exact = mean(us_exact);
  rep.p99_us_exact = p99(us_exact);
  rep.mean_us_clustered = mean(us_clustered);
  rep.p99_us_clustered = p99(us_clustered);
  return rep;
}

}  // namespace ufo
