#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ufo/trainer.hpp"
#include "ufo/vindex.hpp"

namespace ufo {

// Evaluation harness: mAP (top-100 and all-retrieval), Precision@K,
// diversity over the top 25, the Shape and Discriminator Only baselines,
// and the full ablation matrix.

inline constexpr std::size_t kNoCutoff = std::numeric_limits<std::size_t>::max();

// Non-interpolated AP: mean of precision-at-hit over relevant items within
// the cutoff, denominator min(|relevant|, cutoff).
double average_precision(const RankedList& ranking,
                         const std::unordered_set<ObjectId>& relevant,
                         std::size_t cutoff);

struct MeanApResult {
  std::map<int, double> per_category;  // category -> mean AP of its queries
  double overall = 0.0;                // unweighted mean over categories
};

// Query category = its original object's category.
MeanApResult mean_ap(const std::vector<RankedList>& rankings, const World& world,
                     std::size_t cutoff);

double precision_at_k(const RankedList& ranking, const World& world,
                      const BackgroundQuery& b, int k);

// Distinct categories spanned by oracle-compatible objects in the top 25.
int diversity_top25(const RankedList& ranking, const World& world,
                    const BackgroundQuery& b);

RankedList shape_baseline_rank(const BackgroundQuery& b,
                               const std::vector<ForegroundObject>& catalog);

// Scores the entire catalog with the coupled discriminator; wall_ms (when
// given) receives the total scoring time for this query.
RankedList discriminator_only_rank(const Discriminator& d, const World& world,
                                   const BackgroundQuery& b, double* wall_ms = nullptr);

enum class EvalMode {
  ufo,
  no_discriminator,
  regression,
  no_bg_training,
  discriminator_only,
  shape
};

EvalMode eval_mode_from_string(const std::string& s);
std::string to_string(EvalMode mode);

struct EvalParams {
  int map_cutoff = 100;
  bool map_all = true;  // also report the all-retrieval mAP variant
  std::vector<int> ks = {5, 10, 15, 20, 25};
};

struct ModeMetrics {
  EvalMode mode = EvalMode::ufo;
  std::map<int, double> per_category_map;
  double overall_map = 0.0;
  std::optional<double> overall_map_all;
  std::map<int, double> p_at_k;
  double diversity_mean = 0.0;
  double diversity_std = 0.0;
  // Wall-clock only; excluded from the deterministic report records.
  double mean_query_us = 0.0;
  double p99_query_us = 0.0;
};

// Metrics for one mode from full-depth rankings of the eval queries
// (rankings[i] corresponds to world.eval_bg_ids[i]).
ModeMetrics evaluate_rankings(EvalMode mode, const std::vector<RankedList>& rankings,
                              const World& world, const EvalParams& params);

// Embed each eval query and retrieve `depth` entries from the index.
std::vector<RankedList> rank_eval_queries(const BackgroundEncoder& encoder,
                                          const World& world, const VectorIndex& index,
                                          int depth, double* mean_us = nullptr,
                                          double* p99_us = nullptr);

struct AblationConfig {
  TrainConfig train;      // shared across modes; mode field is overridden
  DiscTrainConfig disc;
  SamplingConfig sampling;
  EvalParams eval;
  int enc_hidden = 256;
  int embed_dim = 128;
  int disc_h1 = 128;
  int disc_h2 = 64;
  std::uint64_t seed = 0;
};

// Trains what each mode needs (discriminator, triplets, encoder) on the
// shared world and evaluates all modes under identical eval queries.
std::vector<ModeMetrics> run_ablation_matrix(const World& world,
                                             const std::vector<EvalMode>& modes,
                                             const AblationConfig& cfg);

// Table-1-style aligned table (category columns + overall) plus P@K and
// diversity blocks.
std::string metrics_table(const std::vector<ModeMetrics>& metrics, int n_categories);
// Machine-readable line records; wall-times are deliberately not included.
std::string metrics_records(const std::vector<ModeMetrics>& metrics);
std::string timing_records(const std::vector<ModeMetrics>& metrics);

}  // namespace ufo
