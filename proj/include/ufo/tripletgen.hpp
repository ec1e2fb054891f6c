#pragma once

#include <span>
#include <string>
#include <vector>

#include "ufo/discriminator.hpp"
#include "ufo/vindex.hpp"

namespace ufo {

// Training-data generation: mine noisy positives/negatives per background
// through the discriminator, with candidate pools drawn from the objects of
// the k_c most similar backgrounds, the k_g foregrounds nearest the
// original object, and n_random uniform picks.

struct SamplingConfig {
  int k_c = 5;
  int k_g = 20;
  int n_random = 32;
  double t_high = 0.8;
  double t_low = 0.3;
  int max_probe = 1000;
  int max_triplets_per_bg = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Triplet {
  enum class Provenance { original = 0, mined = 1 };
  ObjectId background_id = 0;
  ObjectId positive_id = 0;
  ObjectId negative_id = 0;
  double pos_score = 0.0;
  double neg_score = 0.0;
  Provenance provenance = Provenance::original;
};

// Similarity indexes over raw unit-normalized features (not learned
// embeddings): backgrounds over the train split, foregrounds over the whole
// catalog.
struct SamplingIndexes {
  VectorIndex bg_index;
  VectorIndex fg_index;
};

SamplingIndexes build_sampling_indexes(const World& world);

// Probe order: fg-heuristic, then bg-heuristic, then random picks;
// de-duplicated keeping the first occurrence.
std::vector<ObjectId> build_candidate_pool(const World& world, const BackgroundQuery& b,
                                           const SamplingConfig& cfg,
                                           const VectorIndex& bg_index,
                                           const VectorIndex& fg_index);

// Positives: the original object plus pool members scoring above t_high;
// negatives: pool members scoring below t_low. Throws NoNegativesError when
// the filter admits no negative (callers skip and count the background).
std::vector<Triplet> mine_triplets(const World& world, const BackgroundQuery& b,
                                   std::span<const ObjectId> pool, const Discriminator& d,
                                   const SamplingConfig& cfg);

struct TripletGenSummary {
  std::size_t backgrounds_processed = 0;
  std::size_t backgrounds_skipped = 0;  // NoNegatives
  std::size_t original_triplets = 0;
  std::size_t mined_triplets = 0;
};

std::vector<Triplet> generate_triplets(const World& world, const Discriminator& d,
                                       const SamplingConfig& cfg,
                                       TripletGenSummary* summary = nullptr);

// Probes-to-first-mined-positive (the original object excluded) under the
// heuristic pool order versus a uniform random order. The heuristic order is
// completed with uniform picks past the pool so both arms probe up to
// max_probe candidates; trials with no positive by then are counted at
// max_probe (censored) and reported.
struct SpeedupReport {
  double avg_probes_heuristic = 0.0;
  double avg_probes_random = 0.0;
  int censored_heuristic = 0;
  int censored_random = 0;
  int n_backgrounds = 0;
};

SpeedupReport measure_sampling_speedup(const World& world, const Discriminator& d,
                                       const SamplingConfig& cfg, int n_backgrounds = 200);

void write_triplets(const std::string& path, std::span<const Triplet> triplets,
                    const std::string& config_line);
std::vector<Triplet> read_triplets(const std::string& path);

}  // namespace ufo
