#pragma once

#include <string>
#include <vector>

#include "ufo/common.hpp"

namespace ufo {

// ---------------------------------------------------------------------------
// Synthetic scene world with an exactly checkable compatibility oracle:
// a foreground f is compatible with a background b iff the category of f is
// allowed for b's context type AND the aspect ratios agree within the
// configured jitter:  |log(f.aspect / b.hole_aspect)| <= log(1 + jitter).
// ---------------------------------------------------------------------------

struct WorldConfig {
  int n_categories = 8;
  int n_backgrounds = 2000;
  int n_foregrounds = 5000;
  int feature_dim = 128;
  int context_dim = 128;
  double noise_sigma = 0.1;
  // n_context_types x n_categories, entries 0/1. Scene types outnumber
  // object categories; several contexts admit the same category mix.
  std::vector<std::vector<int>> compat_table;
  double aspect_jitter = 0.5;
  std::uint64_t seed = 0;
  double train_fraction = 0.9;

  int n_context_types() const { return int(compat_table.size()); }
  void validate() const;

  // Default table: 32 seeded context types over 8 categories, each
  // compatible with an anchor category plus 1-2 extras, so most contexts
  // admit multi-category retrieval.
  static WorldConfig defaults(std::uint64_t seed);
  static std::vector<std::vector<int>> default_compat_table(int n_context_types,
                                                            int n_categories,
                                                            std::uint64_t seed);
};

struct ForegroundObject {
  ObjectId id = 0;
  int category = 0;
  double aspect_ratio = 1.0;  // width / height, in [0.1, 10]
  Vec feature;
  Vec latent_style;  // generation-only; never shown to learners
};

struct BackgroundQuery {
  ObjectId id = 0;
  int context_type = 0;
  double hole_aspect_ratio = 1.0;
  Vec context_feature;
  ObjectId original_object_id = 0;
  std::vector<ObjectId> oracle_compatible_ids;  // sorted; eval split on disk
  bool eval_split = false;
};

struct World {
  WorldConfig cfg;
  std::vector<ForegroundObject> foregrounds;  // index == id
  std::vector<BackgroundQuery> backgrounds;   // index == id
  std::vector<ObjectId> train_bg_ids;
  std::vector<ObjectId> eval_bg_ids;
  double mean_oracle_set_size = 0.0;

  const ForegroundObject& fg(ObjectId id) const;
  const BackgroundQuery& bg(ObjectId id) const;

  // Pure function of the compat table and the aspect rule; throws
  // WorldMismatchError when either object is not this world's.
  bool oracle_label(const BackgroundQuery& b, const ForegroundObject& f) const;

  Mat foreground_features() const;  // n_fg x feature_dim
  Mat background_features() const;  // n_bg x context_dim
};

World generate_world(const WorldConfig& cfg);

// Catalog files: line-delimited name:value records; features go to the
// binary matrix files; oracle sets are emitted for the eval split only.
void write_world(const World& world, const std::string& dir,
                 const std::string& config_line);
World read_world(const WorldConfig& cfg, const std::string& dir);

// Aspect-gate half of the oracle, shared with the Shape baseline tests.
bool aspect_compatible(double fg_aspect, double hole_aspect, double jitter);

}  // namespace ufo
