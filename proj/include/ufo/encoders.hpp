#pragma once

#include "ufo/numerics.hpp"
#include "ufo/synthworld.hpp"

namespace ufo {

// Two-tower architecture: a frozen foreground featurizer shared by every
// mode, and a trainable background encoder mapping into the same unit
// sphere. The hole's aspect ratio enters the background input as two extra
// entries (log aspect, 1).

struct ForegroundEncoder {
  MlpParams frozen_map;  // feature_dim -> hidden -> embed_dim
  int out_dim = 0;

  static ForegroundEncoder make(int feature_dim, int hidden, int embed_dim,
                                std::uint64_t seed);
  std::uint64_t weight_hash() const { return frozen_map.weight_hash(); }
};

struct BackgroundEncoder {
  MlpParams trainable_map;  // (context_dim + 2) -> hidden -> embed_dim
  int out_dim = 0;

  static BackgroundEncoder make(int context_dim, int hidden, int embed_dim,
                                std::uint64_t seed);
  std::uint64_t weight_hash() const { return trainable_map.weight_hash(); }
};

Vec background_input(const BackgroundQuery& b);

Vec embed_foreground(const ForegroundEncoder& e, const ForegroundObject& f);
Vec embed_background(const BackgroundEncoder& e, const BackgroundQuery& b);

// Unit-row matrix of the whole catalog, row i = embedding of foreground id i.
Mat embed_foreground_catalog(const ForegroundEncoder& e,
                             const std::vector<ForegroundObject>& catalog);

double compatibility(const Vec& e_b, const Vec& e_f);

}  // namespace ufo
