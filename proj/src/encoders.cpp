#include "ufo/encoders.hpp"

#include <array>
#include <cmath>

namespace ufo {

ForegroundEncoder ForegroundEncoder::make(int feature_dim, int hidden, int embed_dim,
                                          std::uint64_t seed) {
  const std::array<int, 3> dims{feature_dim, hidden, embed_dim};
  const std::array<Activation, 2> acts{Activation::relu, Activation::identity};
  ForegroundEncoder e;
  e.frozen_map = make_mlp(dims, acts, seed);
  e.out_dim = embed_dim;
  return e;
}

BackgroundEncoder BackgroundEncoder::make(int context_dim, int hidden, int embed_dim,
                                          std::uint64_t seed) {
  const std::array<int, 3> dims{context_dim + 2, hidden, embed_dim};
  const std::array<Activation, 2> acts{Activation::relu, Activation::identity};
  BackgroundEncoder e;
  e.trainable_map = make_mlp(dims, acts, seed);
  e.out_dim = embed_dim;
  return e;
}

Vec background_input(const BackgroundQuery& b) {
  Vec x(b.context_feature.size() + 2);
  x.head(b.context_feature.size()) = b.context_feature;
  x[b.context_feature.size()] = std::log(b.hole_aspect_ratio);
  x[b.context_feature.size() + 1] = 1.0;
  return x;
}

Vec embed_foreground(const ForegroundEncoder& e, const ForegroundObject& f) {
  return l2_normalize(mlp_forward(e.frozen_map, f.feature));
}

Vec embed_background(const BackgroundEncoder& e, const BackgroundQuery& b) {
  return l2_normalize(mlp_forward(e.trainable_map, background_input(b)));
}

Mat embed_foreground_catalog(const ForegroundEncoder& e,
                             const std::vector<ForegroundObject>& catalog) {
  if (catalog.empty()) return Mat(0, e.out_dim);
  Mat inputs(Index(catalog.size()), catalog.front().feature.size());
  for (const auto& f : catalog) inputs.row(Index(f.id)) = f.feature.transpose();
  Mat out = mlp_forward(e.frozen_map, inputs);
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (!(norm > kZeroNormEps)) {
      throw ZeroVectorError("catalog embedding " + std::to_string(i) + " has zero norm");
    }
    out.row(i) /= norm;
  }
  return out;
}

double compatibility(const Vec& e_b, const Vec& e_f) { return cosine(e_b, e_f); }

}  // namespace ufo
