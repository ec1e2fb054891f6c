#pragma once

#include <span>
#include <vector>

#include "ufo/common.hpp"

namespace ufo {

// ---------------------------------------------------------------------------
// l2 normalization and cosine compatibility. Embeddings live on the unit
// sphere; cosine output is clamped to [-1, 1] so the hinge loss never sees
// |C| > 1 from rounding drift.
// ---------------------------------------------------------------------------

inline constexpr double kZeroNormEps = 1e-12;

Vec l2_normalize(const Vec& v);

double cosine(const Vec& a, const Vec& b);

inline bool is_unit(const Vec& v, double tol = 1e-9) {
  return std::abs(v.norm() - 1.0) <= tol;
}

// ---------------------------------------------------------------------------
// Fixed-topology MLP. Batches are row-major: one sample per row, so a layer
// computes A = act(X * W^T + 1 b^T) with W of shape out x in.
// ---------------------------------------------------------------------------

enum class Activation { identity = 0, relu = 1, sigmoid = 2 };

struct MlpLayer {
  Mat W;  // out x in
  Vec b;  // out
  Activation act = Activation::identity;
};

struct MlpParams {
  std::vector<MlpLayer> layers;

  Index in_dim() const { return layers.front().W.cols(); }
  Index out_dim() const { return layers.back().W.rows(); }
  std::size_t param_count() const;

  // Checks dimension chaining and finiteness.
  void validate() const;

  // FNV over the raw weight bytes in layer order; frozen-tower checks.
  std::uint64_t weight_hash() const;
};

// Glorot-uniform weights, zero biases, deterministic draw order (W row-major
// per layer, then b).
MlpParams make_mlp(std::span<const int> dims, std::span<const Activation> acts,
                   std::uint64_t seed);

struct LayerGrad {
  Mat dW;
  Vec db;
};

struct MlpGrads {
  std::vector<LayerGrad> layers;

  void scale(double s);
  void accumulate(const MlpGrads& other);
  static MlpGrads zeros_like(const MlpParams& p);
};

// Per-layer pre-activations and activations for one batch.
struct MlpForwardCache {
  std::vector<Mat> pre;   // Z_k, rows = batch
  std::vector<Mat> post;  // act(Z_k)
};

Vec mlp_forward(const MlpParams& p, const Vec& x);
Mat mlp_forward(const MlpParams& p, const Mat& X);
Mat mlp_forward_cached(const MlpParams& p, const Mat& X, MlpForwardCache& cache);

// Reverse-mode gradients of sum_i upstream_i . f(x_i) with respect to every
// parameter; optionally also d/dX. `cache` must come from mlp_forward_cached
// on the same (p, X).
MlpGrads mlp_backward(const MlpParams& p, const Mat& X, const MlpForwardCache& cache,
                      const Mat& upstream, Mat* grad_input = nullptr);

// Single-sample convenience overload.
MlpGrads mlp_backward(const MlpParams& p, const Vec& x, const Vec& upstream,
                      Vec* grad_input = nullptr);

// Same, but `upstream` is taken with respect to the last layer's
// pre-activation. Used when the loss is fused with the final activation
// (sigmoid cross-entropy on logits).
MlpGrads mlp_backward_from_logits(const MlpParams& p, const Mat& X,
                                  const MlpForwardCache& cache, const Mat& upstream,
                                  Mat* grad_input = nullptr);

// Gradient of cosine(normalize(y), e) with respect to the pre-normalization
// vector y, given unit e. Shared by the trainer and the gradient checks.
Vec normalize_cosine_backward(const Vec& y, const Vec& unit_other);

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<LayerGrad> m;  // first moments, shaped like the gradients
  std::vector<LayerGrad> v;  // second moments, entrywise >= 0
  AdamConfig hp;

  static AdamState init(const MlpParams& p, AdamConfig hp);
};

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads);

}  // namespace ufo
